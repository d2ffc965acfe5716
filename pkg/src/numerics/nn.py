"""
From-scratch multilayer perceptron: tanh hidden layers, identity output,
reverse-mode vector-Jacobian products and the Adam optimizer.

Inputs may be a single vector ``(n_in,)`` or a batch ``(batch, n_in)``.
Flat parameter layout is, layer by layer, the row-major weight matrix
``(n_out, n_in)`` followed by the bias ``(n_out,)``.
"""

from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np


@dataclass
class MlpParams:
    layer_dims: List[int]
    weights: List[np.ndarray]
    biases: List[np.ndarray]

    def __post_init__(self):
        self.layer_dims = [int(d) for d in self.layer_dims]
        self.validate()

    def validate(self) -> bool:
        _check_dims(self.layer_dims)
        if len(self.weights) != len(self.layer_dims) - 1 or len(self.biases) != len(self.layer_dims) - 1:
            raise ValueError("MLP needs one weight matrix and one bias per layer")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            expected = (self.layer_dims[i + 1], self.layer_dims[i])
            if w.shape != expected:
                raise ValueError(f"Layer {i} weight shape {w.shape} != {expected}")
            if b.shape != (self.layer_dims[i + 1],):
                raise ValueError(f"Layer {i} bias shape {b.shape} != ({self.layer_dims[i + 1]},)")
        return True

    @property
    def n_in(self) -> int:
        return self.layer_dims[0]

    @property
    def n_out(self) -> int:
        return self.layer_dims[-1]

    @property
    def param_count(self) -> int:
        return count_params(self.layer_dims)

    def flatten(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)

    @classmethod
    def unflatten(cls, layer_dims: Sequence[int], vector: np.ndarray) -> 'MlpParams':
        vector = np.asarray(vector, dtype=float)
        expected = count_params(layer_dims)
        if vector.shape != (expected,):
            raise ValueError(f"Expected {expected} parameters for dims {list(layer_dims)}, got {vector.shape}")
        weights, biases = [], []
        offset = 0
        for n_in, n_out in zip(layer_dims[:-1], layer_dims[1:]):
            size = n_in * n_out
            weights.append(vector[offset:offset + size].reshape(n_out, n_in).copy())
            offset += size
            biases.append(vector[offset:offset + n_out].copy())
            offset += n_out
        return cls(list(layer_dims), weights, biases)

    def to_dict(self) -> Dict[str, Any]:
        return {'layer_dims': list(self.layer_dims), 'params': self.flatten().tolist()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'MlpParams':
        return cls.unflatten(data['layer_dims'], np.asarray(data['params'], dtype=float))


def _check_dims(layer_dims: Sequence[int]) -> None:
    if len(layer_dims) < 2:
        raise ValueError(f"MLP needs at least input and output dims, got {list(layer_dims)}")
    if any(int(d) <= 0 for d in layer_dims):
        raise ValueError(f"All layer dims must be positive, got {list(layer_dims)}")


def count_params(layer_dims: Sequence[int]) -> int:
    return int(sum((layer_dims[i] + 1) * layer_dims[i + 1] for i in range(len(layer_dims) - 1)))


def mlp_init(layer_dims: Sequence[int], seed: int) -> MlpParams:
    """Gaussian weights scaled by 1/sqrt(fan_in), zero biases."""
    _check_dims(layer_dims)
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for n_in, n_out in zip(layer_dims[:-1], layer_dims[1:]):
        weights.append(rng.standard_normal((n_out, n_in)) / np.sqrt(n_in))
        biases.append(np.zeros(n_out))
    return MlpParams(list(layer_dims), weights, biases)


def _as_input(p: MlpParams, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (p.n_in,) or x.ndim > 2:
        raise ValueError(f"MLP expects input of size {p.n_in}, got shape {x.shape}")
    return x


def mlp_forward(p: MlpParams, x: np.ndarray, return_cache: bool = False):
    """
    Evaluate the network.

    Returns:
        Output array, or ``(output, activations)`` where ``activations[i]`` is the
        input to layer ``i`` (so ``activations[0]`` is ``x``).
    """
    a = _as_input(p, x)
    activations = [a]
    last = len(p.weights) - 1
    for i, (w, b) in enumerate(zip(p.weights, p.biases)):
        z = a @ w.T + b
        a = np.tanh(z) if i < last else z
        activations.append(a)
    if return_cache:
        return a, activations
    return a


def mlp_vjp(p: MlpParams, x: np.ndarray, cotangent: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Reverse-mode product of ``cotangent`` with the network Jacobians.

    Returns:
        (flat parameter gradient summed over the batch, input gradient shaped like x)
    """
    _, activations = mlp_forward(p, x, return_cache=True)
    g = np.asarray(cotangent, dtype=float)
    if g.shape != activations[-1].shape:
        raise ValueError(f"Cotangent shape {g.shape} != output shape {activations[-1].shape}")
    last = len(p.weights) - 1
    grads: List[np.ndarray] = [None] * (2 * len(p.weights))
    for i in range(last, -1, -1):
        if i < last:
            g = g * (1.0 - activations[i + 1] ** 2)
        a_in = activations[i]
        if g.ndim == 1:
            grads[2 * i] = np.outer(g, a_in).ravel()
            grads[2 * i + 1] = g.copy()
        else:
            grads[2 * i] = (g.T @ a_in).ravel()
            grads[2 * i + 1] = g.sum(axis=0)
        g = g @ p.weights[i]
    return np.concatenate(grads), g


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: Optional[np.ndarray] = None
    v: Optional[np.ndarray] = None

    @classmethod
    def zeros(cls, n_params: int, **hyper) -> 'AdamState':
        return cls(m=np.zeros(n_params), v=np.zeros(n_params), **hyper)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'lr': self.lr, 'beta1': self.beta1, 'beta2': self.beta2, 'eps': self.eps,
            'step': self.step,
            'm': None if self.m is None else self.m.tolist(),
            'v': None if self.v is None else self.v.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'AdamState':
        return cls(
            lr=float(data['lr']), beta1=float(data['beta1']), beta2=float(data['beta2']),
            eps=float(data['eps']), step=int(data['step']),
            m=None if data.get('m') is None else np.asarray(data['m'], dtype=float),
            v=None if data.get('v') is None else np.asarray(data['v'], dtype=float),
        )


def adam_step(st: AdamState, params: np.ndarray, grads: np.ndarray) -> Tuple[np.ndarray, AdamState]:
    """Bias-corrected Adam update; returns new params and a new state."""
    params = np.asarray(params, dtype=float)
    grads = np.asarray(grads, dtype=float)
    if params.shape != grads.shape:
        raise ValueError(f"Parameter shape {params.shape} != gradient shape {grads.shape}")
    if not np.all(np.isfinite(grads)):
        raise ValueError("Non-finite gradient passed to Adam")
    m = np.zeros_like(params) if st.m is None else st.m
    v = np.zeros_like(params) if st.v is None else st.v
    if m.shape != params.shape:
        raise ValueError(f"Adam moments sized {m.shape} do not match parameters {params.shape}")
    step = st.step + 1
    m = st.beta1 * m + (1.0 - st.beta1) * grads
    v = st.beta2 * v + (1.0 - st.beta2) * grads * grads
    m_hat = m / (1.0 - st.beta1 ** step)
    v_hat = v / (1.0 - st.beta2 ** step)
    new_params = params - st.lr * m_hat / (np.sqrt(v_hat) + st.eps)
    return new_params, AdamState(st.lr, st.beta1, st.beta2, st.eps, step, m, v)
