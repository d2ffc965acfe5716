"""
Augmented latent neural-ODE model.

An encoder maps the initial augmented state and a short measurement prefix to
a latent vector, a dynamics MLP evolves the latent under exogenous signals
(time, measurement rate and, in control mode, the control fields), and a
decoder maps every latent back to ``[x, y, z, delta, gamma]``.

Gradients are computed with an adjoint pass: the latent trajectory and RK4
stage states are cached on the forward grid, the adjoint is carried backward
through the exact transpose of each RK4 step, and decoder-loss cotangents are
added at every grid point.

All operations accept a single trajectory or a batch sharing one grid.
"""
from dataclasses import dataclass
from typing import Any, Dict, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from ..numerics.integrate import IntegrationError, TimeGrid, rk4_step, rk4_step_vjp
from ..numerics.nn import MlpParams, mlp_forward, mlp_init, mlp_vjp

FILTERING = 'filtering'
CONTROL = 'control'
SIGNAL_CHANNELS = {
    FILTERING: ('t', 'dy'),
    CONTROL: ('t', 'ux', 'uy', 'dy'),
}
DEFAULT_SIGNAL_SCALE = {'t': 1.0, 'ux': 0.01, 'uy': 0.01, 'dy': 1.0}
AUGMENTED_DIM = 5


def _check_spec(signal_spec: str) -> Tuple[str, ...]:
    if signal_spec not in SIGNAL_CHANNELS:
        raise ValueError(f"Unsupported signal spec: {signal_spec}")
    return SIGNAL_CHANNELS[signal_spec]


@dataclass
class SignalTrack:
    """
    Exogenous samples on a grid, held constant within each step.

    ``values`` has shape ``(n_points, c)`` or ``(batch, n_points, c)`` with the
    non-time channels of the signal spec in order (the time channel is the
    integration time itself).
    """

    grid: TimeGrid
    values: np.ndarray
    signal_spec: str = FILTERING

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.validate()

    def validate(self) -> bool:
        channels = self.channels
        if self.values.ndim not in (2, 3):
            raise ValueError(f"Signal values must be 2-D or 3-D, got shape {self.values.shape}")
        if self.values.shape[-2] != self.grid.n_points:
            raise ValueError(f"Signal has {self.values.shape[-2]} samples, grid has {self.grid.n_points} points")
        if self.values.shape[-1] != len(channels):
            raise ValueError(f"Signal has {self.values.shape[-1]} channels, expected {channels}")
        return True

    @property
    def channels(self) -> Tuple[str, ...]:
        return _check_spec(self.signal_spec)[1:]

    @property
    def batched(self) -> bool:
        return self.values.ndim == 3

    @property
    def dy(self) -> np.ndarray:
        return self.values[..., self.channels.index('dy')]

    @classmethod
    def from_arrays(cls, grid: TimeGrid, dy: np.ndarray, controls: Optional[np.ndarray] = None,
                    signal_spec: str = FILTERING) -> 'SignalTrack':
        """Build from ``dy`` ``(..., n)`` and optional ``controls`` ``(..., n, 2)``."""
        dy = np.asarray(dy, dtype=float)
        if signal_spec == FILTERING:
            values = dy[..., None]
        else:
            if controls is None:
                controls = np.zeros(dy.shape + (2,))
            values = np.concatenate([np.asarray(controls, dtype=float), dy[..., None]], axis=-1)
        return cls(grid, values, signal_spec)

    @classmethod
    def from_trajectory(cls, traj, signal_spec: str = FILTERING) -> 'SignalTrack':
        return cls.from_arrays(traj.grid, traj.dy, traj.controls, signal_spec)

    @classmethod
    def from_dataset(cls, dataset, signal_spec: str = FILTERING, indices=None) -> 'SignalTrack':
        sub = dataset if indices is None else dataset.subset(indices)
        return cls.from_arrays(sub.grid, sub.stacked_dy(), sub.stacked_controls(), signal_spec)


@dataclass(frozen=True)
class LossWeights:
    kappa: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        if self.kappa < 0 or self.beta < 0:
            raise ValueError(f"Loss weights must be >= 0, got kappa={self.kappa}, beta={self.beta}")
        if self.kappa == 0 and self.beta == 0:
            raise ValueError("Loss weights kappa and beta cannot both be 0")


@dataclass
class AugmentedNodeModel:
    encoder: MlpParams
    dynamics: MlpParams
    decoder: MlpParams
    latent_dim: int
    signal_spec: str = FILTERING
    prefix_k: int = 10
    signal_scale: Tuple[float, ...] = None

    def __post_init__(self):
        channels = _check_spec(self.signal_spec)
        if self.signal_scale is None:
            self.signal_scale = tuple(DEFAULT_SIGNAL_SCALE[c] for c in channels)
        self.signal_scale = tuple(float(v) for v in self.signal_scale)
        self.validate()

    def validate(self) -> bool:
        d = self.latent_dim
        channels = _check_spec(self.signal_spec)
        if d < 1 or self.prefix_k < 1:
            raise ValueError(f"latent_dim and prefix_k must be >= 1, got {d}, {self.prefix_k}")
        if len(self.signal_scale) != len(channels):
            raise ValueError(f"signal_scale needs {len(channels)} entries for {channels}")
        if self.encoder.n_in != AUGMENTED_DIM + self.prefix_k or self.encoder.n_out != d:
            raise ValueError(f"Encoder dims {self.encoder.layer_dims} do not map {AUGMENTED_DIM}+{self.prefix_k} -> {d}")
        if self.dynamics.n_in != d + len(channels) or self.dynamics.n_out != d:
            raise ValueError(f"Dynamics dims {self.dynamics.layer_dims} do not map {d}+{len(channels)} -> {d}")
        if self.decoder.n_in != d or self.decoder.n_out != AUGMENTED_DIM:
            raise ValueError(f"Decoder dims {self.decoder.layer_dims} do not map {d} -> {AUGMENTED_DIM}")
        return True

    @property
    def channels(self) -> Tuple[str, ...]:
        return SIGNAL_CHANNELS[self.signal_spec]

    @property
    def param_count(self) -> int:
        return self.encoder.param_count + self.dynamics.param_count + self.decoder.param_count

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.encoder.flatten(), self.dynamics.flatten(), self.decoder.flatten()])

    def with_params(self, vector: np.ndarray) -> 'AugmentedNodeModel':
        vector = np.asarray(vector, dtype=float)
        if vector.shape != (self.param_count,):
            raise ValueError(f"Expected {self.param_count} parameters, got {vector.shape}")
        n_enc = self.encoder.param_count
        n_dyn = self.dynamics.param_count
        return AugmentedNodeModel(
            encoder=MlpParams.unflatten(self.encoder.layer_dims, vector[:n_enc]),
            dynamics=MlpParams.unflatten(self.dynamics.layer_dims, vector[n_enc:n_enc + n_dyn]),
            decoder=MlpParams.unflatten(self.decoder.layer_dims, vector[n_enc + n_dyn:]),
            latent_dim=self.latent_dim, signal_spec=self.signal_spec,
            prefix_k=self.prefix_k, signal_scale=self.signal_scale,
        )

    def architecture(self) -> Dict[str, Any]:
        return {
            'latent_dim': self.latent_dim,
            'prefix_k': self.prefix_k,
            'encoder_dims': list(self.encoder.layer_dims),
            'dynamics_dims': list(self.dynamics.layer_dims),
            'decoder_dims': list(self.decoder.layer_dims),
        }

    def to_dict(self) -> Dict[str, Any]:
        return {
            'architecture': self.architecture(),
            'signal_spec': self.signal_spec,
            'signal_scale': list(self.signal_scale),
            'params': {
                'encoder': self.encoder.flatten().tolist(),
                'dynamics': self.dynamics.flatten().tolist(),
                'decoder': self.decoder.flatten().tolist(),
            },
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'AugmentedNodeModel':
        arch = data['architecture']
        params = data['params']
        return cls(
            encoder=MlpParams.unflatten(arch['encoder_dims'], np.asarray(params['encoder'], dtype=float)),
            dynamics=MlpParams.unflatten(arch['dynamics_dims'], np.asarray(params['dynamics'], dtype=float)),
            decoder=MlpParams.unflatten(arch['decoder_dims'], np.asarray(params['decoder'], dtype=float)),
            latent_dim=int(arch['latent_dim']), signal_spec=data['signal_spec'],
            prefix_k=int(arch['prefix_k']), signal_scale=tuple(data['signal_scale']),
        )

    @classmethod
    def create(cls, latent_dim: int = 16, hidden: Sequence[int] = (64,), prefix_k: int = 10,
               signal_spec: str = FILTERING, seed: int = 0,
               signal_scale: Union[None, Mapping[str, float], Sequence[float]] = None) -> 'AugmentedNodeModel':
        """Randomly initialised model; each network gets its own child seed."""
        channels = _check_spec(signal_spec)
        if isinstance(signal_scale, Mapping):
            scale = {**DEFAULT_SIGNAL_SCALE, **signal_scale}
            signal_scale = tuple(float(scale[c]) for c in channels)
        hidden = [int(h) for h in hidden]
        enc_seed, dyn_seed, dec_seed = (int(s) for s in np.random.SeedSequence(seed).generate_state(3))
        return cls(
            encoder=mlp_init([AUGMENTED_DIM + prefix_k] + hidden + [latent_dim], enc_seed),
            dynamics=mlp_init([latent_dim + len(channels)] + hidden + [latent_dim], dyn_seed),
            decoder=mlp_init([latent_dim] + hidden + [AUGMENTED_DIM], dec_seed),
            latent_dim=latent_dim, signal_spec=signal_spec, prefix_k=prefix_k,
            signal_scale=signal_scale,
        )


@dataclass
class GradientResult:
    total: float
    state_part: float
    param_part: float
    grad: np.ndarray
    a_t: float


@dataclass
class GradientCase:
    """Inputs for one gradient evaluation (used by ``grad_check``)."""

    y0: np.ndarray
    grid: TimeGrid
    signals: SignalTrack
    truth: np.ndarray
    weights: LossWeights = LossWeights()


def _scaled_signals(m: AugmentedNodeModel, signals: SignalTrack) -> np.ndarray:
    if signals.signal_spec != m.signal_spec:
        raise ValueError(f"Signal spec {signals.signal_spec} does not match model spec {m.signal_spec}")
    values = signals.values if signals.batched else signals.values[None]
    return values * np.asarray(m.signal_scale[1:])


def _dynamics_input(m: AugmentedNodeModel, h: np.ndarray, t: float, sig: np.ndarray) -> np.ndarray:
    t_col = np.full((h.shape[0], 1), t * m.signal_scale[0])
    return np.concatenate([h, t_col, sig], axis=1)


def latent_rhs(m: AugmentedNodeModel, h: np.ndarray, t: float, sig: np.ndarray) -> np.ndarray:
    """dh/dt for a batch ``h`` ``(B, d)`` with scaled signals ``sig`` ``(B, c)``."""
    return mlp_forward(m.dynamics, _dynamics_input(m, h, t, sig))


def latent_step(m: AugmentedNodeModel, h: np.ndarray, t: float, dt: float, sig_raw: np.ndarray) -> np.ndarray:
    """Advance one latent ``(d,)`` by one step under raw (unscaled) signals ``(c,)``."""
    sig = (np.asarray(sig_raw, dtype=float) * np.asarray(m.signal_scale[1:]))[None]
    return rk4_step(lambda state, tau: latent_rhs(m, state, tau, sig), np.asarray(h, dtype=float)[None], t, dt)[0]


def encode(m: AugmentedNodeModel, y0: np.ndarray, dy_prefix: np.ndarray) -> np.ndarray:
    """Latent initial condition from ``[y0, dy_prefix]``; batched inputs give ``(B, d)``."""
    y0 = np.asarray(y0, dtype=float)
    dy_prefix = np.asarray(dy_prefix, dtype=float)
    if y0.shape[-1] != AUGMENTED_DIM:
        raise ValueError(f"Initial augmented state must have {AUGMENTED_DIM} entries, got {y0.shape}")
    if dy_prefix.shape[-1] != m.prefix_k:
        raise ValueError(f"Measurement prefix must have {m.prefix_k} samples, got {dy_prefix.shape[-1]}")
    return mlp_forward(m.encoder, np.concatenate([y0, dy_prefix], axis=-1))


def rollout(m: AugmentedNodeModel, h0: np.ndarray, grid: TimeGrid, signals: SignalTrack,
            return_stages: bool = False):
    """
    Integrate the latent ODE over ``grid``.

    Returns:
        Latents ``(n_points, d)`` (or ``(B, n_points, d)`` for batched ``h0``);
        with ``return_stages`` also the per-step RK4 stage inputs.
    """
    h0 = np.asarray(h0, dtype=float)
    single = h0.ndim == 1
    h = h0[None] if single else h0
    if h.shape[-1] != m.latent_dim:
        raise ValueError(f"Latent must have {m.latent_dim} entries, got {h.shape}")
    if signals.grid != grid:
        raise ValueError(f"Signal grid {signals.grid} does not cover rollout grid {grid}")
    scaled = _scaled_signals(m, signals)
    if scaled.shape[0] not in (1, h.shape[0]):
        raise ValueError(f"Signal batch {scaled.shape[0]} does not match latent batch {h.shape[0]}")
    scaled = np.broadcast_to(scaled, (h.shape[0],) + scaled.shape[1:])

    dt = grid.dt
    latents = np.empty((h.shape[0], grid.n_points, m.latent_dim))
    latents[:, 0] = h
    all_stages = []
    for i in range(grid.n_steps):
        sig = scaled[:, i, :]
        try:
            h, stages = rk4_step(lambda state, tau: latent_rhs(m, state, tau, sig), h,
                                 grid.time(i), dt, return_stages=True)
        except IntegrationError as e:
            raise IntegrationError("Latent rollout diverged", t=e.t, step=i) from e
        latents[:, i + 1] = h
        if return_stages:
            all_stages.append(stages)
    if single:
        latents = latents[0]
    if return_stages:
        return latents, all_stages
    return latents


def decode_trajectory(m: AugmentedNodeModel, latents: np.ndarray) -> np.ndarray:
    latents = np.asarray(latents, dtype=float)
    if latents.shape[-1] != m.latent_dim:
        raise ValueError(f"Latents must have {m.latent_dim} entries, got {latents.shape}")
    flat = latents.reshape(-1, m.latent_dim)
    return mlp_forward(m.decoder, flat).reshape(latents.shape[:-1] + (AUGMENTED_DIM,))


def predict(m: AugmentedNodeModel, y0: np.ndarray, grid: TimeGrid, signals: SignalTrack) -> np.ndarray:
    """Encode, roll out and decode; the encoder prefix is read from ``signals``."""
    dy = signals.dy
    if dy.shape[-1] < m.prefix_k:
        raise ValueError(f"Grid has {dy.shape[-1]} samples, encoder needs a prefix of {m.prefix_k}")
    h0 = encode(m, y0, dy[..., :m.prefix_k])
    return decode_trajectory(m, rollout(m, h0, grid, signals))


def _check_pair(pred: np.ndarray, truth: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape:
        raise ValueError(f"Prediction shape {pred.shape} != truth shape {truth.shape}")
    if pred.shape[-1] != AUGMENTED_DIM or pred.size == 0:
        raise ValueError(f"Loss needs at least one {AUGMENTED_DIM}-vector, got {pred.shape}")
    return pred.reshape(-1, AUGMENTED_DIM), truth.reshape(-1, AUGMENTED_DIM)


def loss(pred: np.ndarray, truth: np.ndarray, w: LossWeights = LossWeights()) -> Tuple[float, float, float]:
    """(total, state_part, param_part), each a mean over samples of squared norms."""
    pred, truth = _check_pair(pred, truth)
    diff = pred - truth
    state_part = float(np.mean(np.sum(diff[:, :3] ** 2, axis=1)))
    param_part = float(np.mean(np.sum(diff[:, 3:] ** 2, axis=1)))
    return w.kappa * state_part + w.beta * param_part, state_part, param_part


def loss_cotangent(pred: np.ndarray, truth: np.ndarray, w: LossWeights = LossWeights()) -> np.ndarray:
    """Gradient of the total loss with respect to ``pred`` (same shape as pred)."""
    shape = np.shape(pred)
    flat_pred, flat_truth = _check_pair(pred, truth)
    weights = np.array([w.kappa] * 3 + [w.beta] * 2)
    return (2.0 / flat_pred.shape[0] * (flat_pred - flat_truth) * weights).reshape(shape)


def value_and_gradient(m: AugmentedNodeModel, y0: np.ndarray, grid: TimeGrid, signals: SignalTrack,
                       truth: np.ndarray, w: LossWeights = LossWeights()) -> GradientResult:
    """
    Loss and its gradient over all parameters (encoder, dynamics, decoder order).

    ``a_t`` is the accumulated time-channel adjoint; it is diagnostic only.
    """
    y0 = np.asarray(y0, dtype=float)
    single = y0.ndim == 1
    y0b = y0[None] if single else y0
    truth_b = np.asarray(truth, dtype=float)
    truth_b = truth_b[None] if single else truth_b
    if truth_b.shape != (y0b.shape[0], grid.n_points, AUGMENTED_DIM):
        raise ValueError(f"Truth must be ({y0b.shape[0]}, {grid.n_points}, {AUGMENTED_DIM}), got {truth_b.shape}")
    raw_dy = signals.dy if signals.batched else signals.dy[None]
    if raw_dy.shape[-1] < m.prefix_k:
        raise ValueError(f"Grid has {raw_dy.shape[-1]} samples, encoder needs a prefix of {m.prefix_k}")

    enc_in = np.concatenate([y0b, np.broadcast_to(raw_dy[:, :m.prefix_k], (y0b.shape[0], m.prefix_k))], axis=1)
    h0 = mlp_forward(m.encoder, enc_in)
    latents, all_stages = rollout(m, h0, grid, signals, return_stages=True)
    pred = decode_trajectory(m, latents)
    total, state_part, param_part = loss(pred, truth_b, w)

    cot = loss_cotangent(pred, truth_b, w)
    g_dec, g_latents = mlp_vjp(m.decoder, latents.reshape(-1, m.latent_dim), cot.reshape(-1, AUGMENTED_DIM))
    g_latents = g_latents.reshape(latents.shape)

    scaled = np.broadcast_to(_scaled_signals(m, signals), (y0b.shape[0],) + (grid.n_points, len(m.channels) - 1))
    d = m.latent_dim
    t_scale = m.signal_scale[0]
    n = grid.n_steps
    dt = grid.dt

    a = g_latents[:, n].copy()
    a_theta = np.zeros(m.dynamics.param_count)
    a_t = float(np.sum(a * latent_rhs(m, latents[:, n], grid.time(n), scaled[:, n, :])))
    for i in range(n - 1, -1, -1):
        sig = scaled[:, i, :]

        def vjp(x, tau, g, sig=sig):
            g_params, g_in = mlp_vjp(m.dynamics, _dynamics_input(m, x, tau, sig), g)
            return g_in[:, :d], np.append(g_params, t_scale * np.sum(g_in[:, d]))

        try:
            a, g_ext = rk4_step_vjp(vjp, all_stages[i], grid.time(i), dt, a)
        except IntegrationError as e:
            raise IntegrationError("Adjoint pass diverged", t=e.t, step=i) from e
        a_theta += g_ext[:-1]
        a_t += float(g_ext[-1])
        a = a + g_latents[:, i]

    g_enc, _ = mlp_vjp(m.encoder, enc_in, a)
    grad = np.concatenate([g_enc, a_theta, g_dec])
    return GradientResult(total, state_part, param_part, grad, a_t)


def adjoint_gradients(m: AugmentedNodeModel, y0: np.ndarray, grid: TimeGrid, signals: SignalTrack,
                      truth: np.ndarray, w: LossWeights = LossWeights()) -> np.ndarray:
    return value_and_gradient(m, y0, grid, signals, truth, w).grad


def case_loss(m: AugmentedNodeModel, case: GradientCase) -> float:
    pred = predict(m, case.y0, case.grid, case.signals)
    truth = np.asarray(case.truth, dtype=float)
    return loss(pred, truth.reshape(pred.shape), case.weights)[0]


def grad_check(m: AugmentedNodeModel, case: GradientCase, fd_step: float = 1e-4) -> float:
    """
    Worst relative error between adjoint and central-difference gradients.

    Components are compared relative to ``max(|adjoint|, |fd|, 1e-3 * scale)``
    where ``scale`` is the largest gradient magnitude; when both gradients
    vanish the error is 0.
    """
    analytic = adjoint_gradients(m, case.y0, case.grid, case.signals, case.truth, case.weights)
    theta = m.flatten()
    numeric = np.empty_like(theta)
    for j in range(theta.size):
        plus = theta.copy()
        plus[j] += fd_step
        minus = theta.copy()
        minus[j] -= fd_step
        numeric[j] = (case_loss(m.with_params(plus), case) - case_loss(m.with_params(minus), case)) / (2.0 * fd_step)
    scale = max(float(np.max(np.abs(analytic))), float(np.max(np.abs(numeric))))
    if scale < 1e-10:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-3 * scale)
    return float(np.max(np.abs(analytic - numeric) / denom))
