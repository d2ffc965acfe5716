"""
Plant physics for a dissipative, weakly measured qubit in the Bloch picture:
closed-form dissipation/diffusion rates, the controlled Bloch equation, the
measurement output and derived observables.

All functions are pure; time arguments broadcast over numpy arrays.
"""
from typing import Tuple, Union

import numpy as np

from .entities import BLOCH_TOL, ControlInput, SystemParams, as_augmented, as_bloch
from ...numerics.integrate import rk4_step

Control = Union[ControlInput, np.ndarray, Tuple[float, float]]

# Generators of rotations about x and y, as printed in the plant model.
A_X = np.array([[0.0, 0.0, 0.0],
                [0.0, 0.0, -1.0],
                [0.0, 1.0, 0.0]])
A_Y = np.array([[0.0, 0.0, 1.0],
                [0.0, 0.0, 0.0],
                [-1.0, 0.0, 0.0]])

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)


def _control_array(u: Control) -> np.ndarray:
    if u is None:
        return np.zeros(2)
    if isinstance(u, ControlInput):
        return u.as_array()
    return np.asarray(u, dtype=float)


def gamma_t(t, p: SystemParams):
    """
    Dissipation rate gamma(t).

    The exponential envelope multiplies both the cosine and the r*sin term, so
    gamma settles to the Markovian value alpha^2 omega0 r^2 / (1 + r^2).
    """
    t = np.asarray(t, dtype=float)
    w = p.omega0
    prefactor = p.alpha ** 2 * w * p.r ** 2 / (1.0 + p.r ** 2)
    envelope = np.exp(-p.r * w * t) * (np.cos(w * t) + p.r * np.sin(w * t))
    value = prefactor * (1.0 - envelope)
    return float(value) if value.ndim == 0 else value


def delta_t(t, p: SystemParams):
    """Diffusion rate Delta(t) in the high-temperature limit."""
    t = np.asarray(t, dtype=float)
    w = p.omega0
    prefactor = 2.0 * p.alpha ** 2 * p.kbt * p.r ** 2 / (1.0 + p.r ** 2)
    envelope = np.exp(-p.r * w * t) * (np.cos(w * t) - np.sin(w * t) / p.r)
    value = prefactor * (1.0 - envelope)
    return float(value) if value.ndim == 0 else value


def gamma_limit(p: SystemParams) -> float:
    return p.alpha ** 2 * p.omega0 * p.r ** 2 / (1.0 + p.r ** 2)


def delta_limit(p: SystemParams) -> float:
    return 2.0 * p.alpha ** 2 * p.kbt * p.r ** 2 / (1.0 + p.r ** 2)


def bloch_rhs(s, aug, p: SystemParams, u: Control = None) -> np.ndarray:
    """
    Controlled Bloch equation.

    ``aug`` supplies the rates; only its delta and gamma entries are read.
    The z line is affine: -2*Delta*z - 2*gamma.
    """
    aug = as_augmented(aug)
    return _bloch_field(as_bloch(s), aug[3], aug[4], p, _control_array(u))


def _bloch_field(s: np.ndarray, delta: float, gamma: float, p: SystemParams, u: np.ndarray) -> np.ndarray:
    x, y, z = s
    ux, uy = u
    decay = delta + 0.5 * p.m_strength
    return np.array([
        -decay * x - p.omega0 * y + uy * z,
        -decay * y + p.omega0 * x - ux * z,
        -2.0 * delta * z - 2.0 * gamma - uy * x + ux * y,
    ])


def plant_step(p: SystemParams, s, t: float, dt: float, u: Control = None) -> np.ndarray:
    """One RK4 step of the plant; rates at stage times, control held over the step."""
    u_arr = _control_array(u)

    def rhs(state, tau):
        return _bloch_field(state, delta_t(tau, p), gamma_t(tau, p), p, u_arr)

    return rk4_step(rhs, as_bloch(s), t, dt)


def augmented_at(s, t: float, p: SystemParams) -> np.ndarray:
    s = as_bloch(s)
    return np.array([s[0], s[1], s[2], delta_t(t, p), gamma_t(t, p)])


def drift_matrix(delta: float, gamma: float, p: SystemParams) -> np.ndarray:
    """Linear drift A0 used for the LQR design model (z diagonal -2*Delta - 2*gamma)."""
    decay = delta + 0.5 * p.m_strength
    return np.array([
        [-decay, -p.omega0, 0.0],
        [p.omega0, -decay, 0.0],
        [0.0, 0.0, -2.0 * delta - 2.0 * gamma],
    ])


def measurement_rate(s, p: SystemParams):
    """Weak-measurement output -sqrt(M zeta) z; broadcasts over leading axes."""
    s = as_bloch(s)
    return -np.sqrt(p.m_strength * p.zeta) * s[..., 2]


def density_from_bloch(s) -> np.ndarray:
    s = as_bloch(s)
    if np.linalg.norm(s) > 1.0 + BLOCH_TOL:
        raise ValueError(f"Bloch vector norm {np.linalg.norm(s)} exceeds 1")
    return 0.5 * (np.eye(2, dtype=complex) + s[0] * SIGMA_X + s[1] * SIGMA_Y + s[2] * SIGMA_Z)


def purity(s):
    s = as_bloch(s)
    return 0.5 * (1.0 + np.sum(s * s, axis=-1))


def coherence(s):
    return as_bloch(s)[..., 0]


def populations(s):
    """Excited and ground populations (P1, P2)."""
    p1 = 0.5 * (1.0 + as_bloch(s)[..., 2])
    return p1, 1.0 - p1


def fidelity(s, target):
    return 0.5 * (1.0 + np.sum(as_bloch(s) * as_bloch(target), axis=-1))
