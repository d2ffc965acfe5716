"""
Finite-horizon, time-varying LQR on the linear drift model.

The cost-to-go P(t) obeys

    dP/dt = -(A^T P + P A - P B R^-1 B^T P + Q),   P(T) = P_T

and is integrated backward with RK4 on the run grid. The feedback law is
u = -K(t) (s_hat - target) with K = R^-1 B^T P.
"""
from dataclasses import dataclass
from typing import Any, Dict, Optional

import numpy as np
from scipy.integrate import trapezoid

from ..base.base_controller import BaseController
from ..qubit.dynamics import A_X, A_Y, drift_matrix
from ..qubit.entities import ControlInput, SystemParams, as_bloch
from ...numerics.integrate import IntegrationError, TimeGrid, integrate_backward

ESCAPE_BOUND = 1e12


@dataclass
class LqrConfig:
    q: np.ndarray
    r: np.ndarray
    target: np.ndarray
    terminal: Optional[np.ndarray] = None

    def __post_init__(self):
        self.q = np.atleast_2d(np.asarray(self.q, dtype=float))
        self.r = np.atleast_2d(np.asarray(self.r, dtype=float))
        self.target = np.asarray(self.target, dtype=float)
        if self.terminal is None:
            self.terminal = np.zeros_like(self.q)
        self.terminal = np.atleast_2d(np.asarray(self.terminal, dtype=float))
        self.validate()

    def validate(self) -> bool:
        n = self.q.shape[0]
        for name, mat in (('Q', self.q), ('P(T)', self.terminal)):
            if mat.shape != (n, n):
                raise ValueError(f"{name} must be {n}x{n}, got {mat.shape}")
            if not np.allclose(mat, mat.T):
                raise ValueError(f"{name} must be symmetric")
            if np.min(np.linalg.eigvalsh(mat)) < -1e-12:
                raise ValueError(f"{name} must be positive semidefinite")
        if self.r.shape[0] != self.r.shape[1]:
            raise ValueError(f"R must be square, got {self.r.shape}")
        if not np.allclose(self.r, self.r.T):
            raise ValueError("R must be symmetric")
        if np.min(np.linalg.eigvalsh(self.r)) <= 0:
            raise ValueError("R must be positive definite (R singular or indefinite)")
        if self.target.shape != (n,):
            raise ValueError(f"Target must have {n} entries, got {self.target.shape}")
        return True

    @classmethod
    def from_config(cls, control_cfg: Dict[str, Any]) -> 'LqrConfig':
        lqr = control_cfg.get('lqr', {})
        return cls(q=np.diag(lqr.get('q', [1000.0, 1000.0, 1000.0])),
                   r=np.diag(lqr.get('r', [0.1, 50.0])),
                   target=control_cfg.get('target', [0.0, 0.0, 1.0]),
                   terminal=np.diag(lqr.get('terminal', [0.0, 0.0, 0.0])))


@dataclass
class GainSchedule:
    grid: TimeGrid
    p: np.ndarray
    k: np.ndarray

    def __post_init__(self):
        if self.p.shape[0] != self.grid.n_points or self.k.shape[0] != self.grid.n_points:
            raise ValueError("Gain schedule must have one P and one K per grid point")

    def gain(self, step: int) -> np.ndarray:
        return self.k[step]


def lqr_b_matrix(target) -> np.ndarray:
    """Columns A_X @ target and A_Y @ target."""
    tgt = as_bloch(target)
    return np.column_stack([A_X @ tgt, A_Y @ tgt])


def drift_schedule(grid: TimeGrid, p: SystemParams, deltas, gammas) -> np.ndarray:
    """Per-grid-point linear drift matrices from rate tracks."""
    deltas = np.asarray(deltas, dtype=float)
    gammas = np.asarray(gammas, dtype=float)
    if deltas.shape != (grid.n_points,) or gammas.shape != (grid.n_points,):
        raise ValueError(f"Rate tracks must have {grid.n_points} samples")
    return np.stack([drift_matrix(d, g, p) for d, g in zip(deltas, gammas)])


def _interpolate(schedule: np.ndarray, grid: TimeGrid, t: float) -> np.ndarray:
    pos = (t - grid.t0) / grid.dt
    i = int(np.clip(np.floor(pos), 0, grid.n_steps - 1))
    frac = float(np.clip(pos - i, 0.0, 1.0))
    if frac == 0.0:
        return schedule[i]
    if frac == 1.0:
        return schedule[i + 1]
    return (1.0 - frac) * schedule[i] + frac * schedule[i + 1]


def riccati_solve(a_schedule: np.ndarray, b: np.ndarray, cfg: LqrConfig, grid: TimeGrid) -> GainSchedule:
    """
    Backward RK4 solve of the differential Riccati equation.

    ``a_schedule`` holds A(t) at every grid point; stage times in between use
    linear interpolation.
    """
    a_schedule = np.asarray(a_schedule, dtype=float)
    b = np.atleast_2d(np.asarray(b, dtype=float))
    n_x = cfg.q.shape[0]
    if a_schedule.shape != (grid.n_points, n_x, n_x):
        raise ValueError(f"Drift schedule must be ({grid.n_points}, {n_x}, {n_x}), got {a_schedule.shape}")
    if b.shape != (n_x, cfg.r.shape[0]):
        raise ValueError(f"B must be ({n_x}, {cfg.r.shape[0]}), got {b.shape}")
    r_inv = np.linalg.inv(cfg.r)
    s_mat = b @ r_inv @ b.T
    s_mat = 0.5 * (s_mat + s_mat.T)

    def rhs(p_mat, t):
        a = _interpolate(a_schedule, grid, t)
        atp = a.T @ p_mat
        value = -(atp + atp.T - p_mat @ s_mat @ p_mat + cfg.q)
        value = 0.5 * (value + value.T)
        if np.max(np.abs(p_mat)) > ESCAPE_BOUND:
            raise IntegrationError("Riccati solution escaped", t=t)
        return value

    p_desc = integrate_backward(rhs, cfg.terminal, grid)
    p_sched = p_desc[::-1].copy()
    gain_map = r_inv @ b.T
    k_sched = np.matmul(gain_map, p_sched)
    return GainSchedule(grid, p_sched, k_sched)


def lqr_control(k_t: np.ndarray, state_hat, target) -> ControlInput:
    u = -np.asarray(k_t, dtype=float) @ (as_bloch(state_hat) - as_bloch(target))
    return ControlInput(float(u[0]), float(u[1]))


def quadratic_cost(errors: np.ndarray, controls: np.ndarray, q: np.ndarray, r: np.ndarray,
                   grid: TimeGrid) -> float:
    """Trapezoidal integral of e^T Q e + u^T R u over the grid."""
    integrand = np.einsum('ti,ij,tj->t', errors, q, errors) + np.einsum('ti,ij,tj->t', controls, r, controls)
    return float(trapezoid(integrand, dx=grid.dt))


class LqrController(BaseController):
    label = "LQR"

    def __init__(self, schedule: GainSchedule, target):
        super().__init__(target)
        self.schedule = schedule

    @classmethod
    def from_config(cls, control_cfg: Dict[str, Any], target=None, schedule: GainSchedule = None,
                    **_) -> 'LqrController':
        if schedule is None:
            raise ValueError("LQR controller needs a gain schedule")
        target = control_cfg.get('target', (0.0, 0.0, 1.0)) if target is None else target
        return cls(schedule, target)

    def compute(self, step, t, state_hat, state_hat_prev, dt):
        if step >= self.schedule.grid.n_points:
            raise ValueError(f"Step {step} is outside the gain schedule")
        return lqr_control(self.schedule.gain(step), state_hat, self.target).as_array()
