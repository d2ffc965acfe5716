"""
Fixed-step classical Runge-Kutta 4 integration on a uniform time grid.
Used by the plant simulator, the latent rollout, the adjoint pass and the
Riccati solve. States may be arrays of any shape; the right-hand side must
return an array of the same shape.
"""

from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

import numpy as np

Rhs = Callable[[np.ndarray, float], np.ndarray]


class IntegrationError(ValueError):
    """Raised when an integration step produces non-finite values."""

    def __init__(self, message: str, t: float, step: Optional[int] = None):
        self.t = t
        self.step = step
        where = f"t={t:.6g}" if step is None else f"step {step}, t={t:.6g}"
        super().__init__(f"{message} ({where})")


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t0, t0+dt, ..., t1 with n_steps intervals."""

    t0: float
    t1: float
    n_steps: int

    def __post_init__(self):
        self.validate()

    def validate(self) -> bool:
        if not isinstance(self.n_steps, (int, np.integer)) or self.n_steps < 1:
            raise ValueError(f"n_steps must be a positive integer, got {self.n_steps}")
        if not (np.isfinite(self.t0) and np.isfinite(self.t1)):
            raise ValueError(f"Grid bounds must be finite, got [{self.t0}, {self.t1}]")
        if not self.t1 > self.t0:
            raise ValueError(f"Grid must be strictly increasing, got [{self.t0}, {self.t1}]")
        return True

    @property
    def dt(self) -> float:
        return (self.t1 - self.t0) / self.n_steps

    @property
    def n_points(self) -> int:
        return self.n_steps + 1

    def time(self, i: int) -> float:
        return self.t0 + i * self.dt

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.n_steps + 1) * self.dt

    def to_dict(self) -> Dict[str, Any]:
        return {'t0': float(self.t0), 't1': float(self.t1), 'n_steps': int(self.n_steps)}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'TimeGrid':
        return cls(t0=float(data['t0']), t1=float(data['t1']), n_steps=int(data['n_steps']))


def _check_finite(y: np.ndarray, t: float) -> None:
    if not np.all(np.isfinite(y)):
        raise IntegrationError("Non-finite state in RK4 step", t=t)


def rk4_step(f: Rhs, y: np.ndarray, t: float, dt: float,
             return_stages: bool = False) -> Union[np.ndarray, Tuple[np.ndarray, List[np.ndarray]]]:
    """
    Advance ``y`` by one classical RK4 step.

    Args:
        f: right-hand side ``f(y, t)``
        y: current state
        t: current time
        dt: step (negative for backward integration)
        return_stages: also return the four stage inputs, needed by ``rk4_step_vjp``

    Returns:
        The new state, or ``(state, stages)`` when ``return_stages`` is set.
    """
    if dt == 0:
        raise ValueError("dt must be non-zero")
    y = np.asarray(y, dtype=float)
    half = 0.5 * dt
    x1 = y
    k1 = f(x1, t)
    x2 = y + half * k1
    k2 = f(x2, t + half)
    x3 = y + half * k2
    k3 = f(x3, t + half)
    x4 = y + dt * k3
    k4 = f(x4, t + dt)
    y_next = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    _check_finite(y_next, t)
    if return_stages:
        return y_next, [x1, x2, x3, x4]
    return y_next


def rk4_step_vjp(vjp: Callable[[np.ndarray, float, np.ndarray], Tuple[np.ndarray, np.ndarray]],
                 stages: List[np.ndarray], t: float, dt: float,
                 cotangent: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Transpose of one RK4 step.

    Given the cotangent of the step output, returns the cotangent of the step
    input and the accumulated parameter cotangent. ``vjp(x, t, g)`` must return
    ``(g @ df/dx, g @ df/dtheta)`` at stage input ``x`` and stage time ``t``.
    """
    half = 0.5 * dt
    g_y = np.array(cotangent, dtype=float, copy=True)
    kbar1 = (dt / 6.0) * cotangent
    kbar2 = (dt / 3.0) * cotangent
    kbar3 = (dt / 3.0) * cotangent
    kbar4 = (dt / 6.0) * cotangent

    gx4, gp4 = vjp(stages[3], t + dt, kbar4)
    g_y += gx4
    kbar3 = kbar3 + dt * gx4

    gx3, gp3 = vjp(stages[2], t + half, kbar3)
    g_y += gx3
    kbar2 = kbar2 + half * gx3

    gx2, gp2 = vjp(stages[1], t + half, kbar2)
    g_y += gx2
    kbar1 = kbar1 + half * gx2

    gx1, gp1 = vjp(stages[0], t, kbar1)
    g_y += gx1

    g_params = gp1 + gp2 + gp3 + gp4
    if not (np.all(np.isfinite(g_y)) and np.all(np.isfinite(g_params))):
        raise IntegrationError("Non-finite adjoint in RK4 transpose", t=t)
    return g_y, g_params


def integrate_forward(f: Rhs, y0: np.ndarray, grid: TimeGrid) -> np.ndarray:
    """
    Integrate from ``grid.t0`` to ``grid.t1``.

    Returns:
        Array of shape ``(n_steps + 1, *y0.shape)``; the first entry equals ``y0``.
    """
    y0 = np.asarray(y0, dtype=float)
    if not np.all(np.isfinite(y0)):
        raise IntegrationError("Non-finite initial state", t=grid.t0, step=0)
    dt = grid.dt
    out = np.empty((grid.n_steps + 1,) + y0.shape)
    out[0] = y0
    y = y0
    for i in range(grid.n_steps):
        t = grid.time(i)
        try:
            y = rk4_step(f, y, t, dt)
        except IntegrationError as e:
            raise IntegrationError("Forward integration failed", t=e.t, step=i) from e
        out[i + 1] = y
    return out


def integrate_backward(f: Rhs, yT: np.ndarray, grid: TimeGrid) -> np.ndarray:
    """
    Integrate from ``grid.t1`` back to ``grid.t0`` with step ``-dt``.

    Returns:
        Array of shape ``(n_steps + 1, *yT.shape)`` ordered from t1 down to t0;
        entry ``j`` is the state at ``grid.time(n_steps - j)``.
    """
    yT = np.asarray(yT, dtype=float)
    if not np.all(np.isfinite(yT)):
        raise IntegrationError("Non-finite terminal state", t=grid.t1, step=0)
    dt = grid.dt
    n = grid.n_steps
    out = np.empty((n + 1,) + yT.shape)
    out[0] = yT
    y = yT
    for j in range(n):
        t = grid.time(n - j)
        try:
            y = rk4_step(f, y, t, -dt)
        except IntegrationError as e:
            raise IntegrationError("Backward integration failed", t=e.t, step=j) from e
        out[j + 1] = y
    return out
