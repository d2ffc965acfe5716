"""
Proportional-derivative control on the estimated x and y Bloch components.
"""
from dataclasses import dataclass
from typing import Any, Dict, Sequence

import numpy as np

from ..base.base_controller import BaseController
from ..qubit.entities import ControlInput, as_bloch


@dataclass(frozen=True)
class PdGains:
    kp_x: float = 5.0
    kp_y: float = 10.0
    kd_x: float = 8.0
    kd_y: float = 10.0

    def __post_init__(self):
        if not all(np.isfinite(v) for v in (self.kp_x, self.kp_y, self.kd_x, self.kd_y)):
            raise ValueError(f"PD gains must be finite: {self}")

    @classmethod
    def from_config(cls, pd_cfg: Dict[str, Any]) -> 'PdGains':
        kp: Sequence[float] = pd_cfg.get('kp', (5.0, 10.0))
        kd: Sequence[float] = pd_cfg.get('kd', (8.0, 10.0))
        return cls(float(kp[0]), float(kp[1]), float(kd[0]), float(kd[1]))

    def scaled(self, factors: Sequence[float]) -> 'PdGains':
        """Gains multiplied elementwise by (kp_x, kp_y, kd_x, kd_y) factors."""
        fx, fy, gx, gy = factors
        return PdGains(self.kp_x * fx, self.kp_y * fy, self.kd_x * gx, self.kd_y * gy)


def pd_control(state_hat, state_hat_prev, dt: float, g: PdGains, target) -> ControlInput:
    """u = -kp*(s - target) - kd*(s - s_prev)/dt on the x and y components."""
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    s = as_bloch(state_hat)
    s_prev = as_bloch(state_hat_prev)
    tgt = as_bloch(target)
    ux = -g.kp_x * (s[0] - tgt[0]) - g.kd_x * (s[0] - s_prev[0]) / dt
    uy = -g.kp_y * (s[1] - tgt[1]) - g.kd_y * (s[1] - s_prev[1]) / dt
    return ControlInput(float(ux), float(uy))


def pd_control_resolved(state_hat, state_hat_prev, u_prev, dt: float, g: PdGains, target) -> ControlInput:
    """
    PD law with the derivative taken at the field it is about to apply.

    The finite difference over the last step carries the field held over it
    (dx/dt gains uy*z, dy/dt loses ux*z). That part is replaced by the
    actuation of the new field and the linear system

        ux = -kp_x*e_x - kd_x*(f_x + z*uy)
        uy = -kp_y*e_y - kd_y*(f_y - z*ux)

    is solved for (ux, uy). Its determinant is 1 + kd_x*kd_y*z^2.
    """
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    s = as_bloch(state_hat)
    s_prev = as_bloch(state_hat_prev)
    tgt = as_bloch(target)
    u_prev = np.asarray(u_prev, dtype=float)
    drift_x = (s[0] - s_prev[0]) / dt - s_prev[2] * u_prev[1]
    drift_y = (s[1] - s_prev[1]) / dt + s_prev[2] * u_prev[0]
    a = -g.kp_x * (s[0] - tgt[0]) - g.kd_x * drift_x
    b = -g.kp_y * (s[1] - tgt[1]) - g.kd_y * drift_y
    z = s[2]
    det = 1.0 + g.kd_x * g.kd_y * z * z
    ux = (a - g.kd_x * z * b) / det
    uy = (b + g.kd_y * z * a) / det
    return ControlInput(float(ux), float(uy))


class PdController(BaseController):
    label = "PD"

    def __init__(self, gains: PdGains, target):
        super().__init__(target)
        self.gains = gains
        self._u_prev = np.zeros(2)

    @classmethod
    def from_config(cls, control_cfg: Dict[str, Any], target=None, **_) -> 'PdController':
        target = control_cfg.get('target', (0.0, 0.0, 1.0)) if target is None else target
        return cls(PdGains.from_config(control_cfg.get('pd', {})), target)

    def compute(self, step, t, state_hat, state_hat_prev, dt):
        u = pd_control_resolved(state_hat, state_hat_prev, self._u_prev, dt, self.gains, self.target).as_array()
        self._u_prev = u
        return u

    def reset(self) -> None:
        self._u_prev = np.zeros(2)

    def describe(self) -> dict:
        info = super().describe()
        info['gains'] = [self.gains.kp_x, self.gains.kp_y, self.gains.kd_x, self.gains.kd_y]
        return info


class ZeroController(BaseController):
    """Always outputs zero; turns the closed loop into an open-loop run."""

    label = "ZERO"

    def __init__(self, target=(0.0, 0.0, 1.0)):
        super().__init__(target)

    @classmethod
    def from_config(cls, control_cfg: Dict[str, Any], target=None, **_) -> 'ZeroController':
        return cls(control_cfg.get('target', (0.0, 0.0, 1.0)) if target is None else target)

    def compute(self, step, t, state_hat, state_hat_prev, dt):
        return np.zeros(2)
