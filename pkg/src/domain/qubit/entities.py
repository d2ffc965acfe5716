"""
Qubit domain entities: system parameters, controls, sampling regimes,
trajectories and datasets.

Bloch vectors are numpy arrays ``[x, y, z]``; augmented states are
``[x, y, z, delta, gamma]``.
"""
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from ..base.base_entity import BaseEntity
from ...numerics.integrate import TimeGrid

BLOCH_TOL = 1e-6
AUGMENTED_COLUMNS = ('x', 'y', 'z', 'delta', 'gamma')
PARAM_NAMES = ('alpha', 'r', 'm_strength', 'omega0')

Interval = Union[float, Tuple[float, float]]


def as_bloch(s, check_norm: bool = False) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    if s.shape[-1:] != (3,):
        raise ValueError(f"Bloch vector must have 3 components, got shape {s.shape}")
    if check_norm and np.any(np.linalg.norm(s, axis=-1) > 1.0 + BLOCH_TOL):
        raise ValueError(f"Bloch vector norm exceeds 1: {np.linalg.norm(s, axis=-1).max()}")
    return s


def as_augmented(y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.shape[-1:] != (5,):
        raise ValueError(f"Augmented state must have 5 components, got shape {y.shape}")
    return y


@dataclass(frozen=True)
class SystemParams(BaseEntity):
    """Physical configuration driving the plant."""

    alpha: float
    r: float
    m_strength: float
    omega0: float
    zeta: float = 0.9
    kbt: float = 1.0

    def __post_init__(self):
        self.validate()

    def validate(self) -> bool:
        values = (self.alpha, self.r, self.m_strength, self.omega0, self.zeta, self.kbt)
        if not all(np.isfinite(v) for v in values):
            raise ValueError(f"System parameters must be finite: {values}")
        if not 0.0 < self.zeta < 1.0:
            raise ValueError(f"Detection efficiency zeta must lie in (0, 1), got {self.zeta}")
        if self.m_strength < 0:
            raise ValueError(f"Measurement strength must be >= 0, got {self.m_strength}")
        for name in ('alpha', 'r', 'omega0', 'kbt'):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")
        return True

    def to_record(self) -> Dict[str, float]:
        return {'alpha': self.alpha, 'r': self.r, 'm': self.m_strength,
                'omega0': self.omega0, 'zeta': self.zeta, 'kbt': self.kbt}

    @classmethod
    def from_record(cls, data: Dict[str, Any]) -> 'SystemParams':
        return cls(alpha=float(data['alpha']), r=float(data['r']),
                   m_strength=float(data.get('m', data.get('m_strength'))),
                   omega0=float(data['omega0']), zeta=float(data['zeta']), kbt=float(data['kbt']))


@dataclass(frozen=True)
class ControlInput(BaseEntity):
    ux: float = 0.0
    uy: float = 0.0

    def __post_init__(self):
        self.validate()

    def validate(self) -> bool:
        if not (np.isfinite(self.ux) and np.isfinite(self.uy)):
            raise ValueError(f"Control input must be finite, got ({self.ux}, {self.uy})")
        return True

    def as_array(self) -> np.ndarray:
        return np.array([self.ux, self.uy], dtype=float)

    @classmethod
    def from_array(cls, u) -> 'ControlInput':
        return cls(float(u[0]), float(u[1]))


@dataclass(frozen=True)
class PhaseRegime(BaseEntity):
    """Parameter intervals for one phase and split; scalars are fixed values."""

    phase: int
    split: str
    intervals: Dict[str, Interval]
    controlled: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self) -> bool:
        if self.phase not in (1, 2, 3):
            raise ValueError(f"Unsupported phase: {self.phase}")
        if self.split not in ('train', 'wd_test', 'ood_test'):
            raise ValueError(f"Unsupported split: {self.split}")
        for name in PARAM_NAMES:
            if name not in self.intervals:
                raise ValueError(f"Regime phase {self.phase}/{self.split} is missing {name}")
            lo, hi = self.bounds(name)
            if not lo <= hi:
                raise ValueError(f"Interval for {name} is empty: [{lo}, {hi}]")
        return True

    def bounds(self, name: str) -> Tuple[float, float]:
        value = self.intervals[name]
        if isinstance(value, (list, tuple)):
            if len(value) != 2:
                raise ValueError(f"Interval for {name} must be [low, high], got {value}")
            return float(value[0]), float(value[1])
        return float(value), float(value)

    def is_fixed(self, name: str) -> bool:
        lo, hi = self.bounds(name)
        return lo == hi

    def contains(self, p: SystemParams) -> bool:
        for name in PARAM_NAMES:
            lo, hi = self.bounds(name)
            if not lo <= getattr(p, name) <= hi:
                return False
        return True

    def to_dict(self) -> Dict[str, Any]:
        return {'phase': self.phase, 'split': self.split, 'controlled': self.controlled,
                'intervals': {k: list(v) if isinstance(v, (list, tuple)) else v
                              for k, v in self.intervals.items()}}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'PhaseRegime':
        return cls(phase=int(data['phase']), split=data['split'],
                   intervals=dict(data['intervals']), controlled=bool(data.get('controlled', False)))


@dataclass
class Trajectory(BaseEntity):
    """Ground-truth (or closed-loop) track on one grid."""

    grid: TimeGrid
    states: np.ndarray
    dy: np.ndarray
    controls: np.ndarray
    params: SystemParams
    seed: Optional[int] = None
    traj_id: int = 0
    label: str = ""

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=float)
        self.dy = np.asarray(self.dy, dtype=float)
        self.controls = np.asarray(self.controls, dtype=float)
        self.validate()

    def validate(self) -> bool:
        n = self.grid.n_points
        if self.states.shape != (n, 5):
            raise ValueError(f"Trajectory states must be ({n}, 5), got {self.states.shape}")
        if self.dy.shape != (n,):
            raise ValueError(f"Trajectory dy must be ({n},), got {self.dy.shape}")
        if self.controls.shape != (n, 2):
            raise ValueError(f"Trajectory controls must be ({n}, 2), got {self.controls.shape}")
        return True

    @property
    def y0(self) -> np.ndarray:
        return self.states[0].copy()

    @property
    def bloch(self) -> np.ndarray:
        return self.states[:, :3]

    def max_bloch_norm(self) -> float:
        return float(np.linalg.norm(self.bloch, axis=1).max())

    def to_record(self) -> Dict[str, Any]:
        return {
            'traj_id': int(self.traj_id),
            'seed': self.seed,
            'label': self.label,
            'params': self.params.to_record(),
            'y0': self.states[0],
            't': self.grid.times,
            'x': self.states[:, 0],
            'y': self.states[:, 1],
            'z': self.states[:, 2],
            'delta': self.states[:, 3],
            'gamma': self.states[:, 4],
            'dy': self.dy,
            'ux': self.controls[:, 0],
            'uy': self.controls[:, 1],
        }

    @classmethod
    def from_record(cls, record: Dict[str, Any], grid: TimeGrid) -> 'Trajectory':
        states = np.column_stack([np.asarray(record[c], dtype=float) for c in AUGMENTED_COLUMNS])
        controls = np.column_stack([np.asarray(record['ux'], dtype=float),
                                    np.asarray(record['uy'], dtype=float)])
        return cls(grid=grid, states=states, dy=np.asarray(record['dy'], dtype=float),
                   controls=controls, params=SystemParams.from_record(record['params']),
                   seed=record.get('seed'), traj_id=int(record.get('traj_id', 0)),
                   label=record.get('label', ''))


@dataclass
class Dataset(BaseEntity):
    """A header plus trajectories that all share the header grid."""

    header: Dict[str, Any]
    trajectories: List[Trajectory] = field(default_factory=list)

    def __post_init__(self):
        self.validate()

    def validate(self) -> bool:
        if 'grid' not in self.header:
            raise ValueError("Dataset header is missing the grid")
        grid = self.grid
        for traj in self.trajectories:
            if traj.grid != grid:
                raise ValueError(f"Trajectory {traj.traj_id} grid {traj.grid} differs from dataset grid {grid}")
        return True

    def __len__(self) -> int:
        return len(self.trajectories)

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid.from_dict(self.header['grid'])

    def subset(self, indices) -> 'Dataset':
        return Dataset(dict(self.header), [self.trajectories[int(i)] for i in indices])

    def stacked_states(self) -> np.ndarray:
        return np.stack([t.states for t in self.trajectories])

    def stacked_dy(self) -> np.ndarray:
        return np.stack([t.dy for t in self.trajectories])

    def stacked_controls(self) -> np.ndarray:
        return np.stack([t.controls for t in self.trajectories])

    def stacked_y0(self) -> np.ndarray:
        return np.stack([t.states[0] for t in self.trajectories])

    def to_dict(self) -> Dict[str, Any]:
        return {'header': dict(self.header), 'trajectories': [t.to_record() for t in self.trajectories]}
