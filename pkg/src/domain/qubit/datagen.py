"""
Ground-truth trajectory synthesis for the phase regimes.

Uncontrolled regimes integrate the plant from random Bloch-ball initial
states. Controlled regimes mix PD and LQR state-feedback runs (with jittered
gains, starting near the ground state) and random multisine fields so the
model sees control signals like those it meets in closed loop.
"""
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Dict, Optional, Sequence

import numpy as np

from .dynamics import delta_t, gamma_t, measurement_rate, plant_step
from .entities import (PARAM_NAMES, ControlInput, Dataset, PhaseRegime, SystemParams, Trajectory,
                       as_augmented)
from ..control.closed_loop import run_state_feedback
from ..control.lqr_controller import LqrConfig, LqrController, drift_schedule, lqr_b_matrix, riccati_solve
from ..control.pd_controller import PdController, PdGains
from ...FileRead import SCHEMA_VERSION
from ...LogManager import LogManager, get_log_manager
from ...numerics.integrate import IntegrationError, TimeGrid
from ...processors.dataset_processor import DatasetProcessor

EXCITATION_KINDS = ('pd', 'lqr', 'multisine')
DEFAULT_EXCITATION = {
    'pd': 0.4, 'lqr': 0.3, 'multisine': 0.3,
    'gain_jitter': [0.5, 1.5],
    'start_perturbation': 0.2,
    'multisine_terms': 3,
    'multisine_amplitude': 20.0,
    'multisine_max_frequency': 10.0,
}
GROUND_STATE = np.array([0.0, 0.0, -1.0])


def sample_params(regime: PhaseRegime, rng: np.random.Generator, zeta: float = 0.9,
                  kbt: float = 1.0) -> SystemParams:
    """Uniform independent draws inside the regime intervals; fixed values pass through."""
    values = {}
    for name in PARAM_NAMES:
        lo, hi = regime.bounds(name)
        values[name] = lo if lo == hi else float(rng.uniform(lo, hi))
    return SystemParams(zeta=zeta, kbt=kbt, **values)


def sample_initial_state(rng: np.random.Generator) -> np.ndarray:
    """Uniform draw from the Bloch ball with zero rates."""
    direction = rng.standard_normal(3)
    direction /= np.linalg.norm(direction)
    radius = rng.uniform() ** (1.0 / 3.0)
    return np.concatenate([radius * direction, [0.0, 0.0]])


def perturb_initial(y0, eps: float, rng: np.random.Generator) -> np.ndarray:
    """y0 + eps * v with v a uniformly random unit 5-vector."""
    if eps < 0:
        raise ValueError(f"eps must be >= 0, got {eps}")
    y0 = as_augmented(y0)
    n = rng.standard_normal(5)
    return y0 + eps * n / np.linalg.norm(n)


def _control_schedule(controls, grid: TimeGrid) -> np.ndarray:
    if controls is None:
        return np.zeros((grid.n_points, 2))
    if len(controls) and isinstance(controls[0], ControlInput):
        controls = [u.as_array() for u in controls]
    schedule = np.asarray(controls, dtype=float)
    if schedule.shape != (grid.n_points, 2):
        raise ValueError(f"Control schedule must be ({grid.n_points}, 2), got {schedule.shape}")
    return schedule


def simulate_trajectory(p: SystemParams, y0, controls, grid: TimeGrid, noise_std: float = 0.0,
                        rng: Optional[np.random.Generator] = None, seed: Optional[int] = None,
                        traj_id: int = 0, label: str = "") -> Trajectory:
    """
    Integrate the plant over ``grid`` under a held control schedule.

    Args:
        controls: None, an array ``(n_points, 2)`` or a sequence of ControlInput;
            entry i is applied over [t_i, t_{i+1}]
        noise_std: standard deviation of additive measurement noise (needs ``rng``)
    """
    y0 = as_augmented(y0)
    schedule = _control_schedule(controls, grid)
    if noise_std > 0 and rng is None:
        raise ValueError("Measurement noise needs an rng")
    bloch = np.empty((grid.n_points, 3))
    bloch[0] = y0[:3]
    dt = grid.dt
    for i in range(grid.n_steps):
        try:
            bloch[i + 1] = plant_step(p, bloch[i], grid.time(i), dt, schedule[i])
        except IntegrationError as e:
            raise IntegrationError("Plant simulation failed", t=e.t, step=i) from e
    times = grid.times
    states = np.column_stack([bloch, delta_t(times, p), gamma_t(times, p)])
    dy = measurement_rate(bloch, p)
    if noise_std > 0:
        dy = dy + rng.normal(0.0, noise_std, size=dy.shape)
    return Trajectory(grid=grid, states=states, dy=dy, controls=schedule, params=p, seed=seed,
                      traj_id=traj_id, label=label)


def multisine_schedule(grid: TimeGrid, rng: np.random.Generator, terms: int, amplitude: float,
                       max_frequency: float) -> np.ndarray:
    times = grid.times
    schedule = np.zeros((grid.n_points, 2))
    for axis in range(2):
        amps = rng.uniform(-amplitude, amplitude, size=terms) / terms
        freqs = rng.uniform(0.0, max_frequency, size=terms)
        phases = rng.uniform(0.0, 2.0 * np.pi, size=terms)
        schedule[:, axis] = np.sum(amps[:, None] * np.sin(2.0 * np.pi * freqs[:, None] * times + phases[:, None]),
                                   axis=0)
    return schedule


def _near_ground_state(rng: np.random.Generator, max_eps: float) -> np.ndarray:
    bloch = GROUND_STATE + rng.uniform(0.0, max_eps) * _unit(rng, 3)
    bloch /= max(1.0, float(np.linalg.norm(bloch)))
    return np.concatenate([bloch, [0.0, 0.0]])


def _unit(rng: np.random.Generator, n: int) -> np.ndarray:
    v = rng.standard_normal(n)
    return v / np.linalg.norm(v)


def _excited_trajectory(p: SystemParams, grid: TimeGrid, rng: np.random.Generator, excitation: Dict[str, Any],
                        control_cfg: Dict[str, Any], noise_std: float, seed: int, traj_id: int) -> Trajectory:
    weights = np.array([float(excitation.get(k, 0.0)) for k in EXCITATION_KINDS])
    if weights.sum() <= 0:
        raise ValueError("Control excitation weights must not all be zero")
    kind = EXCITATION_KINDS[int(rng.choice(len(EXCITATION_KINDS), p=weights / weights.sum()))]
    lo, hi = excitation.get('gain_jitter', [0.5, 1.5])
    if kind == 'multisine':
        schedule = multisine_schedule(grid, rng, int(excitation.get('multisine_terms', 3)),
                                      float(excitation.get('multisine_amplitude', 20.0)),
                                      float(excitation.get('multisine_max_frequency', 10.0)))
        return simulate_trajectory(p, sample_initial_state(rng), schedule, grid, noise_std, rng, seed,
                                   traj_id, label=kind)

    y0 = _near_ground_state(rng, float(excitation.get('start_perturbation', 0.2)))
    lqr_cfg = LqrConfig.from_config(control_cfg)
    if kind == 'pd':
        gains = PdGains.from_config(control_cfg.get('pd', {})).scaled(rng.uniform(lo, hi, size=4))
        controller = PdController(gains, lqr_cfg.target)
    else:
        times = grid.times
        cfg = LqrConfig(q=lqr_cfg.q * rng.uniform(lo, hi), r=lqr_cfg.r, target=lqr_cfg.target,
                        terminal=lqr_cfg.terminal)
        schedule = riccati_solve(drift_schedule(grid, p, delta_t(times, p), gamma_t(times, p)),
                                 lqr_b_matrix(cfg.target), cfg, grid)
        controller = LqrController(schedule, cfg.target)
    result = run_state_feedback(p, controller, y0, grid, noise_std, rng)
    traj = result.to_trajectory(traj_id=traj_id, seed=seed)
    traj.label = kind
    return traj


def _trajectory_seeds(seed: int, n_traj: int) -> Sequence[int]:
    return [int(child.generate_state(1)[0]) for child in np.random.SeedSequence(seed).spawn(n_traj)]


def build_dataset(regime: PhaseRegime, n_traj: int, grid: TimeGrid, seed: int, zeta: float = 0.9,
                  kbt: float = 1.0, noise_std: float = 0.0, excitation: Optional[Dict[str, Any]] = None,
                  control_cfg: Optional[Dict[str, Any]] = None, threads: int = 1,
                  log_manager: Optional[LogManager] = None) -> Dataset:
    """Simulate ``n_traj`` trajectories; each has its own recorded seed."""
    if n_traj < 1:
        raise ValueError(f"n_traj must be >= 1, got {n_traj}")
    log = log_manager or get_log_manager()
    excitation = {**DEFAULT_EXCITATION, **(excitation or {})}
    control_cfg = control_cfg or {}

    def one(args):
        traj_id, traj_seed = args
        rng = np.random.default_rng(traj_seed)
        p = sample_params(regime, rng, zeta, kbt)
        if regime.controlled:
            return _excited_trajectory(p, grid, rng, excitation, control_cfg, noise_std, traj_seed, traj_id)
        return simulate_trajectory(p, sample_initial_state(rng), None, grid, noise_std, rng, traj_seed, traj_id)

    jobs = list(enumerate(_trajectory_seeds(seed, n_traj)))
    log.log(f"Generating {n_traj} trajectories for phase {regime.phase}/{regime.split} (seed {seed})")
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            trajectories = list(pool.map(one, jobs))
    else:
        trajectories = [one(job) for job in jobs]

    header = {
        'schema_version': SCHEMA_VERSION,
        'kind': 'dataset',
        'regime': regime.to_dict(),
        'grid': grid.to_dict(),
        'seed': int(seed),
        'count': n_traj,
        'config': {'zeta': zeta, 'kbt': kbt, 'noise_std': noise_std,
                   'excitation': excitation if regime.controlled else None},
    }
    return Dataset(header, trajectories)


def generate_dataset(regime: PhaseRegime, n_traj: int, grid: TimeGrid, seed: int, out_path: str,
                     **kwargs) -> str:
    """Build a dataset and write it to ``out_path``; returns the path."""
    dataset = build_dataset(regime, n_traj, grid, seed, **kwargs)
    processor = DatasetProcessor(log_manager=kwargs.get('log_manager'))
    return processor.write(out_path, dataset)
