"""
Closed-loop runner coupling a controller, the learned model and the true plant.

Per grid step i: the plant emits dy(t_i); the model latent advances from
t_{i-1} driven by [t, u, dy] of step i-1; the decoder gives the estimate;
the controller maps it to u_i, which is held over [t_i, t_{i+1}]; the plant
advances one RK4 step.

The encoder needs the first k measurement samples, so control is zero until
step k-1, where the latent is encoded at t0 and caught up over the recorded
signals.
"""
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

import numpy as np
from scipy.integrate import trapezoid

from ..base.base_controller import BaseController
from ..qubit.dynamics import augmented_at, delta_t, gamma_t, measurement_rate, plant_step
from ..qubit.entities import SystemParams, Trajectory, as_augmented
from .lqr_controller import GainSchedule, LqrConfig, drift_schedule, lqr_b_matrix, riccati_solve
from .pd_controller import ZeroController
from ...model.augmented_node import CONTROL, AugmentedNodeModel, decode_trajectory, encode, latent_step
from ...numerics.integrate import IntegrationError, TimeGrid

MODEL_FEEDBACK = 'model'
PLANT_FEEDBACK = 'plant'


@dataclass
class ClosedLoopResult:
    grid: TimeGrid
    params: SystemParams
    plant_states: np.ndarray
    predicted: np.ndarray
    controls: np.ndarray
    dy: np.ndarray
    label: str
    feedback_source: str = MODEL_FEEDBACK
    latents: Optional[np.ndarray] = None
    metrics: Dict[str, Any] = field(default_factory=dict)

    def plant_augmented(self) -> np.ndarray:
        times = self.grid.times
        return np.column_stack([self.plant_states, delta_t(times, self.params), gamma_t(times, self.params)])

    def to_trajectory(self, traj_id: int = 0, seed: Optional[int] = None) -> Trajectory:
        """Plant track as a Trajectory (analytic rates attached)."""
        return Trajectory(grid=self.grid, states=self.plant_augmented(), dy=self.dy.copy(),
                          controls=self.controls.copy(), params=self.params, seed=seed,
                          traj_id=traj_id, label=self.label)

    def predicted_trajectory(self, traj_id: int = 0) -> Trajectory:
        return Trajectory(grid=self.grid, states=self.predicted.copy(), dy=self.dy.copy(),
                          controls=self.controls.copy(), params=self.params,
                          traj_id=traj_id, label=f"{self.label}/predicted")


def control_energy(controls: np.ndarray, dt: float) -> float:
    """Trapezoidal integral of ux^2 + uy^2."""
    controls = np.asarray(controls, dtype=float)
    return float(trapezoid(np.sum(controls ** 2, axis=1), dx=dt))


def realized_metrics(plant_states: np.ndarray, predicted: np.ndarray, controls: np.ndarray, dt: float,
                     target) -> Dict[str, Any]:
    """Energy, tracking MSE and final deviation/fidelity of the plant and of the estimate."""
    target = np.asarray(target, dtype=float)
    metrics: Dict[str, Any] = {
        'target': target.tolist(),
        'energy': control_energy(controls, dt),
        'traj_mse': float(np.mean((predicted[:, :3] - plant_states) ** 2)),
    }
    for mode, final in (('real', plant_states[-1]), ('predicted', predicted[-1, :3])):
        error = final - target
        metrics[f'{mode}_deviation'] = float(error @ error)
        metrics[f'{mode}_fidelity'] = float(0.5 * (1.0 + final @ target))
    return metrics


def tilt_off_pole(bloch, tilt, tol: float = 1e-12) -> np.ndarray:
    """
    Move a start lying on the z axis by ``tilt`` = (dx, dy), keeping its norm.

    A pole is an equilibrium of both controllers under exact feedback (their
    output vanishes there); other starts are returned unchanged.
    """
    s = np.array(bloch, dtype=float)
    dx, dy = (float(v) for v in tilt)
    if abs(s[0]) > tol or abs(s[1]) > tol or (dx == 0.0 and dy == 0.0):
        return s
    norm = float(np.linalg.norm(s))
    if dx * dx + dy * dy >= norm * norm:
        raise ValueError(f"Pole tilt {tilt} does not fit inside a Bloch vector of norm {norm}")
    return np.array([dx, dy, np.copysign(np.sqrt(norm * norm - dx * dx - dy * dy), s[2])])


def _signal_row(controls: np.ndarray, dy: np.ndarray, j: int) -> np.ndarray:
    return np.array([controls[j, 0], controls[j, 1], dy[j]])


def closed_loop_run(p: SystemParams, m: Optional[AugmentedNodeModel], controller: Optional[BaseController],
                    y0, grid: TimeGrid, target=None, noise_std: float = 0.0,
                    rng: Optional[np.random.Generator] = None,
                    feedback_source: str = MODEL_FEEDBACK) -> ClosedLoopResult:
    """
    Run the loop over ``grid``.

    Args:
        p: true plant parameters
        m: control-mode model (unused with plant feedback)
        controller: None runs with zero control
        y0: initial augmented state (its Bloch part starts the plant)
        target: recorded in the controller; defaults to the controller's own
        feedback_source: 'model' feeds back decoded estimates, 'plant' the true state
    """
    if controller is None:
        controller = ZeroController(target if target is not None else (0.0, 0.0, 1.0))
    if target is not None and not np.allclose(controller.target, target):
        raise ValueError(f"Controller target {controller.target} differs from run target {target}")
    y0 = as_augmented(y0)
    if noise_std > 0 and rng is None:
        raise ValueError("Measurement noise needs an rng")
    n = grid.n_steps
    dt = grid.dt
    if feedback_source == MODEL_FEEDBACK:
        if m is None:
            raise ValueError("Model feedback needs a trained model")
        if m.signal_spec != CONTROL:
            raise ValueError(f"Closed loop needs a control-mode model, got {m.signal_spec}")
        k = m.prefix_k
        if k > grid.n_points:
            raise ValueError(f"Encoder prefix {k} is longer than the grid ({grid.n_points} points)")
        warmup = k - 1
        latents = np.zeros((grid.n_points, m.latent_dim))
    elif feedback_source == PLANT_FEEDBACK:
        k = 0
        warmup = 0
        latents = None
    else:
        raise ValueError(f"Unsupported feedback source: {feedback_source}")

    states = np.zeros((grid.n_points, 3))
    states[0] = y0[:3]
    dy = np.zeros(grid.n_points)
    controls = np.zeros((grid.n_points, 2))
    predicted = np.zeros((grid.n_points, 5))
    controller.reset()

    for i in range(grid.n_points):
        t = grid.time(i)
        dy[i] = measurement_rate(states[i], p)
        if noise_std > 0:
            dy[i] += rng.normal(0.0, noise_std)
        try:
            if feedback_source == PLANT_FEEDBACK:
                predicted[i] = augmented_at(states[i], t, p)
            elif i == warmup:
                h = encode(m, y0, dy[:k])
                latents[0] = h
                for j in range(warmup):
                    h = latent_step(m, h, grid.time(j), dt, _signal_row(controls, dy, j))
                    latents[j + 1] = h
                predicted[:i + 1] = decode_trajectory(m, latents[:i + 1])
            elif i > warmup:
                latents[i] = latent_step(m, latents[i - 1], grid.time(i - 1), dt, _signal_row(controls, dy, i - 1))
                predicted[i] = decode_trajectory(m, latents[i])
        except IntegrationError as e:
            raise IntegrationError("Model estimate diverged in closed loop", t=t, step=i) from e

        if i >= warmup:
            state_hat = predicted[i, :3]
            state_prev = predicted[i - 1, :3] if i > 0 else state_hat
            u = np.asarray(controller.compute(i, t, state_hat, state_prev, dt), dtype=float)
            if not np.all(np.isfinite(u)):
                raise IntegrationError("Controller produced a non-finite field", t=t, step=i)
            controls[i] = u

        if i < n:
            try:
                states[i + 1] = plant_step(p, states[i], t, dt, controls[i])
            except IntegrationError as e:
                raise IntegrationError("Plant diverged in closed loop", t=t, step=i) from e

    return ClosedLoopResult(grid=grid, params=p, plant_states=states, predicted=predicted,
                            controls=controls, dy=dy, label=controller.label,
                            feedback_source=feedback_source, latents=latents,
                            metrics=realized_metrics(states, predicted, controls, dt, controller.target))


def run_state_feedback(p: SystemParams, controller: Optional[BaseController], y0, grid: TimeGrid,
                       noise_std: float = 0.0, rng: Optional[np.random.Generator] = None) -> ClosedLoopResult:
    """Closed loop on the true plant state (reference runs and excitation data)."""
    return closed_loop_run(p, None, controller, y0, grid, noise_std=noise_std, rng=rng,
                           feedback_source=PLANT_FEEDBACK)


def build_gain_schedule(p: SystemParams, m: Optional[AugmentedNodeModel], grid: TimeGrid, cfg: LqrConfig,
                        y0=None, design_rates: str = 'predicted') -> GainSchedule:
    """
    Gain schedule on the linear drift model.

    'predicted' takes delta and gamma from an uncontrolled calibration run of
    the model on the plant; 'analytic' uses the closed-form rates.
    """
    if design_rates == 'analytic':
        times = grid.times
        deltas, gammas = delta_t(times, p), gamma_t(times, p)
    elif design_rates == 'predicted':
        if m is None or y0 is None:
            raise ValueError("Predicted design rates need a model and an initial state")
        calibration = closed_loop_run(p, m, ZeroController(cfg.target), y0, grid)
        deltas, gammas = calibration.predicted[:, 3], calibration.predicted[:, 4]
    else:
        raise ValueError(f"Unsupported design rate source: {design_rates}")
    return riccati_solve(drift_schedule(grid, p, deltas, gammas), lqr_b_matrix(cfg.target), cfg, grid)
