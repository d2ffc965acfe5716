"""
Trajectory traces as a pandas DataFrame.
Provides observables (purity, coherence, populations, fidelity) and
plot-ready CSV / Excel export for simulated, predicted and closed-loop tracks.
"""

from typing import Optional

import numpy as np
import pandas as pd

from .domain.qubit.dynamics import coherence, fidelity, populations, purity

TRACE_COLUMNS = ['t', 'x', 'y', 'z', 'delta', 'gamma', 'dy', 'ux', 'uy']
OBSERVABLE_COLUMNS = ['purity', 'coherence', 'p1', 'p2']


class TrajectoryFrame(pd.DataFrame):
    """
    A DataFrame with one row per grid point of a trajectory.
    """

    _required_columns = TRACE_COLUMNS
    _metadata = ['label']
    label = ""

    @property
    def _constructor(self):
        return TrajectoryFrame

    def _validate_columns(self) -> None:
        missing_cols = [col for col in self._required_columns if col not in self.columns]
        if missing_cols:
            raise ValueError(f"Missing required columns: {missing_cols}")

    @classmethod
    def from_trajectory(cls, traj, label: Optional[str] = None) -> 'TrajectoryFrame':
        """
        Create a frame from a Trajectory.

        Args:
            traj: Trajectory (simulated, predicted or closed-loop)
            label: Tag stored on the frame and in a ``label`` column

        Returns:
            TrajectoryFrame with the trace columns in order
        """
        frame = cls({
            't': traj.grid.times,
            'x': traj.states[:, 0],
            'y': traj.states[:, 1],
            'z': traj.states[:, 2],
            'delta': traj.states[:, 3],
            'gamma': traj.states[:, 4],
            'dy': traj.dy,
            'ux': traj.controls[:, 0],
            'uy': traj.controls[:, 1],
        })
        frame.label = label if label is not None else traj.label
        frame._validate_columns()
        return frame

    def bloch(self) -> np.ndarray:
        return self[['x', 'y', 'z']].to_numpy()

    def get_observables(self) -> pd.DataFrame:
        """Per-time purity, coherence x(t) and populations P1, P2."""
        bloch = self.bloch()
        p1, p2 = populations(bloch)
        return pd.DataFrame({
            't': self['t'].to_numpy(),
            'purity': purity(bloch),
            'coherence': coherence(bloch),
            'p1': p1,
            'p2': p2,
        })

    def with_observables(self) -> 'TrajectoryFrame':
        frame = self.copy()
        observables = self.get_observables()
        for col in OBSERVABLE_COLUMNS:
            frame[col] = observables[col].to_numpy()
        return frame

    def get_statistics(self, target=None) -> dict:
        bloch = self.bloch()
        stats = {
            'points': len(self),
            'max_bloch_norm': float(np.linalg.norm(bloch, axis=1).max()),
            'final_purity': float(purity(bloch[-1])),
        }
        if target is not None:
            stats['final_fidelity'] = float(fidelity(bloch[-1], np.asarray(target, dtype=float)))
        return stats

    def export(self, filepath: str) -> str:
        """Write CSV (or .xlsx through openpyxl) with observables attached."""
        frame = self.with_observables()
        if filepath.endswith('.xlsx'):
            frame.to_excel(filepath, index=False, engine='openpyxl')
        else:
            frame.to_csv(filepath, index=False)
        return filepath
