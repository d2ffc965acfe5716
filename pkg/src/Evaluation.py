"""
Metric computation and report emission: per-component MSE tables, control
metrics (energy, final deviation, fidelity), observable traces and raw
latent dumps.
"""

import os
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .FileRead import SCHEMA_VERSION, ensure_parent, read_json, write_json
from .TrajectoryFrame import TrajectoryFrame
from .domain.control.closed_loop import control_energy, realized_metrics
from .domain.qubit.entities import AUGMENTED_COLUMNS
from .model.augmented_node import SignalTrack, encode, rollout

MSE_COLUMNS = ['Split'] + list(AUGMENTED_COLUMNS)
CONTROL_COLUMNS = ['Mode', 'Control', 'Split', 'MSE', 'Energy', 'Dev', 'Fidelity']


@dataclass
class ControlMetrics:
    traj_mse: float
    energy: float
    deviation: float
    fidelity: float
    mode: str = 'Real'
    control: str = 'PD'
    split: str = 'WD'

    def to_row(self) -> Dict[str, Any]:
        return {'Mode': self.mode, 'Control': self.control, 'Split': self.split, 'MSE': self.traj_mse,
                'Energy': self.energy, 'Dev': self.deviation, 'Fidelity': self.fidelity}


def control_metrics(res, target, mode: str = 'real', split: str = 'WD') -> ControlMetrics:
    """
    Metrics of a closed-loop run.

    ``mode='real'`` scores the final plant state, ``'predicted'`` the final
    decoded estimate. ``traj_mse`` compares the predicted and plant Bloch tracks.
    Metrics the run recorded for the same target are reused.
    """
    if mode not in ('real', 'predicted'):
        raise ValueError(f"Unsupported metric mode: {mode}")
    target = np.asarray(target, dtype=float)
    metrics = res.metrics
    if not metrics or not np.allclose(metrics['target'], target):
        metrics = realized_metrics(res.plant_states, res.predicted, res.controls, res.grid.dt, target)
    return ControlMetrics(
        traj_mse=metrics['traj_mse'],
        energy=metrics['energy'],
        deviation=metrics[f'{mode}_deviation'],
        fidelity=metrics[f'{mode}_fidelity'],
        mode='Real' if mode == 'real' else 'Pred',
        control=res.label,
        split=split,
    )


def control_metric_rows(res, target, split: str = 'WD') -> List[Dict[str, Any]]:
    """Real and predicted rows of one run, in that order."""
    return [control_metrics(res, target, mode, split).to_row() for mode in ('real', 'predicted')]


def mse_row(split: str, mse: Dict[str, float]) -> Dict[str, Any]:
    row = {'Split': split}
    row.update({col: mse[col] for col in AUGMENTED_COLUMNS})
    return row


def mse_histogram(values, bins: int = 20, log_range: Sequence[float] = (-6.0, 1.0)) -> pd.DataFrame:
    """
    Counts of per-trajectory MSE over fixed log10 bins.

    Fixed edges keep histograms of different splits comparable. Values below
    or above the range land in the first or last bin.
    """
    if bins < 1:
        raise ValueError(f"bins must be >= 1, got {bins}")
    lo, hi = (float(v) for v in log_range)
    if not lo < hi:
        raise ValueError(f"Histogram range must be increasing, got {log_range}")
    edges = np.linspace(lo, hi, bins + 1)
    logs = np.log10(np.maximum(np.asarray(values, dtype=float), np.finfo(float).tiny))
    counts, _ = np.histogram(np.clip(logs, lo, hi), bins=edges)
    return pd.DataFrame({'log10_lo': edges[:-1], 'log10_hi': edges[1:], 'count': counts})


def emit_error_profile(profile, out: str, meta: Optional[Dict[str, Any]] = None, excel: bool = False,
                       bins: int = 20, log_range: Sequence[float] = (-6.0, 1.0)) -> Tuple[str, ...]:
    """
    Write ``<stem>_trajectories``, ``<stem>_histogram`` and ``<stem>_mse_t`` reports.

    Returns:
        JSON paths written, in that order.
    """
    stem = _report_stem(out)
    meta = {**(meta or {}), 'split': profile.split}
    histogram = mse_histogram(profile.trajectories['MSE'].to_numpy(), bins, log_range)
    written = []
    for suffix, frame in (('trajectories', profile.trajectories), ('histogram', histogram),
                          ('mse_t', profile.over_time)):
        paths = emit_report(frame.to_dict('records'), f"{stem}_{suffix}", list(frame.columns), meta, excel)
        written.append(paths[0])
    return tuple(written)


def trace_observables(traj) -> pd.DataFrame:
    return TrajectoryFrame.from_trajectory(traj).get_observables()


def latent_frame(m, dataset, label: str) -> pd.DataFrame:
    """Latent trajectories of every dataset record, one row per grid point."""
    grid = dataset.grid
    signals = SignalTrack.from_dataset(dataset, m.signal_spec)
    h0 = encode(m, dataset.stacked_y0(), signals.dy[:, :m.prefix_k])
    latents = rollout(m, h0, grid, signals)
    n_traj, n_points, d = latents.shape
    frame = pd.DataFrame(latents.reshape(-1, d), columns=[f"h_{j + 1}" for j in range(d)])
    traj_ids = np.array([traj.traj_id for traj in dataset.trajectories])
    frame.insert(0, 't', np.tile(grid.times, n_traj))
    frame.insert(0, 'label', label)
    frame.insert(0, 'traj_id', np.repeat(traj_ids, n_points))
    return frame


def dump_latents(m, dataset, out: str, label: str = '') -> str:
    """CSV with columns traj_id, label, t, h_1..h_d."""
    ensure_parent(out)
    latent_frame(m, dataset, label).to_csv(out, index=False)
    return out


def _report_stem(out: str) -> str:
    stem, ext = os.path.splitext(out)
    return stem if ext.lower() in ('.json', '.csv', '.xlsx') else out


def emit_report(rows: Sequence[Dict[str, Any]], out: str, columns: Optional[Sequence[str]] = None,
                meta: Optional[Dict[str, Any]] = None, excel: bool = False) -> Tuple[str, ...]:
    """
    Write ``<out>.json`` and ``<out>.csv`` (and ``<out>.xlsx`` when requested).

    Returns:
        Paths written, JSON first.
    """
    rows = [dict(row) for row in rows]
    if columns is None:
        columns = []
        for row in rows:
            columns.extend(key for key in row if key not in columns)
    columns = list(columns)
    stem = _report_stem(out)
    json_path = write_json(f"{stem}.json", {
        'schema_version': SCHEMA_VERSION,
        'kind': 'report',
        'meta': meta or {},
        'columns': columns,
        'rows': rows,
    })
    csv_path = f"{stem}.csv"
    ensure_parent(csv_path)
    if columns:
        pd.DataFrame(rows, columns=columns).to_csv(csv_path, index=False)
    else:
        open(csv_path, 'w').close()
    paths = (json_path, csv_path)
    if excel:
        xlsx_path = f"{stem}.xlsx"
        pd.DataFrame(rows, columns=columns).to_excel(xlsx_path, index=False, engine='openpyxl')
        paths = paths + (xlsx_path,)
    return paths


def read_report(path: str) -> Tuple[List[Dict[str, Any]], Dict[str, Any]]:
    """Rows and meta of a report JSON file."""
    payload = read_json(f"{_report_stem(path)}.json")
    if payload.get('kind') != 'report':
        raise ValueError(f"{path} is not a report file")
    return payload['rows'], payload.get('meta', {})


def format_table(rows: Sequence[Dict[str, Any]], columns: Sequence[str]) -> str:
    """Console rendering of a report table."""
    if not rows:
        return "(empty)"
    frame = pd.DataFrame(list(rows), columns=list(columns))
    return frame.to_string(index=False, float_format=lambda v: f"{v:.4g}")
