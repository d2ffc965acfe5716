"""
Tests for metrics, reports, latent dumps and trajectory frames.
"""
import json
import os

import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from src.Evaluation import (CONTROL_COLUMNS, MSE_COLUMNS, ControlMetrics, control_energy, control_metric_rows,
                            control_metrics, dump_latents, emit_error_profile, emit_report, format_table, latent_frame,
                            mse_histogram, mse_row, read_report, trace_observables)
from src.FileRead import write_json
from src.Trainer import ErrorProfile
from src.TrajectoryFrame import TrajectoryFrame
from src.domain.control.closed_loop import ClosedLoopResult
from src.domain.qubit.datagen import build_dataset, simulate_trajectory
from src.domain.qubit.entities import SystemParams
from src.factory.regime_factory import RegimeFactory
from src.model.augmented_node import AugmentedNodeModel
from src.numerics.integrate import TimeGrid

PARAMS = SystemParams(alpha=0.5, r=0.4, m_strength=0.4, omega0=1.0)
NORTH = np.array([0.0, 0.0, 1.0])


def closed_loop_result(final_plant, final_predicted, grid=TimeGrid(0.0, 1.0, 4)):
    n = grid.n_points
    plant = np.zeros((n, 3))
    plant[:, 2] = -1.0
    plant[-1] = final_plant
    predicted = np.zeros((n, 5))
    predicted[:, :3] = plant
    predicted[-1, :3] = final_predicted
    return ClosedLoopResult(grid=grid, params=PARAMS, plant_states=plant, predicted=predicted,
                            controls=np.ones((n, 2)), dy=np.zeros(n), label='PD')


class TestControlMetrics:
    def test_energy_constant_field(self):
        """A unit field held over unit time has unit energy."""
        grid = TimeGrid(0.0, 1.0, 500)
        controls = np.column_stack([np.ones(grid.n_points), np.zeros(grid.n_points)])
        assert control_energy(controls, grid.dt) == pytest.approx(1.0, abs=1e-12)

    def test_energy_sine_field(self):
        """sin(pi t) on one axis integrates to one half."""
        grid = TimeGrid(0.0, 1.0, 500)
        controls = np.column_stack([np.zeros(grid.n_points), np.sin(np.pi * grid.times)])
        assert control_energy(controls, grid.dt) == pytest.approx(0.5, abs=1e-4)

    def test_fidelity_and_deviation(self):
        """A final z of 0.88 gives fidelity 0.94 and deviation 0.0144."""
        res = closed_loop_result([0.0, 0.0, 0.88], [0.0, 0.0, 0.88])
        metrics = control_metrics(res, NORTH, 'real', 'WD')
        assert metrics.fidelity == pytest.approx(0.94, abs=1e-12)
        assert metrics.deviation == pytest.approx(0.0144, abs=1e-12)
        assert metrics.traj_mse == 0.0
        assert metrics.energy == pytest.approx(2.0, abs=1e-12)

    def test_real_and_predicted_rows(self):
        """Real rows score the plant, predicted rows the estimate."""
        res = closed_loop_result([0.0, 0.0, 1.0], [0.0, 0.6, 0.8])
        real, pred = control_metric_rows(res, NORTH, 'OOD')
        assert list(real) == CONTROL_COLUMNS
        assert (real['Mode'], pred['Mode']) == ('Real', 'Pred')
        assert real['Control'] == 'PD' and real['Split'] == 'OOD'
        assert real['Fidelity'] == 1.0
        assert pred['Fidelity'] == pytest.approx(0.9, abs=1e-12)
        assert pred['Dev'] == pytest.approx(0.4, abs=1e-12)
        expected_mse = (0.36 + 0.04) / (res.grid.n_points * 3)
        assert real['MSE'] == pytest.approx(expected_mse, abs=1e-15)
        assert pred['MSE'] == real['MSE']

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            control_metrics(closed_loop_result(NORTH, NORTH), NORTH, 'oracle')

    def test_row_layout(self):
        row = ControlMetrics(0.1, 2.0, 0.01, 0.99, 'Pred', 'LQR', 'WD').to_row()
        assert row == {'Mode': 'Pred', 'Control': 'LQR', 'Split': 'WD', 'MSE': 0.1, 'Energy': 2.0,
                       'Dev': 0.01, 'Fidelity': 0.99}
        mse = mse_row('wd_test', {'x': 1.0, 'y': 2.0, 'z': 3.0, 'delta': 4.0, 'gamma': 5.0})
        assert list(mse) == MSE_COLUMNS


class TestReports:
    def test_round_trip(self, temp_dir):
        """JSON, CSV and xlsx carry the same rows."""
        rows = [mse_row('train', {'x': 0.1, 'y': 0.2, 'z': 0.3, 'delta': 1e-5, 'gamma': 2e-6}),
                mse_row('wd_test', {'x': 0.4, 'y': 0.5, 'z': 0.6, 'delta': 3e-5, 'gamma': 4e-6})]
        paths = emit_report(rows, os.path.join(temp_dir, 'mse.json'), MSE_COLUMNS, meta={'seed': 3}, excel=True)
        assert [os.path.basename(p) for p in paths] == ['mse.json', 'mse.csv', 'mse.xlsx']
        loaded, meta = read_report(paths[0])
        assert loaded == rows
        assert meta == {'seed': 3}
        csv = pd.read_csv(paths[1])
        assert list(csv.columns) == MSE_COLUMNS
        assert_allclose(csv['z'].to_numpy(), [0.3, 0.6])
        xlsx = pd.read_excel(paths[2], engine='openpyxl')
        assert list(xlsx['Split']) == ['train', 'wd_test']

    def test_empty_report(self, temp_dir):
        """An empty report still writes both files."""
        json_path, csv_path = emit_report([], os.path.join(temp_dir, 'empty'))
        rows, meta = read_report(json_path)
        assert rows == [] and meta == {}
        assert os.path.getsize(csv_path) == 0

    def test_columns_inferred(self, temp_dir):
        """Without explicit columns the first-seen key order is used."""
        json_path, _ = emit_report([{'b': 1, 'a': 2}, {'c': 3}], os.path.join(temp_dir, 'inferred'))
        with open(json_path) as f:
            assert json.load(f)['columns'] == ['b', 'a', 'c']

    def test_read_rejects_other_kinds(self, temp_dir):
        path = write_json(os.path.join(temp_dir, 'other.json'), {'kind': 'dataset'})
        with pytest.raises(ValueError):
            read_report(path)

    def test_format_table(self):
        assert format_table([], MSE_COLUMNS) == "(empty)"
        text = format_table([{'Split': 'wd', 'x': 0.5}], ['Split', 'x'])
        assert 'wd' in text and '0.5' in text


class TestErrorDistribution:
    def test_histogram_fixed_edges(self):
        """Counts fall into log10 bins; out-of-range values go to the end bins."""
        frame = mse_histogram([3e-6, 2e-5, 0.05, 0.5, 1e-9, 100.0, 0.0], bins=7, log_range=(-6, 1))
        assert list(frame.columns) == ['log10_lo', 'log10_hi', 'count']
        assert_allclose(frame['log10_lo'], np.arange(-6, 1))
        assert list(frame['count']) == [3, 1, 0, 0, 1, 1, 1]

    def test_histogram_validation(self):
        with pytest.raises(ValueError):
            mse_histogram([0.1], bins=0)
        with pytest.raises(ValueError):
            mse_histogram([0.1], log_range=(1, -1))

    def test_emit_error_profile(self, temp_dir):
        """Three reports share the stem and carry the split."""
        profile = ErrorProfile(
            split='ood_test',
            mse={col: 0.1 for col in ('x', 'y', 'z', 'delta', 'gamma')},
            trajectories=pd.DataFrame({'traj_id': [0, 1], 'label': ['', ''], 'MSE': [0.02, 0.3]}),
            over_time=pd.DataFrame({'t': [0.0, 0.5], 'x': [0.0, 0.1], 'y': [0.0, 0.1], 'z': [0.0, 0.1],
                                    'delta': [0.0, 0.1], 'gamma': [0.0, 0.1], 'mean': [0.0, 0.1]}),
        )
        paths = emit_error_profile(profile, os.path.join(temp_dir, 'ood.json'), {'seed': 4}, bins=7)
        assert [os.path.basename(p) for p in paths] == ['ood_trajectories.json', 'ood_histogram.json',
                                                        'ood_mse_t.json']
        histogram, meta = read_report(paths[1])
        assert meta == {'seed': 4, 'split': 'ood_test'}
        assert [row['count'] for row in histogram] == [0, 0, 0, 0, 1, 1, 0]
        over_time, _ = read_report(paths[2])
        assert over_time[1]['mean'] == 0.1


class TestLatentDump:
    def setup_method(self):
        grid = TimeGrid(0.0, 0.5, 10)
        self.dataset = build_dataset(RegimeFactory.create_regime(2, 'wd'), 3, grid, seed=4)
        self.model = AugmentedNodeModel.create(latent_dim=4, hidden=(5,), prefix_k=2, seed=0)

    def test_shape(self):
        """One row per trajectory and grid point, one column per latent."""
        frame = latent_frame(self.model, self.dataset, 'wd')
        assert list(frame.columns) == ['traj_id', 'label', 't', 'h_1', 'h_2', 'h_3', 'h_4']
        assert len(frame) == 3 * 11
        assert list(frame['traj_id'].unique()) == [0, 1, 2]
        assert_allclose(frame['t'].to_numpy()[:11], self.dataset.grid.times)

    def test_deterministic(self, temp_dir):
        """Dumping twice gives byte-identical files."""
        a = dump_latents(self.model, self.dataset, os.path.join(temp_dir, 'a', 'latents.csv'), 'wd')
        b = dump_latents(self.model, self.dataset, os.path.join(temp_dir, 'b', 'latents.csv'), 'wd')
        with open(a) as fa, open(b) as fb:
            assert fa.read() == fb.read()


class TestTrajectoryFrame:
    def setup_method(self):
        grid = TimeGrid(0.0, 1.0, 20)
        self.traj = simulate_trajectory(PARAMS, [0.0, 0.0, 1.0, 0.0, 0.0], None, grid, label='demo')

    def test_columns_and_label(self):
        frame = TrajectoryFrame.from_trajectory(self.traj)
        assert list(frame.columns) == ['t', 'x', 'y', 'z', 'delta', 'gamma', 'dy', 'ux', 'uy']
        assert frame.label == 'demo'
        assert_array_equal(frame.bloch(), self.traj.bloch)

    def test_observables(self):
        """A pure initial state has purity 1 and P1 = 1."""
        obs = trace_observables(self.traj)
        assert list(obs.columns) == ['t', 'purity', 'coherence', 'p1', 'p2']
        assert obs['purity'].iloc[0] == 1.0
        assert obs['p1'].iloc[0] == 1.0
        assert_allclose(obs['p1'] + obs['p2'], 1.0, atol=1e-15)
        assert (obs['purity'] <= 1.0 + 1e-12).all()

    def test_statistics(self):
        stats = TrajectoryFrame.from_trajectory(self.traj).get_statistics(NORTH)
        assert stats['points'] == 21
        assert stats['max_bloch_norm'] <= 1.0 + 1e-6
        assert 0.0 <= stats['final_fidelity'] <= 1.0

    def test_export(self, temp_dir):
        """Exports carry the trace plus the observables."""
        path = TrajectoryFrame.from_trajectory(self.traj).export(os.path.join(temp_dir, 'trace.csv'))
        frame = pd.read_csv(path)
        assert list(frame.columns)[-4:] == ['purity', 'coherence', 'p1', 'p2']
        assert len(frame) == 21
        xlsx = TrajectoryFrame.from_trajectory(self.traj).export(os.path.join(temp_dir, 'trace.xlsx'))
        assert len(pd.read_excel(xlsx, engine='openpyxl')) == 21
