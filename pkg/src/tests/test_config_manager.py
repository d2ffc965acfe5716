"""
Tests for configuration loading, merging and overrides.
"""
import os
import tempfile
import unittest

import yaml

from src.config.config_manager import ConfigManager, parse_override
from src.factory.regime_factory import RegimeFactory
from src.numerics.integrate import TimeGrid


class TestConfigManager(unittest.TestCase):
    def setUp(self):
        """Set up test environment before each test."""
        self.tmp = tempfile.TemporaryDirectory()

    def tearDown(self):
        self.tmp.cleanup()

    def write_config(self, data, name='user.yaml'):
        path = os.path.join(self.tmp.name, name)
        with open(path, 'w') as f:
            yaml.safe_dump(data, f)
        return path

    def test_defaults(self):
        """Checked-in defaults carry the documented constants."""
        config = ConfigManager()
        self.assertEqual(config.get('physics.zeta'), 0.9)
        self.assertEqual(config.get('grids.filtering.n_steps'), 500)
        self.assertEqual(config.get('control.pd.kp'), [5.0, 10.0])
        self.assertEqual(config.get('control.lqr.r'), [0.1, 50.0])
        self.assertEqual(config.get('model.prefix_k'), 10)
        self.assertEqual(config.get('missing.key', 'fallback'), 'fallback')
        self.assertIn('regimes', config.get_available_sections())

    def test_user_file_merges(self):
        """A user file overrides single keys and keeps the rest."""
        path = self.write_config({'training': {'epochs': 7}, 'physics': {'zeta': 0.5}})
        config = ConfigManager(path)
        self.assertEqual(config.get('training.epochs'), 7)
        self.assertEqual(config.get('training.batch_size'), 32)
        self.assertEqual(config.get('physics.zeta'), 0.5)
        self.assertEqual(config.get('physics.kbt'), 1.0)

    def test_overrides_win(self):
        """--set values apply after the user file."""
        path = self.write_config({'training': {'epochs': 7}})
        config = ConfigManager(path, ['training.epochs=3', 'control.target=[1, 0, 0]'])
        self.assertEqual(config.get('training.epochs'), 3)
        self.assertEqual(config.get('control.target'), [1, 0, 0])

    def test_parse_override(self):
        """Values are parsed as YAML with floats in exponent form."""
        self.assertEqual(parse_override('training.learning_rate=1e-3'), ('training.learning_rate', 1e-3))
        self.assertEqual(parse_override('training.resume_from=null'), ('training.resume_from', None))
        self.assertEqual(parse_override('control.feedback_source=plant'), ('control.feedback_source', 'plant'))
        for bad in ('training.epochs', '=3'):
            with self.assertRaises(ValueError):
                parse_override(bad)

    def test_override_through_scalar(self):
        """Overrides cannot descend into a scalar."""
        with self.assertRaises(ValueError):
            ConfigManager(overrides=['physics.zeta.value=1'])

    def test_bad_files(self):
        """Missing, malformed and non-mapping files are rejected."""
        with self.assertRaises(ValueError):
            ConfigManager(os.path.join(self.tmp.name, 'missing.yaml'))
        broken = os.path.join(self.tmp.name, 'broken.yaml')
        with open(broken, 'w') as f:
            f.write("training: [unclosed\n")
        with self.assertRaises(ValueError):
            ConfigManager(broken)
        with self.assertRaises(ValueError):
            ConfigManager(self.write_config([1, 2, 3], 'list.yaml'))

    def test_returned_values_are_copies(self):
        """Mutating a returned section leaves the config untouched."""
        config = ConfigManager()
        section = config.section('control')
        section['target'][2] = -1.0
        self.assertEqual(config.get('control.target'), [0.0, 0.0, 1.0])

    def test_regimes(self):
        """Regime blocks resolve split aliases and grids."""
        config = ConfigManager()
        self.assertEqual(config.regime(1, 'wd')['alpha'], [0.45, 0.65])
        self.assertEqual(config.regime(2, 'ood_test')['omega0'], [0.6, 1.5])
        with self.assertRaises(ValueError):
            config.regime(1, 'validation')
        with self.assertRaises(ValueError):
            config.regime(5, 'train')
        self.assertEqual(RegimeFactory.create_grid(3, config), TimeGrid(0.0, 1.0, 500))
        self.assertEqual(RegimeFactory.create_grid(1, config), TimeGrid(0.0, 5.0, 500))
        self.assertEqual(RegimeFactory.signal_spec(3, config), 'control')
        self.assertEqual(RegimeFactory.signal_spec(2, config), 'filtering')

    def test_regime_factory(self):
        """Regimes carry the configured intervals and control flag."""
        regime = RegimeFactory.create_regime(3, 'ood')
        self.assertTrue(regime.controlled)
        self.assertEqual(regime.split, 'ood_test')
        self.assertEqual(regime.bounds('m_strength'), (0.2, 0.6))
        fixed = RegimeFactory.create_regime(1, 'train')
        self.assertTrue(fixed.is_fixed('omega0'))
        self.assertFalse(fixed.is_fixed('alpha'))

    def test_reload(self):
        """reload picks up edits to the user file."""
        path = self.write_config({'training': {'epochs': 7}})
        config = ConfigManager(path)
        self.write_config({'training': {'epochs': 9}})
        config.reload()
        self.assertEqual(config.get('training.epochs'), 9)


if __name__ == '__main__':
    unittest.main()
