"""
Tests for the processor factory functionality.
"""
import json
import os
import tempfile
import unittest
from pathlib import Path

import numpy as np
from numpy.testing import assert_array_equal

from src.FileRead import write_json
from src.domain.qubit.datagen import build_dataset
from src.factory.regime_factory import RegimeFactory
from src.model.augmented_node import CONTROL, AugmentedNodeModel
from src.numerics.integrate import TimeGrid
from src.numerics.nn import AdamState
from src.processors import Checkpoint, CheckpointProcessor, DatasetProcessor, ProcessorFactory


class TestProcessorFactory(unittest.TestCase):
    def setUp(self):
        """Set up test environment before each test."""
        self.tmp = tempfile.TemporaryDirectory()
        self.folder = self.tmp.name
        self.grid = TimeGrid(0.0, 0.5, 10)

    def tearDown(self):
        self.tmp.cleanup()

    def create_test_dataset(self, name='data.ndjson'):
        """Write a small phase 1 dataset for testing."""
        dataset = build_dataset(RegimeFactory.create_regime(1, 'train'), 2, self.grid, seed=0)
        path = os.path.join(self.folder, name)
        DatasetProcessor().write(path, dataset)
        return path, dataset

    def create_test_checkpoint(self, name='model.json'):
        model = AugmentedNodeModel.create(latent_dim=3, hidden=(4,), prefix_k=2, signal_spec=CONTROL, seed=3)
        optimizer = AdamState.zeros(model.param_count, lr=5e-3)
        ckpt = Checkpoint(model=model, optimizer=optimizer, training={'epoch': 4, 'seed': 3, 'phase': 3})
        path = os.path.join(self.folder, name)
        CheckpointProcessor().write(path, ckpt)
        return path, ckpt

    def test_detect_format(self):
        """Test format detection from the header kind."""
        dataset_path, _ = self.create_test_dataset()
        checkpoint_path, _ = self.create_test_checkpoint()
        self.assertEqual(ProcessorFactory.detect_format(dataset_path), 'dataset')
        self.assertEqual(ProcessorFactory.detect_format(checkpoint_path), 'checkpoint')

    def test_create_processor(self):
        """Test processor creation."""
        self.assertIsInstance(ProcessorFactory.create('dataset'), DatasetProcessor)
        self.assertIsInstance(ProcessorFactory.create('Checkpoint'), CheckpointProcessor)

    def test_invalid_format(self):
        """Test handling of invalid format."""
        with self.assertRaises(ValueError):
            ProcessorFactory.create('invalid_format')

    def test_detect_format_invalid_file(self):
        """Test format detection with an empty or foreign file."""
        empty = Path(self.folder) / 'empty.txt'
        empty.write_text('')
        with self.assertRaises(ValueError):
            ProcessorFactory.detect_format(str(empty))
        report = os.path.join(self.folder, 'report.json')
        write_json(report, {'schema_version': 1, 'kind': 'report', 'rows': []})
        with self.assertRaises(ValueError):
            ProcessorFactory.detect_format(report)

    def test_load_dataset(self):
        """A dataset loads back through the factory."""
        path, dataset = self.create_test_dataset()
        loaded = ProcessorFactory.load(path)
        self.assertEqual(len(loaded), 2)
        assert_array_equal(loaded.stacked_states(), dataset.stacked_states())
        self.assertEqual(loaded.header['regime']['phase'], 1)

    def test_load_checkpoint(self):
        """A checkpoint restores model, optimizer and training metadata."""
        path, ckpt = self.create_test_checkpoint()
        loaded = ProcessorFactory.load(path)
        assert_array_equal(loaded.model.flatten(), ckpt.model.flatten())
        self.assertEqual(loaded.model.signal_spec, CONTROL)
        self.assertEqual(loaded.optimizer.lr, 5e-3)
        self.assertEqual(loaded.training, {'epoch': 4, 'seed': 3, 'phase': 3})

    def test_checkpoint_without_optimizer(self):
        """Optimizer state is optional."""
        model = AugmentedNodeModel.create(latent_dim=2, hidden=(3,), prefix_k=1)
        path = os.path.join(self.folder, 'bare.json')
        CheckpointProcessor().write(path, Checkpoint(model=model))
        self.assertIsNone(ProcessorFactory.load(path).optimizer)

    def test_schema_version_checked(self):
        """Files from another schema version are rejected."""
        path, _ = self.create_test_checkpoint()
        with open(path) as f:
            payload = json.load(f)
        payload['schema_version'] = 99
        write_json(path, payload)
        with self.assertRaises(ValueError):
            ProcessorFactory.load(path)

    def test_checkpoint_missing_network(self):
        """A checkpoint without decoder parameters is rejected."""
        path, _ = self.create_test_checkpoint()
        with open(path) as f:
            payload = json.load(f)
        del payload['params']['decoder']
        write_json(path, payload)
        with self.assertRaises(ValueError):
            CheckpointProcessor().process(path)

    def test_checkpoint_inconsistent_dims(self):
        """Parameter vectors must match the recorded architecture."""
        path, _ = self.create_test_checkpoint()
        with open(path) as f:
            payload = json.load(f)
        payload['params']['encoder'] = payload['params']['encoder'][:-1]
        write_json(path, payload)
        with self.assertRaises(ValueError):
            CheckpointProcessor().process(path)

    def test_dataset_bad_series_length(self):
        """Series that do not cover the grid are rejected."""
        path, _ = self.create_test_dataset()
        with open(path) as f:
            lines = [json.loads(line) for line in f]
        lines[1]['dy'] = lines[1]['dy'][:-1]
        with open(path, 'w') as f:
            for obj in lines:
                f.write(json.dumps(obj) + '\n')
        with self.assertRaises(ValueError):
            DatasetProcessor().process(path)

    def test_dataset_kind_checked(self):
        """A checkpoint cannot be read as a dataset."""
        path, _ = self.create_test_checkpoint()
        with self.assertRaises(ValueError):
            DatasetProcessor().process(path)

    def test_dataset_values_lossless(self):
        """Floats survive the text format bit for bit."""
        path, dataset = self.create_test_dataset()
        loaded = DatasetProcessor().process(path)
        self.assertTrue(np.array_equal(loaded.stacked_dy(), dataset.stacked_dy()))


if __name__ == '__main__':
    unittest.main()
