"""
Pytest configuration file for shared fixtures.
"""
import os
import tempfile

import pytest

from src.LogManager import OUTPUT_ROOT_ENV, LogManager, set_log_manager


@pytest.fixture
def temp_dir():
    """Create a temporary directory for test files."""
    with tempfile.TemporaryDirectory() as tmpdirname:
        yield tmpdirname


@pytest.fixture(autouse=True)
def setup_test_environment():
    """Point the output root at a scratch directory and use a quiet log manager."""
    original_env = dict(os.environ)
    with tempfile.TemporaryDirectory() as output_root:
        os.environ['TEST_MODE'] = 'true'
        os.environ[OUTPUT_ROOT_ENV] = output_root
        set_log_manager(LogManager(log_dir=output_root, echo=False))

        yield

        set_log_manager(None)
        os.environ.clear()
        os.environ.update(original_env)
