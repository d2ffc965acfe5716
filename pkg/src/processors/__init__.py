from .processor_factory import ProcessorFactory
from .base_processor import BaseProcessor
from .checkpoint_processor import Checkpoint, CheckpointProcessor
from .dataset_processor import DatasetProcessor

__all__ = ['ProcessorFactory', 'BaseProcessor', 'Checkpoint', 'CheckpointProcessor', 'DatasetProcessor']
