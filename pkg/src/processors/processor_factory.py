import json

from .checkpoint_processor import CheckpointProcessor
from .dataset_processor import DatasetProcessor
from ..FileRead import read_first_line, read_json


class ProcessorFactory:
    _processors = {
        'dataset': DatasetProcessor,
        'checkpoint': CheckpointProcessor,
    }

    @classmethod
    def create(cls, format_type: str, **kwargs):
        """Create and return appropriate processor instance."""
        processor_class = cls._processors.get(format_type.lower())
        if not processor_class:
            raise ValueError(f"Unsupported format type: {format_type}")
        return processor_class(**kwargs)

    @classmethod
    def detect_format(cls, file_path: str) -> str:
        """Detect the artifact kind from the file's header object."""
        try:
            header = read_first_line(file_path)
        except ValueError:
            # pretty-printed JSON spans several lines
            try:
                header = read_json(file_path)
            except (ValueError, json.JSONDecodeError) as e:
                raise ValueError(f"Error detecting format of {file_path}: {str(e)}") from e
        kind = header.get('kind') if isinstance(header, dict) else None
        if kind not in cls._processors:
            raise ValueError(f"Unable to detect format of {file_path} - kind {kind!r} is not supported")
        return kind

    @classmethod
    def load(cls, file_path: str, **kwargs):
        return cls.create(cls.detect_format(file_path), **kwargs).process(file_path)
