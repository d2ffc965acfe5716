"""
Base class for artifact file processors: extract -> validate -> transform.
"""
from abc import ABC, abstractmethod
from typing import Any, Optional

from ..FileRead import SCHEMA_VERSION
from ..LogManager import LogManager, get_log_manager


class BaseProcessor(ABC):
    kind = "base"

    def __init__(self, log_manager: Optional[LogManager] = None):
        self.log_manager = log_manager

    def set_log_manager(self, log_manager: LogManager) -> None:
        self.log_manager = log_manager

    def log(self, message: str) -> None:
        (self.log_manager or get_log_manager()).log(message)

    def check_header(self, header: Any, file_path: str) -> None:
        if not isinstance(header, dict):
            raise ValueError(f"{file_path}: header must be a JSON object")
        if header.get('kind') != self.kind:
            raise ValueError(f"{file_path}: expected a {self.kind} file, found kind={header.get('kind')!r}")
        if header.get('schema_version') != SCHEMA_VERSION:
            raise ValueError(f"{file_path}: unsupported schema version {header.get('schema_version')!r}")

    @abstractmethod
    def extract_data(self, file_path: str) -> Any:
        """Read the raw file content."""
        pass

    @abstractmethod
    def validate(self, data: Any) -> Any:
        """Validate the extracted data."""
        pass

    @abstractmethod
    def transform(self, data: Any) -> Any:
        """Build domain objects from validated data."""
        pass

    def process(self, file_path: str) -> Any:
        """Main processing pipeline."""
        self.log(f"Reading {self.kind} file: {file_path}")
        data = self.extract_data(file_path)
        validated_data = self.validate(data)
        return self.transform(validated_data)
