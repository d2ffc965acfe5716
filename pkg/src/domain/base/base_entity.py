"""
Base class for all domain entities.
"""
import dataclasses
from abc import ABC, abstractmethod
from typing import Any, Dict

import numpy as np


class BaseEntity(ABC):
    """Base class for dataclass-backed domain entities."""

    @abstractmethod
    def validate(self) -> bool:
        """
        Validate the entity against its domain rules.
        Must be implemented by concrete classes.

        Returns:
            bool: True if valid

        Raises:
            ValueError: describing the first violated rule
        """
        pass

    def to_dict(self) -> Dict[str, Any]:
        """
        Convert entity to dictionary representation.

        Returns:
            Dictionary of plain Python values (arrays become lists)
        """
        result = {}
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if isinstance(value, BaseEntity):
                value = value.to_dict()
            elif isinstance(value, np.ndarray):
                value = value.tolist()
            elif hasattr(value, 'to_dict'):
                value = value.to_dict()
            result[f.name] = value
        return result
