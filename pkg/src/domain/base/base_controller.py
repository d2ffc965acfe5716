"""
Base class for all feedback controllers.
"""
from abc import ABC, abstractmethod
from typing import Optional

import numpy as np

from ...LogManager import LogManager, get_log_manager


class BaseController(ABC):
    """Maps an estimated Bloch vector to the control fields (ux, uy) for the next step."""

    label = "BASE"

    def __init__(self, target):
        """
        Initialize the controller.

        Args:
            target: target Bloch vector
        """
        self.target = np.asarray(target, dtype=float)
        if self.target.shape != (3,):
            raise ValueError(f"Target must be a Bloch 3-vector, got shape {self.target.shape}")
        self.log_manager: Optional[LogManager] = None

    def set_log_manager(self, log_manager: LogManager) -> None:
        self.log_manager = log_manager

    def log(self, message: str) -> None:
        (self.log_manager or get_log_manager()).log(message)

    @abstractmethod
    def compute(self, step: int, t: float, state_hat: np.ndarray, state_hat_prev: np.ndarray,
                dt: float) -> np.ndarray:
        """
        Control for the step starting at grid index ``step``.
        Must be implemented by concrete classes.

        Returns:
            Array ``[ux, uy]``
        """
        pass

    def reset(self) -> None:
        """Clear any per-run state before a new closed-loop run."""
        pass

    def describe(self) -> dict:
        return {'label': self.label, 'target': self.target.tolist()}
