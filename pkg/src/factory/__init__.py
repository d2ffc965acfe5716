from .controller_factory import ControllerFactory
from .regime_factory import RegimeFactory

__all__ = ['ControllerFactory', 'RegimeFactory']
