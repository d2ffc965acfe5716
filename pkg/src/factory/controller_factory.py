"""
Factory for creating feedback controllers.
"""
from typing import Any, Dict, Type

from ..domain.base.base_controller import BaseController
from ..domain.control.lqr_controller import LqrController
from ..domain.control.pd_controller import PdController, ZeroController


class ControllerFactory:
    """Factory for creating controllers by name."""

    _controller_classes = {
        'pd': PdController,
        'lqr': LqrController,
        'zero': ZeroController,
    }

    @classmethod
    def create_controller(cls, name: str, control_cfg: Dict[str, Any], **kwargs) -> BaseController:
        """
        Create a controller from the control config section.

        Args:
            name: Controller name ('pd', 'lqr', 'zero')
            control_cfg: The ``control`` configuration section
            **kwargs: Extra construction inputs, e.g. ``schedule`` for LQR or ``target``

        Returns:
            Controller instance

        Raises:
            ValueError: If the name is not registered
        """
        controller_class = cls._controller_classes.get(name.lower())
        if not controller_class:
            raise ValueError(f"Unsupported controller: {name}")
        return controller_class.from_config(control_cfg, **kwargs)

    @classmethod
    def register_controller(cls, name: str, controller_class: Type[BaseController]) -> None:
        """
        Register a new controller class.

        Args:
            name: Controller name
            controller_class: Class providing ``from_config(control_cfg, **kwargs)``
        """
        cls._controller_classes[name.lower()] = controller_class

    @classmethod
    def available(cls):
        return sorted(cls._controller_classes)
