from typing import Any, Dict, List, Type

from loguru import logger

from .controller import Controller, RobotPlane

# Registry to store controller implementations
_CONTROLLERS: Dict[str, Type[Controller]] = {}


def register_controller(name: str):
    """Decorator to register a controller class"""

    def decorator(cls):
        cls.name = name.lower()
        _CONTROLLERS[name.lower()] = cls
        return cls

    return decorator


def get_available_controllers() -> List[str]:
    return sorted(_CONTROLLERS)


def build_controller(name: str, plane: RobotPlane, **context: Any) -> Controller:
    """Instantiate a registered controller from the harness context"""
    name = name.lower()
    if name not in _CONTROLLERS:
        raise ValueError(f"Controller '{name}' not found; available: {get_available_controllers()}")
    return _CONTROLLERS[name].from_context(plane, **context)


def _try_import(module_name: str, pretty_name: str):
    try:
        __import__(f"soundbounce.tracking.{module_name}")
    except ImportError as e:
        logger.error(f"Failed to load {pretty_name} controller: {str(e)}")


for module_name, pretty_name in [("deterministic", "deterministic"), ("stochastic", "stochastic")]:
    _try_import(module_name, pretty_name)
