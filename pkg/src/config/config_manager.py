"""
Config Manager for the qubit filtering and control laboratory.
Handles loading of the checked-in defaults, user config files and dotted overrides.
"""

import copy
import os
from typing import Any, Dict, List, Optional

import yaml

DEFAULTS_PATH = os.path.join(os.path.dirname(__file__), "defaults.yaml")

SPLIT_ALIASES = {
    "train": "train",
    "wd": "wd_test",
    "wd_test": "wd_test",
    "ood": "ood_test",
    "ood_test": "ood_test",
}


def _deep_merge(base: Dict[str, Any], update: Dict[str, Any]) -> Dict[str, Any]:
    merged = copy.deepcopy(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def parse_override(item: str) -> tuple:
    """Split a ``dotted.key=value`` override; the value is parsed as YAML."""
    if "=" not in item:
        raise ValueError(f"Override must look like key=value, got: {item}")
    key, raw = item.split("=", 1)
    key = key.strip()
    if not key:
        raise ValueError(f"Override has an empty key: {item}")
    value = yaml.safe_load(raw)
    if isinstance(value, str):
        # YAML 1.1 reads "1e-3" as a string
        try:
            value = float(value)
        except ValueError:
            pass
    return key, value


class ConfigManager:
    """
    Manages laboratory configuration from YAML.
    Defaults come from defaults.yaml; a user file and overrides are layered on top.
    """

    def __init__(self, config_path: Optional[str] = None, overrides: Optional[List[str]] = None,
                 defaults_path: str = DEFAULTS_PATH):
        """
        Initialize the ConfigManager.

        Args:
            config_path (str): Optional YAML or JSON file merged over the defaults
            overrides (list): ``dotted.key=value`` strings applied last
            defaults_path (str): Path to the defaults YAML file
        """
        self.defaults_path = defaults_path
        self.config_path = config_path
        self.overrides = list(overrides or [])
        self.config = self._load_config()

    def _load_file(self, path: str) -> Dict[str, Any]:
        try:
            with open(path, 'r') as file:
                data = yaml.safe_load(file)
        except OSError as e:
            raise ValueError(f"Error loading config {path}: {str(e)}") from e
        except yaml.YAMLError as e:
            raise ValueError(f"Config {path} is not valid YAML/JSON: {str(e)}") from e
        if data is None:
            return {}
        if not isinstance(data, dict):
            raise ValueError(f"Config {path} must contain a mapping at the top level")
        return data

    def _load_config(self) -> Dict[str, Any]:
        """Load defaults, merge the user file, then apply overrides."""
        config = self._load_file(self.defaults_path)
        if self.config_path:
            config = _deep_merge(config, self._load_file(self.config_path))
        for item in self.overrides:
            key, value = parse_override(item)
            self._set(config, key, value)
        return config

    @staticmethod
    def _set(config: Dict[str, Any], dotted_key: str, value: Any) -> None:
        node = config
        parts = dotted_key.split(".")
        for part in parts[:-1]:
            child = node.get(part)
            if child is None:
                child = {}
                node[part] = child
            if not isinstance(child, dict):
                raise ValueError(f"Cannot override {dotted_key}: {part} is not a section")
            node = child
        node[parts[-1]] = value

    def get(self, dotted_key: str, default: Any = None) -> Any:
        """Get a value by dotted key, e.g. ``training.epochs``."""
        node: Any = self.config
        for part in dotted_key.split("."):
            if not isinstance(node, dict) or part not in node:
                return default
            node = node[part]
        return copy.deepcopy(node)

    def section(self, name: str) -> Dict[str, Any]:
        """Get a top-level section as a dictionary (empty if absent)."""
        value = self.get(name, {})
        return value if isinstance(value, dict) else {}

    def set(self, dotted_key: str, value: Any) -> None:
        self._set(self.config, dotted_key, value)

    def regime(self, phase: int, split: str) -> Dict[str, Any]:
        """Get the raw regime block for a phase and split (aliases wd/ood accepted)."""
        split_key = SPLIT_ALIASES.get(split)
        if split_key is None:
            raise ValueError(f"Unsupported split: {split}")
        phase_block = self.get(f"regimes.phase_{phase}")
        if not phase_block:
            raise ValueError(f"Unsupported phase: {phase}")
        block = phase_block.get(split_key)
        if not block:
            raise ValueError(f"Phase {phase} has no {split_key} regime")
        return block

    def grid_for_phase(self, phase: int) -> Dict[str, Any]:
        grid_name = self.get(f"regimes.phase_{phase}.grid")
        if grid_name is None:
            raise ValueError(f"Unsupported phase: {phase}")
        return self.section("grids")[grid_name]

    def to_dict(self) -> Dict[str, Any]:
        return copy.deepcopy(self.config)

    def reload(self) -> None:
        """Reload configuration from disk."""
        self.config = self._load_config()

    def get_available_sections(self) -> List[str]:
        return list(self.config.keys())
