"""
Factory for creating sampling regimes and time grids from configuration.
"""
from typing import Optional

from ..config.config_manager import SPLIT_ALIASES, ConfigManager
from ..domain.qubit.entities import PARAM_NAMES, PhaseRegime
from ..numerics.integrate import TimeGrid


class RegimeFactory:
    """Factory for phase regimes."""

    @classmethod
    def create_regime(cls, phase: int, split: str, config: Optional[ConfigManager] = None) -> PhaseRegime:
        """
        Create the regime for a phase and split.

        Args:
            phase: 1, 2 or 3
            split: train, wd, ood (or wd_test, ood_test)
            config: Configuration manager; defaults are used when omitted

        Returns:
            PhaseRegime with the configured parameter intervals
        """
        config = config or ConfigManager()
        block = config.regime(phase, split)
        intervals = {name: block[name] for name in PARAM_NAMES if name in block}
        controlled = bool(config.get(f"regimes.phase_{phase}.controlled", False))
        return PhaseRegime(phase=int(phase), split=SPLIT_ALIASES[split], intervals=intervals,
                           controlled=controlled)

    @classmethod
    def create_grid(cls, phase: int, config: Optional[ConfigManager] = None) -> TimeGrid:
        """Time grid used by a phase (filtering or control horizon)."""
        config = config or ConfigManager()
        return TimeGrid.from_dict(config.grid_for_phase(phase))

    @classmethod
    def signal_spec(cls, phase: int, config: Optional[ConfigManager] = None) -> str:
        config = config or ConfigManager()
        return 'control' if config.get(f"regimes.phase_{phase}.controlled", False) else 'filtering'
