"""Age of Semantic Importance simulator with DQN scheduling and allocation."""

from .config import DqnConfig, SimConfig, derive_seed, load_config

__all__ = ["DqnConfig", "SimConfig", "derive_seed", "load_config"]
__version__ = "0.1.0"
