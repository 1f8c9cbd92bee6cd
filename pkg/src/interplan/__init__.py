"""Interaction-aware hierarchical driving planner and highway simulator."""

from .config import Config, default_config, load_config

__all__ = ["Config", "default_config", "load_config"]
__version__ = "0.1.0"
