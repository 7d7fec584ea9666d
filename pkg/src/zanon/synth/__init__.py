"""Synthetic chains with ground truth."""

from .config import ScenarioConfig, read_key_values
from .evaluate import Confusion, cluster_purity, confusion, evaluate
from .generator import MANIFEST_SCHEMA, Scenario, build, generate

__all__ = [
    "ScenarioConfig",
    "read_key_values",
    "Confusion",
    "cluster_purity",
    "confusion",
    "evaluate",
    "MANIFEST_SCHEMA",
    "Scenario",
    "build",
    "generate",
]
