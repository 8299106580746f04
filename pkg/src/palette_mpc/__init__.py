"""Deterministic degree+1 list coloring on a simulated low-space MPC substrate."""

from .config import RunConfig, exercising_profile
from .graph import ColoringState, D1LCInstance, Graph, load_instance, verify_coloring
from .pipeline import run_pipeline

__all__ = [
    "ColoringState",
    "D1LCInstance",
    "Graph",
    "RunConfig",
    "exercising_profile",
    "load_instance",
    "run_pipeline",
    "verify_coloring",
]
__version__ = "0.1.0"
