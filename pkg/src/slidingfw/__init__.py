"""Off-the-grid sparse spike recovery with the Sliding Frank-Wolfe algorithm."""

from .measures import DiscreteMeasure, min_separation, prune, tv_norm
from .sfw import BlassoProblem, objective, run_fw_reference, run_sfw, verify_optimality

__version__ = "0.1.0"

__all__ = [
    "BlassoProblem", "DiscreteMeasure", "min_separation", "objective", "prune",
    "run_fw_reference", "run_sfw", "tv_norm", "verify_optimality",
]
