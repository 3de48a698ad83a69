"""Hierarchical navigation on area-graph maps.

The package reads hierarchical area-graph XML maps, rasterizes areas on demand,
plans over a passage graph with precomputed per-area summaries, executes plans
in rolling windows and localizes against the vector map directly.
"""

from .errors import OsmagError
from .geometry import Pose2D
from .model import AreaGraph, lowest_common_ancestor, locate_leaf_area, parse_osmag, validate, write_osmag
from .passage_graph import HierCache, PassageGraph, build_base_graph, build_caches, load_cache, save_cache
from .planner import PlannerConfig, PlanResult, plan_flat, plan_hierarchical
from .synthetic import CampusSpec, generate_synthetic_campus

__all__ = [
    "AreaGraph",
    "CampusSpec",
    "HierCache",
    "OsmagError",
    "PassageGraph",
    "PlanResult",
    "PlannerConfig",
    "Pose2D",
    "build_base_graph",
    "build_caches",
    "generate_synthetic_campus",
    "load_cache",
    "locate_leaf_area",
    "lowest_common_ancestor",
    "parse_osmag",
    "plan_flat",
    "plan_hierarchical",
    "save_cache",
    "validate",
    "write_osmag",
]
