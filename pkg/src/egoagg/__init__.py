"""Ego-centric aggregate queries over dynamic graphs through shared aggregation overlays."""

__version__ = "0.1.0"

from .aggregates import UDA, direct_aggregate, get_aggregate, register_aggregate
from .costs import CostModel, calibrate, default_cost_model
from .dataflow import DataflowPlan, adapt, annotate_frequencies, decide, split_nodes
from .engine import Engine, EngineConfig
from .graph import BipartiteGraph, CountWindow, DataGraph, QuerySpec, TimeWindow, derive_bipartite, load_graph, neighborhood
from .maintain import Maintainer, StructureUpdate, affected_readers, apply_update
from .overlay import OverlayGraph, dump_overlay, load_overlay, sharing_index, trivial_overlay, validate
from .pipeline import ALGORITHMS, build_overlay, compile_query

__all__ = [
    "ALGORITHMS", "BipartiteGraph", "CostModel", "CountWindow", "DataGraph", "DataflowPlan", "Engine",
    "EngineConfig", "Maintainer", "OverlayGraph", "QuerySpec", "StructureUpdate", "TimeWindow", "UDA",
    "adapt", "affected_readers", "annotate_frequencies", "apply_update", "build_overlay", "calibrate",
    "compile_query", "decide", "default_cost_model", "derive_bipartite", "direct_aggregate", "dump_overlay",
    "get_aggregate", "load_graph", "load_overlay", "neighborhood", "register_aggregate", "sharing_index",
    "split_nodes", "trivial_overlay", "validate",
]
