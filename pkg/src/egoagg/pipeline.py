"""Glue between graphs, overlay builders, planners and the engine.

Construction algorithms are addressed by short names so the CLI, the HTTP
service and the benchmark share one table.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .aggregates import UDA, get_aggregate
from .construct.iob import iob_build
from .construct.vnm import ConstructionParams, VNMTrace, run_vnm
from .costs import CostModel, default_cost_model
from .dataflow import DataflowPlan, apply_plan, decide
from .errors import CapabilityError
from .graph import BipartiteGraph, CountWindow, DataGraph, QuerySpec, derive_bipartite
from .overlay import OverlayGraph, trivial_overlay

ALGORITHMS = ("trivial", "vnm", "vnma", "vnmn", "vnmd", "iob")
_VNM_VARIANT = {"vnm": "base", "vnma": "adaptive", "vnmn": "negative", "vnmd": "duplicate"}


def check_combination(algo: str, uda: UDA) -> None:
    """Reject algorithm/aggregate pairs whose overlays the aggregate cannot evaluate."""
    if algo not in ALGORITHMS:
        raise ValueError(f"algorithm must be one of {ALGORITHMS}")
    if algo == "vnmd" and not uda.caps.duplicate_insensitive:
        raise CapabilityError(
            f"vnmd builds overlays with duplicate paths, which needs a duplicate-insensitive "
            f"aggregate such as min or max; {uda.name} is not"
        )
    if algo == "vnmn" and not uda.caps.subtractable:
        raise CapabilityError(
            f"vnmn builds overlays with negative edges, which needs a subtractable aggregate "
            f"such as sum or count; {uda.name} is not"
        )


def build_overlay(
    a: BipartiteGraph,
    algo: str,
    uda: UDA,
    params: Optional[ConstructionParams] = None,
    trace: Optional[VNMTrace] = None,
) -> OverlayGraph:
    check_combination(algo, uda)
    if algo == "trivial":
        o = trivial_overlay(a)
    elif algo == "iob":
        o = iob_build(a, params, trace=trace)
    else:
        o = run_vnm(a, _VNM_VARIANT[algo], params, caps=uda.caps, trace=trace)
    return o


def window_factor(q: QuerySpec) -> float:
    """Average number of values a writer window holds; count windows only."""
    return float(q.window.size) if isinstance(q.window, CountWindow) else 1.0


@dataclass
class Compiled:
    """A query compiled against a graph: bipartite view, overlay and plan."""

    g: DataGraph
    q: QuerySpec
    uda: UDA
    a: BipartiteGraph
    o: OverlayGraph
    plan: Optional[DataflowPlan] = None
    cost_model: CostModel = field(default_factory=CostModel)
    algorithm: str = ""


def compile_query(
    g: DataGraph,
    q: QuerySpec,
    algo: str = "iob",
    params: Optional[ConstructionParams] = None,
    uda: Optional[UDA] = None,
) -> Compiled:
    uda = uda or get_aggregate(q.aggregate)
    a = derive_bipartite(g, q)
    o = build_overlay(a, algo, uda, params)
    cm = default_cost_model(q.aggregate, window_factor(q))
    return Compiled(g, q, uda, a, o, None, cm, algo)


def plan_overlay(c: Compiled, activity, method: str = "optimal", cm: Optional[CostModel] = None) -> DataflowPlan:
    if cm is not None:
        c.cost_model = cm
    c.plan = decide(c.o, activity, c.cost_model, method)
    apply_plan(c.o, c.plan)
    return c.plan

