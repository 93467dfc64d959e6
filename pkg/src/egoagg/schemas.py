"""Request and response bodies for the HTTP service.

Graphs, overlays and traces travel as text in their file formats, so the
CLI can pass files through untouched.
"""
from __future__ import annotations

from typing import Any, Literal, Optional

from pydantic import BaseModel, Field, field_validator

from .graph import DIRECTIONS, parse_window
from .pipeline import ALGORITHMS

PlanMethod = Literal["optimal", "greedy", "all-push", "all-pull", "all_push", "all_pull"]


class QueryBody(BaseModel):
    aggregate: str = "sum"
    window: str = "count:1"
    hops: int = Field(1, ge=1)
    direction: str = "in"

    @field_validator("window")
    @classmethod
    def _window(cls, v: str) -> str:
        parse_window(v)
        return v

    @field_validator("direction")
    @classmethod
    def _direction(cls, v: str) -> str:
        if v not in DIRECTIONS:
            raise ValueError(f"direction must be one of {DIRECTIONS}")
        return v


class GraphBody(BaseModel):
    edges: str = Field(..., description="edge list, one 'u<TAB>v' pair per line")
    directed: bool = True


class BuildRequest(BaseModel):
    graph: GraphBody
    query: QueryBody = QueryBody()
    algo: str = "iob"
    seed: int = 0

    @field_validator("algo")
    @classmethod
    def _algo(cls, v: str) -> str:
        if v not in ALGORITHMS:
            raise ValueError(f"algo must be one of {ALGORITHMS}")
        return v


class OverlayStats(BaseModel):
    nodes: int
    edges: int
    partials: int
    bipartite_edges: int
    sharing_index: float
    depth_mean: float


class BuildResponse(BaseModel):
    overlay: str
    stats: OverlayStats


class ActivityBody(BaseModel):
    """Either a trace to count rates from, or Zipf parameters to draw them from."""

    trace: Optional[str] = None
    ratio: float = Field(1.0, gt=0)
    skew: float = Field(1.0, gt=0)
    seed: int = 0
    degree_correlated: bool = False


class DecideRequest(BaseModel):
    graph: GraphBody
    overlay: str
    query: QueryBody = QueryBody()
    activity: ActivityBody = ActivityBody()
    plan: PlanMethod = "optimal"
    split: bool = False
    cost_model: Optional[dict[str, Any]] = None


class PlanStatsBody(BaseModel):
    pruned_push: int
    pruned_pull: int
    residual_nodes: int
    components: int
    largest_component: int


class DecideResponse(BaseModel):
    overlay: str
    cost: float
    method: str
    push_nodes: int
    pull_nodes: int
    splits: int
    stats: PlanStatsBody


class RunRequest(BaseModel):
    graph: GraphBody
    trace: str
    query: QueryBody = QueryBody()
    overlay: Optional[str] = Field(None, description="planned overlay; built and planned from algo/plan when absent")
    algo: str = "iob"
    plan: PlanMethod = "optimal"
    threads: int = Field(1, ge=1)
    isolated: bool = False
    seed: int = 0
    with_reads: bool = False


class CompareRequest(BaseModel):
    graph: GraphBody
    query: QueryBody = QueryBody()
    algos: list[str] = ["trivial", "vnma", "iob"]
    plans: list[PlanMethod] = ["optimal", "greedy", "all-push", "all-pull"]
    ratios: list[float] = [0.05, 0.2, 1.0, 5.0, 20.0]
    skew: float = Field(1.0, gt=0)
    count: int = Field(10000, ge=1)
    threads: int = Field(1, ge=1)
    seed: int = 0


class CompareResponse(BaseModel):
    csv: str
    rows: list[dict[str, Any]]


class ValidateRequest(BaseModel):
    graph: GraphBody
    overlay: str
    query: QueryBody = QueryBody()


class ValidateResponse(BaseModel):
    valid: bool
    violations: list[str]
    orphans: list[str]


class GenRequest(BaseModel):
    kind: Literal["zipf", "shift", "structure", "http", "graph"] = "zipf"
    graph: Optional[GraphBody] = None
    nodes: int = Field(1000, ge=2, description="graph size for kind=graph")
    degree: int = Field(5, ge=1, description="out-links per new node for kind=graph")
    ratio: float = Field(1.0, gt=0)
    ratio_after: float = Field(0.05, gt=0)
    skew: float = Field(1.0, gt=0)
    count: int = Field(10000, ge=0)
    seed: int = 0
    degree_correlated: bool = False
    value_domain: int = Field(16, ge=1)
    log: Optional[str] = None


class GenResponse(BaseModel):
    text: str
    events: int
    skipped: int = 0
    clients: int = 0
