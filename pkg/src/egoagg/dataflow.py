"""Push/pull planning over an overlay.

Every node gets a push frequency (how often updates would reach it if
everything upstream pushed) and a pull frequency (how often it would be read
if everything downstream pulled).  Combined with the cost model these give a
per-node preference; the optimal planner resolves conflicts between
neighbouring preferences with a minimum s-t cut.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from .costs import CostModel
from .errors import MissingActivityError
from .maxflow import EPS, min_cut
from .overlay import PULL, PUSH, OverlayGraph

METHODS = ("optimal", "greedy", "all_push", "all_pull")
_TENTATIVE = "tentative"


@dataclass
class FrequencyAnnotation:
    push: dict[int, float]
    pull: dict[int, float]


def annotate_frequencies(o: OverlayGraph, activity) -> FrequencyAnnotation:
    """Propagate writer rates downstream and reader rates upstream.

    ``activity`` is anything with ``write_rate`` and ``read_rate`` mappings
    keyed by data-node id (a DataGraph qualifies).
    """
    order = o.topo_order()
    wr: Mapping[int, float] = activity.write_rate
    rr: Mapping[int, float] = activity.read_rate
    fh: dict[int, float] = {}
    for n in order:
        if n % 3 == 0:
            try:
                fh[n] = float(wr[n // 3])
            except KeyError:
                raise MissingActivityError(o.name(n)) from None
        else:
            fh[n] = sum(fh[u] for u in o.inputs[n])
    fl: dict[int, float] = {}
    for n in reversed(order):
        if n % 3 == 1:
            try:
                fl[n] = float(rr[n // 3])
            except KeyError:
                raise MissingActivityError(o.name(n)) from None
        else:
            fl[n] = sum(fl[v] for v in o.outputs[n])
    return FrequencyAnnotation(fh, fl)


def _degree(o: OverlayGraph, n: int, cm: CostModel) -> float:
    return cm.window_factor if n % 3 == 0 else len(o.inputs[n])


def push_cost(o: OverlayGraph, n: int, freq: FrequencyAnnotation, cm: CostModel) -> float:
    return freq.push[n] * cm.H(_degree(o, n, cm))


def pull_cost(o: OverlayGraph, n: int, freq: FrequencyAnnotation, cm: CostModel) -> float:
    return freq.pull[n] * cm.L(_degree(o, n, cm))


def node_weight(o: OverlayGraph, n: int, freq: FrequencyAnnotation, cm: CostModel) -> float:
    """Benefit of pushing n: PULL(n) - PUSH(n)."""
    return pull_cost(o, n, freq, cm) - push_cost(o, n, freq, cm)


def all_weights(o: OverlayGraph, freq: FrequencyAnnotation, cm: CostModel) -> dict[int, float]:
    return {n: node_weight(o, n, freq, cm) for n in o.nodes}


def plan_cost(o: OverlayGraph, decisions: Mapping[int, str], freq: FrequencyAnnotation, cm: CostModel) -> float:
    return sum(
        push_cost(o, n, freq, cm) if decisions[n] == PUSH else pull_cost(o, n, freq, cm)
        for n in o.nodes
    )


def plan_violations(o: OverlayGraph, decisions: Mapping[int, str]) -> list[str]:
    out = []
    for n in o.nodes:
        d = decisions.get(n)
        if d not in (PUSH, PULL):
            out.append(f"{o.name(n)} has no decision")
        elif n % 3 == 0 and d != PUSH:
            out.append(f"writer {o.name(n)} is not push")
    for u, v, _ in o.edges():
        if decisions.get(u) == PULL and decisions.get(v) == PUSH:
            out.append(f"push node {o.name(v)} reads from pull node {o.name(u)}")
    return out


@dataclass
class PlanStats:
    pruned_push: int = 0
    pruned_pull: int = 0
    residual_nodes: int = 0
    components: int = 0
    largest_component: int = 0


@dataclass
class DataflowPlan:
    decisions: dict[int, str]
    cost: float
    method: str = "optimal"
    stats: PlanStats = field(default_factory=PlanStats)

    @property
    def push_nodes(self) -> set[int]:
        return {n for n, d in self.decisions.items() if d == PUSH}

    @property
    def pull_nodes(self) -> set[int]:
        return {n for n, d in self.decisions.items() if d == PULL}


def apply_plan(o: OverlayGraph, plan: DataflowPlan) -> OverlayGraph:
    for n in o.nodes:
        o.decisions[n] = plan.decisions[n]
    return o


# -- optimal planner ----------------------------------------------------------------


@dataclass
class PruneResult:
    fixed: dict[int, str]
    components: list[list[int]]
    stats: PlanStats


def prune(o: OverlayGraph, weights: Mapping[int, float]) -> PruneResult:
    """Settle every node whose best decision cannot conflict with anything.

    Writers are pushed unconditionally.  A node whose remaining inputs are all
    settled and that prefers push (weight >= 0) is pushed; a node whose
    remaining outputs are all settled and that strictly prefers pull is
    pulled.  Both rules run to a fixpoint and the rest is split into weakly
    connected components.
    """
    fixed: dict[int, str] = {n: PUSH for n in o.nodes if n % 3 == 0}
    live_in = {n: sum(1 for u in o.inputs[n] if u not in fixed) for n in o.nodes if n not in fixed}
    live_out = {n: sum(1 for v in o.outputs[n]) for n in live_in}
    stack = [n for n in live_in if (live_in[n] == 0 and weights[n] >= 0) or (live_out[n] == 0 and weights[n] < 0)]
    stats = PlanStats()
    while stack:
        n = stack.pop()
        if n in fixed:
            continue
        if live_in[n] == 0 and weights[n] >= 0:
            fixed[n] = PUSH
            stats.pruned_push += 1
        elif live_out[n] == 0 and weights[n] < 0:
            fixed[n] = PULL
            stats.pruned_pull += 1
        else:
            continue
        for v in o.outputs[n]:
            if v in live_in:
                live_in[v] -= 1
                if v not in fixed and live_in[v] == 0 and weights[v] >= 0:
                    stack.append(v)
        for u in o.inputs[n]:
            if u in live_out:
                live_out[u] -= 1
                if u not in fixed and live_out[u] == 0 and weights[u] < 0:
                    stack.append(u)
    rest = sorted(n for n in live_in if n not in fixed)
    comps = _components(o, rest, fixed)
    stats.residual_nodes = len(rest)
    stats.components = len(comps)
    stats.largest_component = max((len(c) for c in comps), default=0)
    return PruneResult(fixed, comps, stats)


def _components(o: OverlayGraph, nodes: Sequence[int], fixed: Mapping[int, str]) -> list[list[int]]:
    seen: set[int] = set()
    comps = []
    for start in nodes:
        if start in seen:
            continue
        seen.add(start)
        comp = [start]
        stack = [start]
        while stack:
            n = stack.pop()
            for m in (*o.inputs[n], *o.outputs[n]):
                if m not in fixed and m not in seen:
                    seen.add(m)
                    comp.append(m)
                    stack.append(m)
        comps.append(sorted(comp))
    return comps


_SOURCE, _SINK = "s", "t"


def solve_component(o: OverlayGraph, comp: Sequence[int], weights: Mapping[int, float]) -> dict[int, str]:
    """Min-cut over one component: nodes left reachable from the source pull.

    Overlay edges get a capacity larger than every finite cut, a node that
    prefers pull is fed from the source with its regret, and a node that
    prefers push drains into the sink with its regret.  Zero-weight nodes
    stay in the network without terminal edges so they still carry the
    ordering constraint.
    """
    members = set(comp)
    finite = sum(abs(weights[n]) for n in comp)
    inf = 1.0 + finite
    edges = []
    for n in comp:
        w = weights[n]
        if w < 0:
            edges.append((_SOURCE, n, -w))
        elif w > 0:
            edges.append((n, _SINK, w))
        for v in o.outputs[n]:
            if v in members:
                edges.append((n, v, inf))
    _, side = min_cut(edges, _SOURCE, _SINK)
    return {n: (PULL if n in side else PUSH) for n in comp}


def solve_unpruned(o: OverlayGraph, weights: Mapping[int, float]) -> dict[int, str]:
    """One min-cut over every non-writer node, for checking the pruning rules."""
    out = {n: PUSH for n in o.nodes if n % 3 == 0}
    rest = [n for n in o.nodes if n % 3 != 0]
    if rest:
        out.update(solve_component(o, rest, weights))
    return out


def _optimal(o: OverlayGraph, weights: Mapping[int, float]) -> tuple[dict[int, str], PlanStats]:
    pr = prune(o, weights)
    decisions = dict(pr.fixed)
    for comp in pr.components:
        decisions.update(solve_component(o, comp, weights))
    return decisions, pr.stats


# -- greedy planner ---------------------------------------------------------------


def _greedy(o: OverlayGraph, freq: FrequencyAnnotation, cm: CostModel) -> dict[int, str]:
    """Single pass from the writers with tentative pulls resolved lazily."""
    dec: dict[int, str] = {}
    for n in o.topo_order():
        if n % 3 == 0:
            dec[n] = PUSH
            continue
        ins = o.inputs[n]
        p_push = push_cost(o, n, freq, cm)
        p_pull = pull_cost(o, n, freq, cm)
        if any(dec[u] == PULL for u in ins):
            dec[n] = PULL
            continue
        tentative = [u for u in ins if dec[u] == _TENTATIVE]
        if p_push > p_pull:
            if tentative:
                dec[n] = PULL
                for u in tentative:
                    dec[u] = PULL
            else:
                dec[n] = _TENTATIVE
        elif not tentative:
            dec[n] = PUSH
        else:
            # settle the tentative inputs together with n
            as_push = p_push + sum(push_cost(o, u, freq, cm) for u in tentative)
            as_pull = p_pull + sum(pull_cost(o, u, freq, cm) for u in tentative)
            d = PUSH if as_push <= as_pull else PULL
            dec[n] = d
            for u in tentative:
                dec[u] = d
    return {n: (PULL if d == _TENTATIVE else d) for n, d in dec.items()}


def decide(
    o: OverlayGraph,
    activity=None,
    cm: Optional[CostModel] = None,
    method: str = "optimal",
    freq: Optional[FrequencyAnnotation] = None,
) -> DataflowPlan:
    """Choose push/pull for every node.  Writers always push."""
    method = method.replace("-", "_")
    if method not in METHODS:
        raise ValueError(f"plan method must be one of {METHODS}")
    cm = cm or CostModel()
    if freq is None:
        if activity is None:
            raise ValueError("decide needs activity estimates or a frequency annotation")
        freq = annotate_frequencies(o, activity)
    stats = PlanStats()
    if method == "all_push":
        decisions = {n: PUSH for n in o.nodes}
    elif method == "all_pull":
        decisions = {n: (PUSH if n % 3 == 0 else PULL) for n in o.nodes}
    elif method == "greedy":
        decisions = _greedy(o, freq, cm)
    else:
        decisions, stats = _optimal(o, all_weights(o, freq, cm))
    return DataflowPlan(decisions, plan_cost(o, decisions, freq, cm), method, stats)


# -- node splitting -------------------------------------------------------------------


@dataclass
class SplitReport:
    splits: list[tuple[int, int, int]] = field(default_factory=list)  # (node, new child, inputs moved)
    cost_before: float = 0.0
    cost_after: float = 0.0


def best_split(costs_in: Sequence[float], read_freq: float, k: int, cm: CostModel) -> tuple[int, float]:
    """Best prefix of the ascending input push rates to pre-aggregate.

    Returns (l, cost) where cost is pushing the l coldest inputs into a child
    node plus pulling the parent over its remaining k - l + 1 inputs; l = 0
    when no prefix of two or more inputs qualifies.
    """
    best_l, best_c = 0, float("inf")
    acc = 0.0
    for l, f in enumerate(costs_in, start=1):
        acc += f
        if l < 2 or l >= k:
            continue
        c = acc * cm.H(l) + read_freq * cm.L(k - l + 1)
        if c < best_c - EPS:
            best_l, best_c = l, c
    return best_l, best_c


def split_nodes(
    o: OverlayGraph,
    freq: FrequencyAnnotation,
    cm: CostModel,
    plan: Optional[DataflowPlan] = None,
) -> SplitReport:
    """Splice a pre-aggregating child under nodes where that beats their current cost.

    A split turns node v into "push child over the coldest inputs, pull v
    over the rest".  It is only taken when that assignment is legal under
    the current plan (the moved inputs push, and v either pulls already or
    feeds only pull nodes) and strictly cheaper, so the modeled cost of the
    best plan never goes up.  ``o``, ``freq`` and ``plan`` are updated in
    place; frequencies of existing nodes do not change.
    """
    if plan is None:
        plan = decide(o, cm=cm, freq=freq)
    dec = plan.decisions
    report = SplitReport(cost_before=plan_cost(o, dec, freq, cm))
    for v in sorted(n for n in o.nodes if n % 3 != 0):
        k = len(o.inputs[v])
        if k < 3:
            continue
        if dec[v] == PUSH and any(dec[x] == PUSH for x in o.outputs[v]):
            continue
        current = push_cost(o, v, freq, cm) if dec[v] == PUSH else pull_cost(o, v, freq, cm)
        cands = sorted((freq.push[u], u) for u, s in o.inputs[v].items() if s > 0)
        prefix = []
        for f, u in cands:
            if dec[u] != PUSH:
                break
            prefix.append((f, u))
        l, c = best_split([f for f, _ in prefix], freq.pull[v], k, cm)
        if l == 0 or c >= current - EPS:
            continue
        child = o.add_partial(PUSH)
        moved = [u for _, u in prefix[:l]]
        for u in moved:
            o.remove_edge(u, v)
            o.add_edge(u, child)
        o.add_edge(child, v)
        freq.push[child] = sum(f for f, _ in prefix[:l])
        freq.pull[child] = freq.pull[v]
        dec[child] = PUSH
        dec[v] = PULL
        o.decisions[child] = PUSH
        report.splits.append((v, child, l))
    plan.cost = report.cost_after = plan_cost(o, dec, freq, cm)
    return report


# -- adaptation ----------------------------------------------------------------------


def frontier(o: OverlayGraph, decisions: Mapping[int, str]) -> set[int]:
    """Nodes whose decision can flip without touching any neighbour."""
    out = set()
    for n in o.nodes:
        if n % 3 == 0:
            continue
        if decisions[n] == PULL and all(decisions[u] == PUSH for u in o.inputs[n]):
            out.add(n)
        elif decisions[n] == PUSH and all(decisions[v] == PULL for v in o.outputs[n]):
            out.add(n)
    return out


def adapt(
    o: OverlayGraph,
    plan: DataflowPlan,
    observed: Sequence[FrequencyAnnotation],
    cm: CostModel,
    hysteresis: float = 0.05,
) -> DataflowPlan:
    """Flip frontier nodes whose observed preference disagrees with the plan.

    ``observed`` is one observation window: a node flips only if every sample
    in it favours the other decision by more than ``hysteresis`` times the
    node's PUSH + PULL.  Pull-to-push flips run in topological order and
    push-to-pull flips in reverse, re-checking the frontier as they go, so
    the result is always a legal plan.
    """
    if isinstance(observed, FrequencyAnnotation):
        observed = [observed]
    if not observed:
        return DataflowPlan(dict(plan.decisions), plan.cost, plan.method, plan.stats)
    dec = dict(plan.decisions)

    def verdict(n: int) -> Optional[str]:
        votes = set()
        for f in observed:
            hi, lo = push_cost(o, n, f, cm), pull_cost(o, n, f, cm)
            w = lo - hi
            if abs(w) <= hysteresis * (hi + lo) or w == 0:
                return None
            votes.add(PUSH if w > 0 else PULL)
        return votes.pop() if len(votes) == 1 else None

    order = o.topo_order()
    for n in order:
        if n % 3 and dec[n] == PULL and all(dec[u] == PUSH for u in o.inputs[n]) and verdict(n) == PUSH:
            dec[n] = PUSH
    for n in reversed(order):
        if n % 3 and dec[n] == PUSH and all(dec[v] == PULL for v in o.outputs[n]) and verdict(n) == PULL:
            dec[n] = PULL
    return DataflowPlan(dec, plan_cost(o, dec, observed[-1], cm), "adapted", plan.stats)
