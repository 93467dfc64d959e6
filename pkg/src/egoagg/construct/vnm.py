"""Chunked FP-tree mining that replaces bicliques with partial aggregators.

Each round orders the aggregation nodes (readers and partials present at the
start of the round) by shingle, cuts them into chunks and mines every chunk
until no biclique pays for itself.  Partial nodes from earlier rounds are
ordinary items and transactions in later rounds, which is how multi-level
overlays appear.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional

from ..aggregates import Capabilities
from ..errors import CapabilityError, StructuralError
from ..graph import BipartiteGraph
from ..overlay import INSENSITIVE, SENSITIVE, OverlayGraph, trivial_overlay, validate
from .fptree import BASIC, DUPLICATE, NEGATIVE, Biclique, build_fptree, item_order, mine_best
from .shingles import shingle_order

VARIANTS = ("base", "adaptive", "negative", "duplicate")


@dataclass
class ConstructionParams:
    initial_chunk_size: int = 100
    adapt_fraction: float = 0.9
    k1: int = 2
    k2: int = 5
    overlap_pct: float = 0.2
    max_iterations: int = 10
    min_benefit: int = 1
    num_hashes: int = 2
    seed: int = 0
    descending_order: bool = False
    min_chunk_size: int = 2

    def __post_init__(self):
        if self.initial_chunk_size < 1 or self.k1 < 1 or self.k2 < 0 or self.max_iterations < 1:
            raise ValueError("construction parameters must be positive")
        if not 0 < self.adapt_fraction <= 1:
            raise ValueError("adapt_fraction must lie in (0, 1]")
        if not 0 <= self.overlap_pct < 1:
            raise ValueError("overlap_pct must lie in [0, 1)")
        if self.min_benefit < 1:
            raise ValueError("min_benefit must be >= 1")


def adapt_chunk(histogram: Mapping[int, float], current: int, fraction: float = 0.9) -> int:
    """Smallest chunk size whose benefit prefix strictly exceeds ``fraction`` of the total."""
    total = sum(b for s, b in histogram.items() if s <= current)
    if total <= 0:
        return current
    acc = 0.0
    for c in range(1, current + 1):
        acc += histogram.get(c, 0)
        if acc > fraction * total:
            return c
    return current


def apply_biclique(
    o: OverlayGraph,
    b: Biclique,
    check: Optional[tuple[BipartiteGraph, Capabilities]] = None,
) -> int:
    """Splice a partial node for ``b`` into ``o``; returns the new node id.

    ``b.negatives`` lists (reader, item) pairs that get a negative edge.  An
    item whose edge to a reader is already gone counts as reused, which is
    only legal in a duplicate-insensitive overlay.
    """
    negs = set(b.negatives)
    for r in b.readers:
        for u in b.writers:
            if (r, u) in negs:
                if o.has_edge(u, r):
                    raise StructuralError(f"negative pair {o.name(u)} -> {o.name(r)} is a live edge")
            elif not o.has_edge(u, r) and o.mode != INSENSITIVE:
                raise StructuralError(f"biclique edge {o.name(u)} -> {o.name(r)} missing")
    backup = o.copy() if check is not None else None
    p = o.add_partial()
    for u in b.writers:
        o.add_edge(u, p)
    for r in b.readers:
        for u in b.writers:
            if (r, u) in negs:
                o.add_edge(u, r, -1)
            elif o.has_edge(u, r):
                o.remove_edge(u, r)
        o.add_edge(p, r)
    if check is not None:
        a, caps = check
        bad = validate(o, a, caps)
        if bad:
            o.__dict__.update(backup.__dict__)
            raise StructuralError(f"biclique broke the overlay: {bad[0]}")
    return p


@dataclass
class VNMTrace:
    """Per-round bookkeeping: overlay edge count after each round and chunk sizes used."""

    edges: list[int] = field(default_factory=list)
    chunk_sizes: list[int] = field(default_factory=list)
    accepted: list[int] = field(default_factory=list)


def _positive_inputs(o: OverlayGraph, n: int) -> set[int]:
    return {u for u, s in o.inputs[n].items() if s > 0}


def _chunks(order: list[int], size: int, overlap: float) -> list[list[int]]:
    if not order:
        return []
    stride = max(1, int(round(size * (1 - overlap))))
    out = []
    start = 0
    while True:
        out.append(order[start:start + size])
        if start + size >= len(order):
            break
        start += stride
    return out


def run_vnm(
    a: BipartiteGraph,
    variant: str = "adaptive",
    params: Optional[ConstructionParams] = None,
    caps: Optional[Capabilities] = None,
    trace: Optional[VNMTrace] = None,
) -> OverlayGraph:
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    params = params or ConstructionParams()
    if variant == "duplicate" and caps is not None and not caps.duplicate_insensitive:
        raise CapabilityError("the duplicate variant needs a duplicate-insensitive aggregate")
    if variant == "negative" and caps is not None and not caps.subtractable:
        raise CapabilityError("the negative variant needs a subtractable aggregate")
    final_mode = {"negative": NEGATIVE, "duplicate": DUPLICATE}.get(variant, BASIC)
    # The negative variant first mines exact bicliques to a fixpoint and only
    # then admits quasi-bicliques, so it never ends up behind the exact search.
    mode = BASIC if final_mode == NEGATIVE else final_mode
    o = trivial_overlay(a, INSENSITIVE if variant == "duplicate" else SENSITIVE)
    chunk = params.initial_chunk_size
    overlap = params.overlap_pct if variant == "duplicate" else 0.0
    if trace is not None:
        trace.edges.append(o.num_edges)

    rounds = 0
    it = 0
    while True:
        if rounds >= params.max_iterations:
            if mode == final_mode:
                break
            mode, rounds = final_mode, 0
        txn_ids = [n for n in o.nodes if n % 3 != 0 and len(_positive_inputs(o, n)) >= 2]
        snapshot = {n: frozenset(_positive_inputs(o, n)) for n in txn_ids}
        order = shingle_order(snapshot, params.num_hashes, params.seed + it)
        ranks = item_order(snapshot, descending=params.descending_order)
        histogram: dict[int, float] = {}
        mined: dict[int, set[int]] = {}
        accepted = 0
        for group in _chunks(order, chunk, overlap):
            accepted += _mine_chunk(o, group, ranks, mode, params, mined, histogram)
        it += 1
        rounds += 1
        if trace is not None:
            trace.edges.append(o.num_edges)
            trace.chunk_sizes.append(chunk)
            trace.accepted.append(accepted)
        if accepted == 0:
            if mode == final_mode:
                break
            mode, rounds = final_mode, 0
            continue
        if variant != "base":
            chunk = max(params.min_chunk_size, adapt_chunk(histogram, chunk, params.adapt_fraction))
    return o


def _mine_chunk(o, group, ranks, mode, params, mined, histogram) -> int:
    accepted = 0
    live = [n for n in group if n in o.inputs]
    while True:
        rows = []
        forbid = {}
        for n in live:
            items = _positive_inputs(o, n)
            if mode == DUPLICATE:
                items |= mined.get(n, set())
            if len(items) >= 2:
                rows.append((n, items))
            if mode == NEGATIVE:
                forbid[n] = {u for u, s in o.inputs[n].items() if s < 0}
        if len(rows) < 2:
            return accepted
        # negative extensions are only safe into readers: a reader has no
        # descendants, so the extra input can never close a cycle
        k1 = params.k1 if mode == NEGATIVE else 1
        t = build_fptree(rows, ranks, mode, k1=k1, k2=params.k2,
                         mined=mined if mode == DUPLICATE else None, forbid_negative=forbid,
                         extra_ok=lambda n: n % 3 == 1)
        b = mine_best(t, params.min_benefit)
        if b is None:
            return accepted
        apply_biclique(o, b)
        if mode == DUPLICATE:
            for r in b.readers:
                mined.setdefault(r, set()).update(b.writers)
        histogram[len(b.readers)] = histogram.get(len(b.readers), 0) + b.benefit
        accepted += 1
