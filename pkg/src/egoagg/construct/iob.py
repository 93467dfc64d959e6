"""Incremental overlay builder: insert readers one by one with a greedy set cover.

The builder keeps the exact writer set behind every aggregation node (the
"cover") and a reverse index from writer to the nodes covering it.  Overlays
built here have no negative edges and no duplicate paths, so covers are
plain sets.
"""
from __future__ import annotations

import heapq
from typing import Iterable, Optional

from ..errors import NodeNotFoundError, StructuralError
from ..graph import BipartiteGraph
from ..overlay import SENSITIVE, OverlayGraph, all_coverage, reader_id, writer_id
from .shingles import shingle_order
from .vnm import ConstructionParams

# Restructuring an existing node costs two edges (new node -> old node and
# new node -> reader), so it only pays off from three shared writers up.
_MIN_DIRECT = 2
_MIN_RESTRUCTURE = 3
_CANDIDATES = 400
_MAX_SPLIT_DEPTH = 3


class IOBBuilder:
    def __init__(self, o: Optional[OverlayGraph] = None, labels=None):
        self.o = o if o is not None else OverlayGraph(SENSITIVE, labels)
        self.cover: dict[int, frozenset[int]] = {}
        self.rev: dict[int, set[int]] = {}
        if o is not None:
            self._index_existing()

    # -- index upkeep -----------------------------------------------------------
    def _index_existing(self) -> None:
        """Index every node whose coverage is a clean 0/1 set built only from
        indexed inputs; anything else is left alone and never split."""
        cov = all_coverage(self.o)
        for n in self.o.topo_order():
            vec = cov[n]
            if n % 3 == 0 or not vec:
                continue
            if any(c != 1 for c in vec.values()):
                continue
            if any(s < 0 or (u % 3 and u not in self.cover) for u, s in self.o.inputs[n].items()):
                continue
            self._set_cover(n, frozenset(vec))

    def _set_cover(self, n: int, cov: frozenset[int]) -> None:
        old = self.cover.get(n)
        if old is not None:
            for w in old:
                s = self.rev.get(w)
                if s is not None:
                    s.discard(n)
        self.cover[n] = cov
        for w in cov:
            self.rev.setdefault(w, set()).add(n)

    def forget(self, n: int) -> None:
        old = self.cover.pop(n, None)
        if old:
            for w in old:
                s = self.rev.get(w)
                if s is not None:
                    s.discard(n)

    def cover_of(self, n: int) -> frozenset[int]:
        if n % 3 == 0:
            return frozenset((n // 3,))
        return self.cover[n]

    # -- insertion ----------------------------------------------------------------
    def add_reader(self, r: int, inputs: Iterable[int], decision: Optional[str] = None) -> int:
        inputs = frozenset(inputs)
        rid = reader_id(r)
        if rid in self.o.inputs and self.o.inputs[rid]:
            raise StructuralError(f"reader {self.o.name(rid)} already has inputs")
        for w in inputs:
            if writer_id(w) not in self.o.inputs:
                raise NodeNotFoundError(f"w:{w}")
        if decision is None:
            self.o.add_reader(r)
        else:
            self.o.add_reader(r, decision)
        self.cover_into(rid, inputs)
        self._set_cover(rid, inputs)
        return rid

    def cover_into(self, target: int, want: frozenset[int], exclude: frozenset[int] = frozenset()) -> None:
        """Wire ``target`` so it aggregates exactly ``want`` (target must have no inputs for want)."""
        left = set(want)
        while left:
            pick = self._best(target, left, exclude)
            if pick is None:
                for w in sorted(left):
                    self.o.add_edge(writer_id(w), target)
                return
            node, _ = self._split(pick, frozenset(self.cover[pick] & left))
            self.o.add_edge(node, target)
            left -= self.cover_of(node)
        self.collect_garbage()

    def _best(self, target: int, left: set[int], exclude: frozenset[int]):
        """Node with the largest overlap with ``left`` whose reuse saves edges."""
        counts: dict[int, int] = {}
        for w in left:
            for n in self.rev.get(w, ()):
                counts[n] = counts.get(n, 0) + 1
        counts.pop(target, None)
        ranked = heapq.nlargest(
            _CANDIDATES,
            ((c, len(self.cover[n]), -n, n) for n, c in counts.items() if c >= _MIN_DIRECT and n not in exclude),
        )
        best, best_key = None, None
        memo: dict = {}
        for c, size, _, n in ranked:
            # c - 1 bounds the gain, and later candidates lose every tie
            if best_key is not None and c - 1 <= best_key[0]:
                break
            if size == c and n % 3 == 2:
                gain = c - 1
            else:
                delta = self._split_cost(n, frozenset(self.cover[n] & left), _MAX_SPLIT_DEPTH, memo)
                if delta is None:
                    continue
                # c direct edges avoided, one edge to the reader added
                gain = c - 1 - delta
            key = (gain, c, size, -n)
            if gain > 0 and (best_key is None or key > best_key):
                best, best_key = n, key
        return best

    def _parts(self, v: int, x: frozenset[int]):
        inside, outside, mixed = [], [], []
        for u in self.o.inputs[v]:
            cov = self.cover_of(u)
            k = len(cov & x) if len(cov) > len(x) else sum(1 for w in cov if w in x)
            if k == len(cov):
                inside.append(u)
            elif k == 0:
                outside.append(u)
            else:
                mixed.append(u)
        return inside, outside, mixed

    def _split_cost(self, v: int, x: frozenset[int], depth: int, memo: Optional[dict] = None) -> Optional[int]:
        """Edge-count change from making a node for cover(v) & x, or None if too deep.

        ``memo`` caches nested results while one uncovered set is scanned.
        Candidates restrict it to their own cover, but every node below a
        candidate has a cover inside the candidate's, so for those nodes
        (node, depth) fixes the answer.
        """
        if self.cover[v] <= x:
            return 0 if v % 3 == 2 else 1
        inside, outside, mixed = self._parts(v, x)
        if mixed and depth == 0:
            return None
        sub = 0
        for m in mixed:
            key = (m, depth - 1)
            if memo is not None and key in memo:
                c = memo[key]
            else:
                c = self._split_cost(m, x, depth - 1, memo)
                if memo is not None:
                    memo[key] = c
            if c is None:
                return None
            sub += c
        n_in = len(inside) + len(mixed)
        n_out = len(outside) + len(mixed)
        after = 2 + (n_in if n_in > 1 else 0) + (n_out if n_out > 1 else 0)
        return after - len(self.o.inputs[v]) + sub

    def _group(self, members: list[int], decision: str) -> int:
        if len(members) == 1:
            return members[0]
        fresh = self.o.add_partial(decision)
        for u in members:
            self.o.add_edge(u, fresh)
        self._set_cover(fresh, frozenset().union(*(self.cover_of(u) for u in members)))
        return fresh

    def _split(self, v: int, x: frozenset[int]) -> tuple[int, Optional[int]]:
        """Restructure v as (part inside x) + (part outside x); returns both parts.

        v keeps its cover and its consumers.  A reader that lies wholly inside
        x hands its inputs to a new partial, since readers cannot feed others.
        """
        o = self.o
        dec = o.decisions[v]
        if self.cover[v] <= x:
            if v % 3 == 2:
                return v, None
            members = list(o.inputs[v])
            for u in members:
                o.remove_edge(u, v)
            node = self._group(members, dec)
            o.add_edge(node, v)
            return node, None
        inside, outside, mixed = self._parts(v, x)
        for m in mixed:
            m_in, m_out = self._split(m, x)
            inside.append(m_in)
            outside.append(m_out)
        for u in list(o.inputs[v]):
            o.remove_edge(u, v)
        node_in = self._group(inside, dec)
        node_out = self._group(outside, dec)
        o.add_edge(node_in, v)
        o.add_edge(node_out, v)
        return node_in, node_out

    # -- refinement -------------------------------------------------------------------
    def refine(self) -> int:
        """Re-cover each aggregation node with strictly smaller nodes; returns edges saved."""
        o = self.o
        saved = 0
        for n in sorted(self.cover):
            if n not in o.inputs or n not in self.cover:
                continue
            want = self.cover[n]
            current = len(o.inputs[n])
            if current <= 2:
                continue
            plan = self._greedy_plan(n, want)
            if plan is None or len(plan) >= current:
                continue
            for u in list(o.inputs[n]):
                o.remove_edge(u, n)
            for u in plan:
                o.add_edge(u, n)
            saved += current - len(plan)
            saved += self.collect_garbage()
        return saved

    def _greedy_plan(self, n: int, want: frozenset[int]) -> Optional[list[int]]:
        left = set(want)
        plan = []
        while left:
            counts: dict[int, int] = {}
            for w in left:
                for m in self.rev.get(w, ()):
                    counts[m] = counts.get(m, 0) + 1
            best = None
            for m, c in counts.items():
                if m == n or m % 3 == 1 or c < 2:
                    continue
                cov = self.cover[m]
                if len(cov) != c or cov == want:
                    continue
                key = (c, -m)
                if best is None or key > best[0]:
                    best = (key, m)
            if best is None:
                plan.extend(writer_id(w) for w in sorted(left))
                return plan
            m = best[1]
            plan.append(m)
            left -= self.cover[m]
        return plan

    def collect_garbage(self) -> int:
        """Drop partial nodes without consumers, cascading upwards; returns edges removed."""
        o = self.o
        removed = 0
        stack = [n for n in o.partials() if not o.outputs[n]]
        while stack:
            n = stack.pop()
            if n not in o.inputs or o.outputs[n]:
                continue
            ups = list(o.inputs[n])
            removed += len(ups)
            o.remove_node(n)
            self.forget(n)
            stack.extend(u for u in ups if u % 3 == 2 and not o.outputs[u])
        return removed


def iob_add_reader(o: OverlayGraph, r: int, inputs: Iterable[int], builder: Optional[IOBBuilder] = None) -> OverlayGraph:
    b = builder if builder is not None and builder.o is o else IOBBuilder(o)
    b.add_reader(r, inputs)
    return o


def iob_build(a: BipartiteGraph, params: Optional[ConstructionParams] = None, trace=None) -> OverlayGraph:
    params = params or ConstructionParams()
    b = IOBBuilder(labels=a.labels)
    for w in sorted(a.writers):
        b.o.add_writer(w)
    for r in shingle_order(a, params.num_hashes, params.seed):
        if a.inputs[r]:
            b.add_reader(r, a.inputs[r])
        else:
            b.o.add_reader(r)
    if trace is not None:
        trace.edges.append(b.o.num_edges)
    for _ in range(params.max_iterations - 1):
        saved = b.refine()
        if trace is not None:
            trace.edges.append(b.o.num_edges)
        if saved <= 0:
            break
    return b.o
