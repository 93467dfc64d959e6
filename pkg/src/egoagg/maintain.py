"""Keep an overlay in step with structural changes to the data graph.

A structural update changes the neighbourhoods of a few readers.  Those
deltas are applied locally: small additions become direct writer edges,
large ones get their own aggregator, and deletions either carve the lost
writers out of the aggregators that carried them or rebuild the reader.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .construct.iob import IOBBuilder
from .errors import NodeNotFoundError, StructuralError
from .graph import DataGraph, QuerySpec, _matches, _step, neighborhood
from .overlay import PULL, PUSH, OverlayGraph, _coverage_pass, reader_id, writer_id

EDGE_ADD, EDGE_DEL, NODE_ADD, NODE_DEL = "edge_add", "edge_del", "node_add", "node_del"
UPDATE_KINDS = (EDGE_ADD, EDGE_DEL, NODE_ADD, NODE_DEL)
DEFAULT_THRESHOLD = 8
SPLIT_LIMIT = 5


@dataclass(frozen=True)
class StructureUpdate:
    """One structural event.  Endpoints are node labels.

    ``node_add`` names the new node in ``u`` and may carry initial edges as
    (source, target) label pairs.
    """

    kind: str
    u: str
    v: Optional[str] = None
    ts: float = 0.0
    edges: tuple[tuple[str, str], ...] = ()
    symmetric: bool = False

    def __post_init__(self):
        if self.kind not in UPDATE_KINDS:
            raise ValueError(f"unknown update kind {self.kind!r}")
        if self.kind in (EDGE_ADD, EDGE_DEL) and self.v is None:
            raise ValueError(f"{self.kind} needs two endpoints")


@dataclass(frozen=True)
class ReaderDelta:
    reader: int
    added: frozenset[int] = frozenset()
    removed: frozenset[int] = frozenset()


class _View:
    """The data graph as it would look after an update, sharing unchanged parts."""

    def __init__(self, g: DataGraph):
        self.g = g
        self.alive = set(g.alive)
        self.in_adj = dict(g.in_adj)
        self.out_adj = dict(g.out_adj)
        self.attrs = g.attrs
        self.labels = g.labels

    def _own(self, table: dict, x: int) -> set:
        s = set(table.get(x, ()))
        table[x] = s
        return s

    def add_arc(self, x: int, y: int) -> None:
        self._own(self.out_adj, x).add(y)
        self._own(self.in_adj, y).add(x)

    def drop_arc(self, x: int, y: int) -> None:
        self._own(self.out_adj, x).discard(y)
        self._own(self.in_adj, y).discard(x)

    def drop_node(self, x: int) -> None:
        for y in list(self.out_adj[x]):
            self.drop_arc(x, y)
        for y in list(self.in_adj[x]):
            self.drop_arc(y, x)
        self.alive.discard(x)


def _resolve(g: DataGraph, label: str) -> int:
    return g.node_id(label)


def _apply_to_view(g: DataGraph, u: StructureUpdate) -> tuple[_View, set[int]]:
    """Post-update view plus the nodes whose incident arcs changed."""
    view = _View(g)
    touched: set[int] = set()
    if u.kind in (EDGE_ADD, EDGE_DEL):
        x, y = _resolve(g, u.u), _resolve(g, u.v)
        pairs = [(x, y)]
        if u.symmetric or (u.kind == EDGE_DEL and (min(x, y), max(x, y)) in g.symmetric):
            pairs.append((y, x))
        for a, b in pairs:
            if u.kind == EDGE_ADD:
                view.add_arc(a, b)
            elif b in g.out_adj[a]:
                view.drop_arc(a, b)
        touched = {x, y}
    elif u.kind == NODE_DEL:
        x = _resolve(g, u.u)
        touched = {x} | g.in_adj[x] | g.out_adj[x]
        view.drop_node(x)
    else:
        if u.u in g.ids and g.ids[u.u] in g.alive:
            raise StructuralError(f"node {u.u!r} already exists")
        new = len(g.labels)
        view.alive.add(new)
        view.in_adj[new] = set()
        view.out_adj[new] = set()
        ids = {u.u: new}
        touched = {new}
        for a, b in u.edges:
            ia = ids.get(a, g.ids.get(a))
            ib = ids.get(b, g.ids.get(b))
            if ia is None or ib is None or (ia != new and ia not in g.alive) or (ib != new and ib not in g.alive):
                raise NodeNotFoundError(a if ia is None else b)
            view.add_arc(ia, ib)
            if u.symmetric:
                view.add_arc(ib, ia)
            touched |= {ia, ib}
    return view, touched


def _upstream_of(graph, q: QuerySpec, starts: Iterable[int]) -> set[int]:
    """Nodes whose k-hop neighbourhood could include one of ``starts``."""
    back = {"in": "out", "out": "in", "both": "both"}[q.direction]
    seen = set(s for s in starts if s in graph.alive)
    frontier = list(seen)
    for _ in range(q.hops):
        nxt = []
        for x in frontier:
            for y in _step(graph, back, x):
                if y not in seen:
                    seen.add(y)
                    nxt.append(y)
        frontier = nxt
    return seen


def affected_readers(g: DataGraph, q: QuerySpec, u: StructureUpdate) -> list[ReaderDelta]:
    """Exact neighbourhood changes the update causes, before it is applied.

    A deleted node's own reader is not listed (it disappears); a new node's
    reader is listed with its whole neighbourhood as the addition.
    """
    view, touched = _apply_to_view(g, u)
    cands = _upstream_of(g, q, touched) | _upstream_of(view, q, touched)
    out = []
    for r in sorted(cands):
        before_alive = r in g.alive
        after_alive = r in view.alive
        if not after_alive:
            continue
        if not _matches(q.reader_pred, view if not before_alive else g, r):
            continue
        before = neighborhood(g, q, r) if before_alive else set()
        after = neighborhood(view, q, r)
        if after != before or not before_alive:
            out.append(ReaderDelta(r, frozenset(after - before), frozenset(before - after)))
    return out


def _apply_structure(g: DataGraph, u: StructureUpdate) -> None:
    if u.kind == EDGE_ADD:
        g.add_edge(_resolve(g, u.u), _resolve(g, u.v), u.symmetric)
    elif u.kind == EDGE_DEL:
        x, y = _resolve(g, u.u), _resolve(g, u.v)
        if g.has_edge(x, y):
            g.remove_edge(x, y)
    elif u.kind == NODE_DEL:
        g.remove_node(_resolve(g, u.u))
    else:
        v = g.add_node(u.u)
        g.set_activity(v, 0.0, 0.0)
        for a, b in u.edges:
            g.add_edge(g.node_id(a), g.node_id(b), u.symmetric)


def repair_decisions(o: OverlayGraph) -> int:
    """Demote push nodes that read from pull nodes; returns how many changed."""
    changed = 0
    for n in o.topo_order():
        if n % 3 == 0:
            if o.decisions[n] != PUSH:
                o.decisions[n] = PUSH
                changed += 1
        elif o.decisions[n] == PUSH and any(o.decisions[u] == PULL for u in o.inputs[n]):
            o.decisions[n] = PULL
            changed += 1
    return changed


def _fit_decision(o: OverlayGraph, n: int) -> None:
    """Give a freshly created node the decision its neighbours already imply."""
    if all(o.decisions[u] == PUSH for u in o.inputs[n]) and any(
        o.decisions[v] == PUSH for v in o.outputs[n]
    ):
        o.decisions[n] = PUSH
    else:
        o.decisions[n] = PULL


@dataclass
class MaintenanceStats:
    direct_edges: int = 0
    new_aggregators: int = 0
    restructures: int = 0
    splits: int = 0
    rebuilds: int = 0
    updates: Counter = field(default_factory=Counter)


class Maintainer:
    """Applies structure updates to a data graph and its overlay together."""

    def __init__(self, g: DataGraph, q: QuerySpec, o: OverlayGraph,
                 threshold: int = DEFAULT_THRESHOLD, split_limit: int = SPLIT_LIMIT):
        self.g = g
        self.q = q
        self.o = o
        self.threshold = threshold
        self.split_limit = split_limit
        self.builder = IOBBuilder(o)
        self.direct = Counter()
        self.stats = MaintenanceStats()
        if o.labels is None or o.labels is not g.labels:
            o.labels = g.labels

    # -- public ---------------------------------------------------------------------
    def apply(self, u: StructureUpdate) -> list[ReaderDelta]:
        deltas = affected_readers(self.g, self.q, u)
        if u.kind == NODE_DEL:
            gone = _resolve(self.g, u.u)
        _apply_structure(self.g, u)
        self.stats.updates[u.kind] += 1
        if u.kind == NODE_ADD:
            self.o.add_writer(self.g.node_id(u.u))
        for d in deltas:
            if d.removed:
                self.apply_edge_del(d.reader, d.removed)
        for d in deltas:
            rid = reader_id(d.reader)
            if rid not in self.o:
                self.o.add_reader(d.reader, PULL)
                self.builder._set_cover(rid, frozenset())
            if d.added:
                self.apply_edge_add(d.reader, d.added)
        if u.kind == NODE_DEL:
            self._drop_node(gone)
        self.builder.collect_garbage()
        repair_decisions(self.o)
        return deltas

    def apply_edge_add(self, r: int, added: frozenset[int]) -> None:
        o, b = self.o, self.builder
        rid = reader_id(r)
        for w in added:
            o.add_writer(w)
        if len(added) > self.threshold:
            p = o.add_partial(PUSH)
            # wire p first so the builder's garbage pass sees it as live
            o.add_edge(p, rid)
            b.cover_into(p, frozenset(added))
            b._set_cover(p, frozenset(added))
            _fit_decision(o, p)
            self.stats.new_aggregators += 1
        else:
            for w in sorted(added):
                o.add_edge(writer_id(w), rid)
            self.direct[r] += len(added)
            self.stats.direct_edges += len(added)
        self._refresh_cover(rid, add=added)
        if self.direct[r] > self.threshold:
            self._rebuild(r)
            self.stats.restructures += 1

    def apply_edge_del(self, r: int, removed: frozenset[int]) -> None:
        o, b = self.o, self.builder
        rid = reader_id(r)
        if rid not in o:
            return
        carriers = self._carriers(rid, removed)
        clean = all(u % 3 == 0 or u in b.cover for u in o.inputs[rid]) and all(
            s > 0 for s in o.inputs[rid].values()
        )
        if clean and len(carriers) <= self.split_limit:
            for u in list(o.inputs[rid]):
                cov = b.cover_of(u)
                hit = cov & removed
                if not hit:
                    continue
                o.remove_edge(u, rid)
                if len(hit) == len(cov):
                    continue
                _, rest = b._split(u, frozenset(hit))
                if rest is not None:
                    o.add_edge(rest, rid)
            self.direct[r] = sum(1 for u in o.inputs[rid] if u % 3 == 0)
            self._refresh_cover(rid, remove=removed)
            b.collect_garbage()
            self.stats.splits += 1
        else:
            self._refresh_cover(rid, remove=removed)
            self._rebuild(r)
            self.stats.rebuilds += 1

    # -- helpers ----------------------------------------------------------------------
    def _carriers(self, rid: int, removed: frozenset[int]) -> list[int]:
        """Aggregators above rid whose writer set meets ``removed``."""
        o = self.o
        up = o.ancestors(rid)
        order = [n for n in o.topo_order() if n in up]
        cov = _coverage_pass(o, order, positive_only=True)
        return [n for n in order if n % 3 == 2 and any(w in removed for w in cov[n])]

    def _refresh_cover(self, rid: int, add: Iterable[int] = (), remove: Iterable[int] = ()) -> None:
        b = self.builder
        old = b.cover.get(rid)
        if old is None:
            return
        b._set_cover(rid, (old | frozenset(add)) - frozenset(remove))

    def _rebuild(self, r: int) -> None:
        """Re-derive r's inputs from scratch with the set-cover builder."""
        o, b = self.o, self.builder
        rid = reader_id(r)
        want = frozenset(neighborhood(self.g, self.q, r))
        for u in list(o.inputs[rid]):
            o.remove_edge(u, rid)
        b.collect_garbage()
        for w in want:
            o.add_writer(w)
        b._set_cover(rid, want)
        b.cover_into(rid, want)
        self.direct[r] = sum(1 for u in o.inputs[rid] if u % 3 == 0)
        b.collect_garbage()

    def _drop_node(self, v: int) -> None:
        o, b = self.o, self.builder
        rid, wid = reader_id(v), writer_id(v)
        if rid in o:
            for u in list(o.inputs[rid]):
                o.remove_edge(u, rid)
            o.remove_node(rid)
            b.forget(rid)
        b.collect_garbage()
        if wid in o and o.outputs[wid]:
            # paths where the writer cancels out (negative edges) never show
            # up as deltas; rebuild whatever still hangs below it
            for n in sorted(o.descendants(wid)):
                if n % 3 == 1:
                    self._rebuild(n // 3)
                    self.stats.rebuilds += 1
        if wid in o:
            if o.outputs[wid]:
                raise StructuralError(f"writer {o.name(wid)} still feeds {len(o.outputs[wid])} nodes")
            o.remove_node(wid)
        self.direct.pop(v, None)


def apply_update(g: DataGraph, q: QuerySpec, o: OverlayGraph, u: StructureUpdate,
                 maintainer: Optional[Maintainer] = None) -> OverlayGraph:
    m = maintainer if maintainer is not None and maintainer.o is o else Maintainer(g, q, o)
    m.apply(u)
    return o
