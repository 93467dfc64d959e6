"""Data graph, query specification and the derived writer/reader bipartite graph."""
from __future__ import annotations

import io
import threading
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Iterator, Mapping, Optional, Union

from .errors import GraphParseError, NodeNotFoundError, OutOfOrderWriteError, SelfLoopError


@dataclass(frozen=True)
class CountWindow:
    size: int

    def __post_init__(self):
        if self.size < 1:
            raise ValueError("count window must hold at least one value")

    def __str__(self):
        return f"count:{self.size}"


@dataclass(frozen=True)
class TimeWindow:
    duration: float

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError("time window duration must be positive")

    def __str__(self):
        return f"time:{self.duration:g}"


Window = Union[CountWindow, TimeWindow]


def parse_window(text: str) -> Window:
    kind, _, arg = text.partition(":")
    if kind == "count":
        return CountWindow(int(arg))
    if kind == "time":
        return TimeWindow(float(arg))
    raise ValueError(f"window must be count:N or time:T, got {text!r}")


NodePredicate = Union[Mapping[str, Any], Callable[["DataGraph", int], bool], None]

DIRECTIONS = ("in", "out", "both")


@dataclass(frozen=True, eq=False)
class QuerySpec:
    """An ego-centric aggregate query.

    ``direction`` names which neighbours a node aggregates: ``"in"`` means
    N(x) = {y | y -> x}.  ``writer_filter`` is an attribute-equality mapping
    applied to candidate writers; ``reader_pred`` is either such a mapping or a
    callable ``(graph, node) -> bool``.  ``None`` selects every node.
    """

    aggregate: str = "sum"
    window: Window = CountWindow(1)
    hops: int = 1
    direction: str = "in"
    writer_filter: Optional[Mapping[str, Any]] = None
    reader_pred: NodePredicate = None

    def __post_init__(self):
        if self.hops < 1:
            raise ValueError("hop count must be >= 1")
        if self.direction not in DIRECTIONS:
            raise ValueError(f"direction must be one of {DIRECTIONS}")


def _matches(pred: NodePredicate, g: "DataGraph", v: int) -> bool:
    if pred is None:
        return True
    if callable(pred):
        return bool(pred(g, v))
    attrs = g.attrs.get(v, {})
    return all(attrs.get(k) == val for k, val in pred.items())


class DataGraph:
    """Directed base graph with dense integer node ids.

    Symmetric edges are stored as two arcs plus an entry in ``symmetric``.
    Node ids are never reused after deletion.
    """

    def __init__(self):
        self.labels: list[str] = []
        self.ids: dict[str, int] = {}
        self.alive: set[int] = set()
        self.out_adj: dict[int, set[int]] = {}
        self.in_adj: dict[int, set[int]] = {}
        self.symmetric: set[tuple[int, int]] = set()
        self.attrs: dict[int, dict[str, Any]] = {}
        self.streams: dict[int, list[tuple[float, Any]]] = {}
        self.write_rate: dict[int, float] = {}
        self.read_rate: dict[int, float] = {}
        self._stream_locks: dict[int, threading.Lock] = {}

    # -- nodes -------------------------------------------------------------
    @property
    def nodes(self) -> set[int]:
        return self.alive

    def __len__(self):
        return len(self.alive)

    def __contains__(self, v) -> bool:
        return v in self.alive

    def add_node(self, label: Optional[str] = None, **attrs) -> int:
        if label is not None and label in self.ids:
            v = self.ids[label]
            if v in self.alive:
                self.attrs[v].update(attrs)
                return v
        v = len(self.labels)
        label = str(v) if label is None else label
        self.labels.append(label)
        self.ids[label] = v
        self.alive.add(v)
        self.out_adj[v] = set()
        self.in_adj[v] = set()
        self.attrs[v] = dict(attrs)
        self.streams[v] = []
        self._stream_locks[v] = threading.Lock()
        return v

    def node_id(self, label: str) -> int:
        v = self.ids.get(label)
        if v is None or v not in self.alive:
            raise NodeNotFoundError(label)
        return v

    def label(self, v: int) -> str:
        return self.labels[v]

    def remove_node(self, v: int) -> None:
        self._check(v)
        for u in list(self.in_adj[v]):
            self._drop_arc(u, v)
        for w in list(self.out_adj[v]):
            self._drop_arc(v, w)
        self.symmetric = {p for p in self.symmetric if v not in p}
        self.alive.discard(v)
        del self.out_adj[v], self.in_adj[v]
        self.write_rate.pop(v, None)
        self.read_rate.pop(v, None)

    # -- edges -------------------------------------------------------------
    def add_edge(self, u: int, v: int, symmetric: bool = False) -> bool:
        """Insert u -> v (and v -> u when symmetric).  Returns True if anything changed."""
        self._check(u)
        self._check(v)
        if u == v:
            raise SelfLoopError(0, self.labels[u])
        changed = v not in self.out_adj[u]
        self.out_adj[u].add(v)
        self.in_adj[v].add(u)
        if symmetric:
            changed |= u not in self.out_adj[v]
            self.out_adj[v].add(u)
            self.in_adj[u].add(v)
            self.symmetric.add((min(u, v), max(u, v)))
        return changed

    def remove_edge(self, u: int, v: int) -> None:
        self._check(u)
        self._check(v)
        if v not in self.out_adj[u]:
            raise NodeNotFoundError((self.labels[u], self.labels[v]))
        pair = (min(u, v), max(u, v))
        if pair in self.symmetric:
            self.symmetric.discard(pair)
            self._drop_arc(v, u)
        self._drop_arc(u, v)

    def has_edge(self, u: int, v: int) -> bool:
        return u in self.alive and v in self.out_adj[u]

    def _drop_arc(self, u: int, v: int) -> None:
        self.out_adj[u].discard(v)
        self.in_adj[v].discard(u)

    def arcs(self) -> Iterator[tuple[int, int]]:
        for u in sorted(self.alive):
            for v in sorted(self.out_adj[u]):
                yield u, v

    @property
    def num_arcs(self) -> int:
        return sum(len(s) for s in self.out_adj.values())

    def _check(self, v: int) -> None:
        if v not in self.alive:
            raise NodeNotFoundError(v)

    # -- activity ------------------------------------------------------------
    def set_activity(self, v: int, write_rate: float, read_rate: float) -> None:
        if write_rate < 0 or read_rate < 0:
            raise ValueError("activity rates must be non-negative")
        self._check(v)
        self.write_rate[v] = float(write_rate)
        self.read_rate[v] = float(read_rate)

    def copy(self) -> "DataGraph":
        g = DataGraph()
        g.labels = list(self.labels)
        g.ids = dict(self.ids)
        g.alive = set(self.alive)
        g.out_adj = {v: set(s) for v, s in self.out_adj.items()}
        g.in_adj = {v: set(s) for v, s in self.in_adj.items()}
        g.symmetric = set(self.symmetric)
        g.attrs = {v: dict(a) for v, a in self.attrs.items()}
        g.streams = {v: list(s) for v, s in self.streams.items()}
        g.write_rate = dict(self.write_rate)
        g.read_rate = dict(self.read_rate)
        g._stream_locks = {v: threading.Lock() for v in self.streams}
        return g


def load_graph(source: Union[bytes, str, Iterable[str], io.IOBase], directed: bool = True) -> DataGraph:
    """Parse a SNAP-style edge list ("u<TAB>v" per line, '#' comments)."""
    if isinstance(source, bytes):
        lines: Iterable[str] = source.decode("utf-8").splitlines()
    elif isinstance(source, str):
        lines = source.splitlines()
    else:
        lines = source
    g = DataGraph()
    for lineno, raw in enumerate(lines, start=1):
        if isinstance(raw, bytes):
            raw = raw.decode("utf-8")
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise GraphParseError(lineno, f"expected 'u<TAB>v', got {raw.rstrip()!r}")
        a, b = parts
        if a == b:
            raise SelfLoopError(lineno, a)
        u = g.add_node(a)
        v = g.add_node(b)
        g.add_edge(u, v, symmetric=not directed)
    return g


def dump_graph(g: DataGraph) -> str:
    out = io.StringIO()
    for u, v in g.arcs():
        out.write(f"{g.labels[u]}\t{g.labels[v]}\n")
    return out.getvalue()


def _step(g: DataGraph, direction: str, x: int) -> Iterable[int]:
    # N(x) under "in" follows arcs backwards: y -> x.
    if direction == "in":
        return g.in_adj[x]
    if direction == "out":
        return g.out_adj[x]
    return g.in_adj[x] | g.out_adj[x]


def neighborhood(g: DataGraph, q: QuerySpec, v: int) -> set[int]:
    if v not in g.alive:
        raise NodeNotFoundError(v)
    seen = {v}
    frontier = [v]
    for _ in range(q.hops):
        nxt = []
        for x in frontier:
            for y in _step(g, q.direction, x):
                if y not in seen:
                    seen.add(y)
                    nxt.append(y)
        if not nxt:
            break
        frontier = nxt
    seen.discard(v)
    if q.writer_filter:
        return {y for y in seen if _matches(q.writer_filter, g, y)}
    return seen


@dataclass
class BipartiteGraph:
    """Writer -> reader incidence.  ``inputs[r]`` is N(r); readers may have empty lists."""

    inputs: dict[int, frozenset[int]]
    labels: Optional[list[str]] = None
    writers: frozenset[int] = field(init=False)

    def __post_init__(self):
        self.inputs = {r: frozenset(ws) for r, ws in self.inputs.items()}
        self.writers = frozenset().union(*self.inputs.values()) if self.inputs else frozenset()

    @property
    def readers(self) -> frozenset[int]:
        return frozenset(self.inputs)

    @property
    def num_edges(self) -> int:
        return sum(len(ws) for ws in self.inputs.values())

    def edges(self) -> set[tuple[int, int]]:
        return {(w, r) for r, ws in self.inputs.items() for w in ws}

    def out_degree(self) -> dict[int, int]:
        deg = dict.fromkeys(self.writers, 0)
        for ws in self.inputs.values():
            for w in ws:
                deg[w] += 1
        return deg

    def label(self, v: int) -> str:
        return self.labels[v] if self.labels is not None else str(v)

    @classmethod
    def from_lists(cls, lists: Mapping[str, Iterable[str]]) -> "BipartiteGraph":
        """Build from ``{reader_label: writer_labels}``; ids follow sorted label order."""
        names = sorted(set(lists) | {w for ws in lists.values() for w in ws})
        ids = {name: i for i, name in enumerate(names)}
        return cls({ids[r]: frozenset(ids[w] for w in ws) for r, ws in lists.items()}, labels=names)


def derive_bipartite(g: DataGraph, q: QuerySpec) -> BipartiteGraph:
    readers = [v for v in sorted(g.alive) if _matches(q.reader_pred, g, v)]
    return BipartiteGraph({r: frozenset(neighborhood(g, q, r)) for r in readers}, labels=g.labels)


def record_write(g: DataGraph, v: int, ts: float, value: Any) -> DataGraph:
    if v not in g.alive:
        raise NodeNotFoundError(v)
    with g._stream_locks[v]:
        stream = g.streams[v]
        if stream and ts < stream[-1][0]:
            raise OutOfOrderWriteError(
                f"write at {ts} on node {g.labels[v]!r} precedes last timestamp {stream[-1][0]}"
            )
        stream.append((ts, value))
    return g


def bfs_within(g: DataGraph, start: int, hops: int, forward: Callable[[int], Iterable[int]]) -> set[int]:
    """Nodes reachable from ``start`` in at most ``hops`` steps of ``forward`` (start included)."""
    seen = {start}
    q = deque([(start, 0)])
    while q:
        x, d = q.popleft()
        if d == hops:
            continue
        for y in forward(x):
            if y not in seen:
                seen.add(y)
                q.append((y, d + 1))
    return seen
