"""Aggregation overlay: a signed DAG of writer, partial and reader nodes.

Overlay ids pack the role into the low bits of an integer: writer of data
node v is ``3v``, its reader is ``3v + 1`` and partial aggregator k is
``3k + 2``.  Coverage vectors and the bipartite graph speak in data-node ids,
so ``base(n)`` converts back.
"""
from __future__ import annotations

from collections import Counter, deque
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional

from .aggregates import Capabilities
from .errors import NodeNotFoundError, OverlayParseError, StructuralError, UndefinedMetricError
from .graph import BipartiteGraph

WRITER, READER, PARTIAL = "writer", "reader", "partial"
PUSH, PULL = "push", "pull"
SENSITIVE, INSENSITIVE = "duplicate_sensitive", "duplicate_insensitive"
_KINDS = (WRITER, READER, PARTIAL)
_INT64 = 2**63 - 1


def writer_id(v: int) -> int:
    return 3 * v


def reader_id(v: int) -> int:
    return 3 * v + 1


def kind(n: int) -> str:
    return _KINDS[n % 3]


def base(n: int) -> int:
    return n // 3


def is_writer(n: int) -> bool:
    return n % 3 == 0


def is_reader(n: int) -> bool:
    return n % 3 == 1


class OverlayGraph:
    def __init__(self, mode: str = SENSITIVE, labels: Optional[list[str]] = None):
        if mode not in (SENSITIVE, INSENSITIVE):
            raise ValueError(f"unknown overlay mode {mode!r}")
        self.mode = mode
        self.labels = labels
        # forward index: node -> {input: sign}; outputs mirrors it
        self.inputs: dict[int, dict[int, int]] = {}
        self.outputs: dict[int, dict[int, int]] = {}
        self.decisions: dict[int, str] = {}
        self._next_partial = 0

    # -- nodes ----------------------------------------------------------------
    def _add(self, n: int, decision: str) -> int:
        if n not in self.inputs:
            self.inputs[n] = {}
            self.outputs[n] = {}
            self.decisions[n] = decision
        return n

    def add_writer(self, v: int) -> int:
        return self._add(writer_id(v), PUSH)

    def add_reader(self, v: int, decision: str = PUSH) -> int:
        return self._add(reader_id(v), decision)

    def add_partial(self, decision: str = PUSH) -> int:
        n = 3 * self._next_partial + 2
        self._next_partial += 1
        return self._add(n, decision)

    def remove_node(self, n: int) -> None:
        self._check(n)
        for u in list(self.inputs[n]):
            del self.outputs[u][n]
        for v in list(self.outputs[n]):
            del self.inputs[v][n]
        del self.inputs[n], self.outputs[n], self.decisions[n]

    def __contains__(self, n) -> bool:
        return n in self.inputs

    def __len__(self):
        return len(self.inputs)

    @property
    def nodes(self):
        return self.inputs.keys()

    def writers(self) -> list[int]:
        return sorted(n for n in self.inputs if n % 3 == 0)

    def readers(self) -> list[int]:
        return sorted(n for n in self.inputs if n % 3 == 1)

    def partials(self) -> list[int]:
        return sorted(n for n in self.inputs if n % 3 == 2)

    def _check(self, n: int) -> None:
        if n not in self.inputs:
            raise NodeNotFoundError(self.name(n))

    def name(self, n: int) -> str:
        if n % 3 == 2:
            return f"p:{n // 3}"
        b = n // 3
        lab = self.labels[b] if self.labels is not None and b < len(self.labels) else str(b)
        return f"{'w' if n % 3 == 0 else 'r'}:{lab}"

    # -- edges ----------------------------------------------------------------
    def add_edge(self, u: int, v: int, sign: int = 1) -> None:
        """Add u -> v.  An opposite-signed edge already present cancels out."""
        self._check(u)
        self._check(v)
        if sign not in (1, -1):
            raise ValueError("edge sign must be +1 or -1")
        if u == v:
            raise StructuralError(f"self edge on {self.name(u)}")
        old = self.inputs[v].get(u)
        if old is None:
            self.inputs[v][u] = sign
            self.outputs[u][v] = sign
        elif old == sign:
            raise StructuralError(f"edge {self.name(u)} -> {self.name(v)} already present")
        else:
            self.remove_edge(u, v)

    def remove_edge(self, u: int, v: int) -> None:
        if u not in self.inputs.get(v, ()):
            raise NodeNotFoundError(f"{self.name(u)} -> {self.name(v)}")
        del self.inputs[v][u]
        del self.outputs[u][v]

    def has_edge(self, u: int, v: int) -> bool:
        return v in self.inputs and u in self.inputs[v]

    def edges(self) -> Iterator[tuple[int, int, int]]:
        for v, ins in self.inputs.items():
            for u, s in ins.items():
                yield u, v, s

    @property
    def num_edges(self) -> int:
        return sum(len(ins) for ins in self.inputs.values())

    def has_negative_edges(self) -> bool:
        return any(s < 0 for ins in self.inputs.values() for s in ins.values())

    def in_degree(self, n: int) -> int:
        return len(self.inputs[n])

    # -- traversal -----------------------------------------------------------
    def topo_order(self) -> list[int]:
        """Kahn's algorithm with smallest-id-first tie breaking; raises on a cycle."""
        import heapq

        indeg = {n: len(ins) for n, ins in self.inputs.items()}
        ready = [n for n, d in indeg.items() if d == 0]
        heapq.heapify(ready)
        order = []
        while ready:
            n = heapq.heappop(ready)
            order.append(n)
            for m in self.outputs[n]:
                indeg[m] -= 1
                if indeg[m] == 0:
                    heapq.heappush(ready, m)
        if len(order) != len(self.inputs):
            stuck = sorted(n for n, d in indeg.items() if d > 0)[:5]
            raise StructuralError("overlay has a cycle through " + ", ".join(map(self.name, stuck)))
        return order

    def ancestors(self, n: int) -> set[int]:
        seen = set()
        stack = [n]
        while stack:
            for u in self.inputs[stack.pop()]:
                if u not in seen:
                    seen.add(u)
                    stack.append(u)
        return seen

    def descendants(self, n: int) -> set[int]:
        seen = set()
        stack = [n]
        while stack:
            for v in self.outputs[stack.pop()]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        return seen

    def copy(self) -> "OverlayGraph":
        o = OverlayGraph(self.mode, self.labels)
        o.inputs = {n: dict(d) for n, d in self.inputs.items()}
        o.outputs = {n: dict(d) for n, d in self.outputs.items()}
        o.decisions = dict(self.decisions)
        o._next_partial = self._next_partial
        return o

    def reverse_index(self) -> dict[int, set[int]]:
        """Writer (data id) -> overlay nodes whose coverage includes it."""
        out: dict[int, set[int]] = {}
        for n, vec in all_coverage(self).items():
            for w, c in vec.items():
                if c:
                    out.setdefault(w, set()).add(n)
        return out

    def structure_equal(self, other: "OverlayGraph") -> bool:
        return (
            self.mode == other.mode
            and self.inputs == other.inputs
            and self.decisions == other.decisions
        )


def trivial_overlay(a: BipartiteGraph, mode: str = SENSITIVE) -> OverlayGraph:
    o = OverlayGraph(mode, a.labels)
    for w in sorted(a.writers):
        o.add_writer(w)
    for r in sorted(a.readers):
        rid = o.add_reader(r)
        for w in sorted(a.inputs[r]):
            o.add_edge(writer_id(w), rid)
    return o


def sharing_index(o: OverlayGraph, a: BipartiteGraph) -> float:
    m = a.num_edges
    if m == 0:
        raise UndefinedMetricError("sharing index is undefined for a bipartite graph without edges")
    return 1.0 - o.num_edges / m


# -- coverage ------------------------------------------------------------------

def _coverage_pass(o: OverlayGraph, order: Iterable[int], positive_only: bool = False) -> dict[int, Counter]:
    cov: dict[int, Counter] = {}
    for n in order:
        if n % 3 == 0:
            cov[n] = Counter({n // 3: 1})
            continue
        acc: Counter = Counter()
        for u, s in o.inputs[n].items():
            if positive_only and s < 0:
                continue
            for w, c in cov[u].items():
                acc[w] += s * c
        for w in [w for w, c in acc.items() if c == 0]:
            del acc[w]
        if acc and max(abs(c) for c in acc.values()) > _INT64:
            raise StructuralError(f"coverage counter overflow at {o.name(n)}")
        cov[n] = acc
    return cov


def all_coverage(o: OverlayGraph, positive_only: bool = False) -> dict[int, Counter]:
    """Signed contribution of each writer (data id) to every overlay node."""
    return _coverage_pass(o, o.topo_order(), positive_only)


def coverage(o: OverlayGraph, n: int) -> dict[int, int]:
    o._check(n)
    sub = o.ancestors(n) | {n}
    # topological order of the ancestor subgraph only
    indeg = {m: sum(1 for u in o.inputs[m] if u in sub) for m in sub}
    ready = deque(sorted(m for m, d in indeg.items() if d == 0))
    order = []
    while ready:
        m = ready.popleft()
        order.append(m)
        for v in o.outputs[m]:
            if v in sub:
                indeg[v] -= 1
                if indeg[v] == 0:
                    ready.append(v)
    if len(order) != len(sub):
        raise StructuralError(f"cycle above {o.name(n)}")
    return dict(_coverage_pass(o, order)[n])


# -- validation ------------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    kind: str
    detail: str

    def __str__(self):
        return f"{self.kind}: {self.detail}"


def validate(o: OverlayGraph, a: BipartiteGraph, caps: Capabilities, limit: int = 50) -> list[Violation]:
    out: list[Violation] = []

    def bad(k, d):
        if len(out) < limit:
            out.append(Violation(k, d))

    try:
        order = o.topo_order()
    except StructuralError as exc:
        return [Violation("cycle", str(exc))]

    negatives = False
    for v, ins in o.inputs.items():
        if ins and v % 3 == 0:
            bad("writer_input", f"{o.name(v)} has incoming edges")
        for u, s in ins.items():
            if u % 3 == 1:
                bad("reader_output", f"{o.name(u)} feeds {o.name(v)}")
            if s < 0:
                negatives = True
            if o.decisions[v] == PUSH and o.decisions[u] != PUSH:
                bad("decision", f"push node {o.name(v)} has pull input {o.name(u)}")
    for n, d in o.decisions.items():
        if d not in (PUSH, PULL):
            bad("decision", f"{o.name(n)} has unknown decision {d!r}")
        elif n % 3 == 0 and d != PUSH:
            bad("decision", f"writer {o.name(n)} must be push")

    if negatives and not caps.subtractable:
        bad("capability", "negative edges need a subtractable aggregate")
    if negatives and o.mode == INSENSITIVE:
        bad("negative_edge", "duplicate-insensitive overlays cannot carry negative edges")

    present = {n // 3 for n in o.inputs if n % 3 == 1}
    for r in sorted(a.readers - present):
        bad("missing_reader", f"reader {a.label(r)} absent from overlay")
    for r in sorted(present - a.readers):
        bad("extra_reader", f"reader {a.label(r)} not in bipartite graph")

    cov = _coverage_pass(o, order)
    pos = _coverage_pass(o, order, positive_only=True) if o.mode == INSENSITIVE else None
    for r in sorted(present & a.readers):
        rid = reader_id(r)
        want = a.inputs[r]
        if o.mode == SENSITIVE:
            got = cov[rid]
            for w in sorted(set(got) | want):
                c = got.get(w, 0)
                e = 1 if w in want else 0
                if c == e:
                    continue
                if c > 1 and e == 1:
                    bad("duplicate_path", f"({a.label(w)}, {a.label(r)}) reached {c} times")
                else:
                    bad("coverage", f"({a.label(w)}, {a.label(r)}) net contribution {c}, expected {e}")
        else:
            got = pos[rid]
            for w in sorted(set(got) | want):
                c = got.get(w, 0)
                if (c >= 1) != (w in want):
                    bad("coverage", f"({a.label(w)}, {a.label(r)}) reached by {c} paths")
                elif c > 1 and not caps.duplicate_insensitive:
                    bad("duplicate_path", f"({a.label(w)}, {a.label(r)}) reached {c} times")
    return out


def orphans(o: OverlayGraph) -> list[int]:
    """Partial nodes lacking inputs or outputs."""
    return [n for n in o.partials() if not o.inputs[n] or not o.outputs[n]]


def depth_profile(o: OverlayGraph) -> tuple[dict[int, int], float]:
    depth: dict[int, int] = {}
    for n in o.topo_order():
        ins = o.inputs[n]
        depth[n] = 1 + max((depth[u] for u in ins), default=-1) if ins else 0
    per_reader = {n // 3: depth[n] for n in o.inputs if n % 3 == 1}
    mean = sum(per_reader.values()) / len(per_reader) if per_reader else 0.0
    return per_reader, mean


# -- serialization -------------------------------------------------------------

def _sort_key(o: OverlayGraph, n: int):
    if n % 3 == 2:
        return (1, n // 3, "")
    return (0 if n % 3 == 0 else 2, 0, o.name(n))


def dump_overlay(o: OverlayGraph) -> str:
    lines = [f"# mode: {o.mode}"]
    for n in sorted(o.inputs, key=lambda n: _sort_key(o, n)):
        ins = sorted(o.inputs[n], key=lambda u: _sort_key(o, u))
        parts = [o.name(n), kind(n), o.decisions[n]]
        parts += [("+" if o.inputs[n][u] > 0 else "-") + o.name(u) for u in ins]
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


def load_overlay(text: str, labels: Optional[dict[str, int]] = None, label_list: Optional[list[str]] = None) -> OverlayGraph:
    """Parse ``dump_overlay`` output.

    ``labels`` maps data-node labels to ids (e.g. ``DataGraph.ids``); without
    it, ids are handed out in order of first appearance.
    """
    mode = SENSITIVE
    records = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, val = line[1:].partition(":")
            if key.strip() == "mode":
                mode = val.strip()
            continue
        parts = line.split()
        if len(parts) < 3:
            raise OverlayParseError(f"line {lineno}: expected 'id kind decision [inputs]'")
        records.append((lineno, parts))

    own_labels: list[str] = list(label_list) if label_list is not None else []
    ids: dict[str, int] = dict(labels) if labels is not None else {l: i for i, l in enumerate(own_labels)}

    def resolve(tok: str, lineno: int) -> int:
        role, sep, rest = tok.partition(":")
        if not sep or role not in ("w", "r", "p") or not rest:
            raise OverlayParseError(f"line {lineno}: bad node id {tok!r}")
        if role == "p":
            try:
                return 3 * int(rest) + 2
            except ValueError:
                raise OverlayParseError(f"line {lineno}: bad partial id {tok!r}") from None
        if rest not in ids:
            if labels is not None:
                raise OverlayParseError(f"line {lineno}: unknown node label {rest!r}")
            ids[rest] = len(own_labels)
            own_labels.append(rest)
        b = ids[rest]
        return 3 * b if role == "w" else 3 * b + 1

    o = OverlayGraph(mode)
    parsed = []
    for lineno, parts in records:
        n = resolve(parts[0], lineno)
        if parts[1] != kind(n):
            raise OverlayParseError(f"line {lineno}: kind {parts[1]!r} does not match id {parts[0]!r}")
        if parts[2] not in (PUSH, PULL):
            raise OverlayParseError(f"line {lineno}: bad decision {parts[2]!r}")
        if n in o.inputs:
            raise OverlayParseError(f"line {lineno}: duplicate node {parts[0]!r}")
        o._add(n, parts[2])
        if n % 3 == 2:
            o._next_partial = max(o._next_partial, n // 3 + 1)
        parsed.append((lineno, n, parts[3:]))
    for lineno, n, ins in parsed:
        for tok in ins:
            if tok[:1] not in "+-" or len(tok) < 2:
                raise OverlayParseError(f"line {lineno}: input {tok!r} needs a +/- sign")
            u = resolve(tok[1:], lineno)
            if u not in o.inputs:
                raise OverlayParseError(f"line {lineno}: input {tok[1:]!r} is not a declared node")
            try:
                o.add_edge(u, n, 1 if tok[0] == "+" else -1)
            except StructuralError as exc:
                raise OverlayParseError(f"line {lineno}: {exc}") from None
    if labels is not None:
        inv = [""] * (max(labels.values(), default=-1) + 1)
        for lab, i in labels.items():
            inv[i] = lab
        o.labels = label_list if label_list is not None else inv
    else:
        o.labels = own_labels
    return o
