"""Synthetic graphs, read/write traces and structural update streams."""
from __future__ import annotations

import csv
import io
import random
import re
from bisect import bisect_right
from dataclasses import dataclass
from datetime import datetime
from itertools import accumulate
from typing import Iterable, Optional, Sequence, Union

from .graph import DataGraph
from .maintain import EDGE_ADD, EDGE_DEL, NODE_ADD, NODE_DEL, StructureUpdate
from .running_example import Activity

EVENT_KINDS = ("R", "W", "EADD", "EDEL", "NADD", "NDEL")
_STRUCTURAL = {"EADD": EDGE_ADD, "EDEL": EDGE_DEL, "NADD": NODE_ADD, "NDEL": NODE_DEL}


@dataclass(frozen=True)
class WorkloadEvent:
    ts: float
    kind: str
    node: str
    node2: Optional[str] = None
    value: Optional[int] = None

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {self.kind!r}")
        if self.kind in ("EADD", "EDEL") and not self.node2:
            raise ValueError(f"{self.kind} needs a second node")

    @property
    def structural(self) -> bool:
        return self.kind in _STRUCTURAL

    def to_update(self) -> StructureUpdate:
        return StructureUpdate(_STRUCTURAL[self.kind], self.node, self.node2, self.ts)


# -- graphs -----------------------------------------------------------------------------


def copying_graph(n: int, m: int = 5, beta: float = 0.8, seed: int = 0) -> DataGraph:
    """Directed preferential-attachment graph grown by link copying.

    Each new node picks a random prototype and, for each of its m out-links,
    copies the prototype's matching link with probability beta or otherwise
    links to a node chosen proportionally to in-degree + 1.  Copying is what
    makes out-neighbourhoods overlap the way they do in social graphs.
    """
    if n < m + 1:
        raise ValueError("need at least m + 1 nodes")
    rng = random.Random(seed)
    out: list[list[int]] = [[u for u in range(m + 1) if u != v] for v in range(m + 1)]
    targets = [v for v in range(m + 1) for _ in range(m + 1)]
    for v in range(m + 1, n):
        proto = out[rng.randrange(v)]
        chosen: list[int] = []
        for i in range(m):
            t = proto[i] if i < len(proto) and rng.random() < beta else rng.choice(targets)
            if t != v and t not in chosen:
                chosen.append(t)
        out.append(chosen)
        targets.append(v)
        targets.extend(chosen)
    g = DataGraph()
    for v in range(n):
        g.add_node(str(v))
    for v, ts in enumerate(out):
        for t in ts:
            g.add_edge(v, t)
    return g


def random_graph(n: int, mean_degree: float, seed: int = 0) -> DataGraph:
    """Directed G(n, m) graph with m = n * mean_degree arcs, no self-loops."""
    rng = random.Random(seed)
    g = DataGraph()
    for v in range(n):
        g.add_node(str(v))
    target = min(int(round(n * mean_degree)), n * (n - 1))
    while g.num_arcs < target:
        u, v = rng.randrange(n), rng.randrange(n)
        if u != v:
            g.add_edge(u, v)
    return g


# -- Zipf traces ------------------------------------------------------------------------


def zipf_weights(n: int, skew: float) -> list[float]:
    if skew <= 0:
        raise ValueError("skew must be positive")
    w = [1.0 / (i + 1) ** skew for i in range(n)]
    total = sum(w)
    return [x / total for x in w]


def _ranked(nodes: Sequence[str], seed: int, by_degree: Optional[dict[str, int]]) -> list[str]:
    if by_degree is not None:
        return sorted(nodes, key=lambda x: (-by_degree.get(x, 0), x))
    order = list(nodes)
    random.Random(seed).shuffle(order)
    return order


def zipf_activity(
    nodes: Sequence[str],
    skew: float,
    write_read_ratio: float,
    rate: float = 1.0,
    seed: int = 0,
    by_degree: Optional[dict[str, int]] = None,
    ids: Optional[dict[str, int]] = None,
) -> Activity:
    """Expected per-node write and read rates for a Zipf workload of total ``rate``.

    Reads are proportional to writes at every node, scaled by 1 / ratio.
    """
    ranked = _ranked(nodes, seed, by_degree)
    p = zipf_weights(len(ranked), skew)
    wshare = write_read_ratio / (1.0 + write_read_ratio)
    key = (lambda x: ids[x]) if ids is not None else (lambda x: x)
    return Activity(
        {key(x): rate * wshare * pi for x, pi in zip(ranked, p)},
        {key(x): rate * (1 - wshare) * pi for x, pi in zip(ranked, p)},
    )


def gen_zipf(
    nodes: Sequence[str],
    skew: float,
    write_read_ratio: float,
    count: int,
    seed: int = 0,
    value_domain: int = 16,
    start_ts: float = 0.0,
    by_degree: Optional[dict[str, int]] = None,
) -> list[WorkloadEvent]:
    """Reads and writes over Zipf-ranked nodes, one event per time unit.

    Node ranks come from a seeded shuffle, or from ``by_degree`` (highest
    degree hottest) when given.  Write values are drawn from
    ``range(value_domain)``.
    """
    if write_read_ratio <= 0:
        raise ValueError("write/read ratio must be positive")
    if not nodes:
        return []
    rng = random.Random(seed)
    ranked = _ranked(nodes, seed, by_degree)
    cum = list(accumulate(zipf_weights(len(ranked), skew)))
    wshare = write_read_ratio / (1.0 + write_read_ratio)
    out = []
    for i in range(count):
        x = ranked[min(bisect_right(cum, rng.random() * cum[-1]), len(ranked) - 1)]
        if rng.random() < wshare:
            out.append(WorkloadEvent(start_ts + i, "W", x, value=rng.randrange(value_domain)))
        else:
            out.append(WorkloadEvent(start_ts + i, "R", x))
    return out


def shift_workload(
    nodes: Sequence[str],
    skew: float,
    ratio_before: float,
    ratio_after: float,
    count: int,
    seed: int = 0,
    value_domain: int = 16,
) -> tuple[list[WorkloadEvent], int]:
    """Two Zipf phases with different write/read ratios; returns (events, shift index).

    The second phase also re-draws which nodes are hot, so decisions planned
    for the first phase go stale on both axes.
    """
    half = count // 2
    first = gen_zipf(nodes, skew, ratio_before, half, seed, value_domain)
    second = gen_zipf(nodes, skew, ratio_after, count - half, seed + 1, value_domain, start_ts=float(half))
    return first + second, half


def activity_from_events(events: Iterable[WorkloadEvent], ids: dict[str, int], duration: Optional[float] = None) -> Activity:
    """Observed per-node rates (events per time unit) over a slice of a trace."""
    events = list(events)
    wr = dict.fromkeys(ids.values(), 0.0)
    rr = dict.fromkeys(ids.values(), 0.0)
    for e in events:
        v = ids.get(e.node)
        if v is None:
            continue
        if e.kind == "W":
            wr[v] += 1
        elif e.kind == "R":
            rr[v] += 1
    if duration is None:
        duration = max(1.0, events[-1].ts - events[0].ts + 1) if events else 1.0
    return Activity({v: c / duration for v, c in wr.items()}, {v: c / duration for v, c in rr.items()})


# -- structural update mixes ------------------------------------------------------------


def gen_structure_updates(g: DataGraph, count: int, seed: int = 0,
                          mix: tuple[float, float, float, float] = (0.4, 0.4, 0.1, 0.1),
                          max_new_edges: int = 8) -> list[WorkloadEvent]:
    """A valid sequence of edge/node additions and deletions against ``g``.

    ``g`` is not modified; validity is tracked on a private copy of the arc
    set.  New nodes arrive as NADD followed by their EADD events.
    """
    rng = random.Random(seed)
    alive = [g.labels[v] for v in sorted(g.alive)]
    arcs = {(g.labels[u], g.labels[v]) for u, v in g.arcs()}
    fresh = 0
    out: list[WorkloadEvent] = []
    ts = 0.0
    cum = list(accumulate(mix))
    while len(out) < count:
        ts += 1
        pick = bisect_right(cum, rng.random() * cum[-1])
        if pick == 0 and len(alive) >= 2:
            x, y = rng.sample(alive, 2)
            if (x, y) not in arcs:
                arcs.add((x, y))
                out.append(WorkloadEvent(ts, "EADD", x, y))
        elif pick == 1 and arcs:
            x, y = rng.choice(sorted(arcs))
            arcs.discard((x, y))
            out.append(WorkloadEvent(ts, "EDEL", x, y))
        elif pick == 2:
            lab = f"new{seed}_{fresh}"
            fresh += 1
            out.append(WorkloadEvent(ts, "NADD", lab))
            others = list(alive)
            alive.append(lab)
            for _ in range(rng.randint(0, max_new_edges)):
                if not others or len(out) >= count:
                    break
                y = rng.choice(others)
                pair = (y, lab) if rng.random() < 0.7 else (lab, y)
                if pair not in arcs:
                    arcs.add(pair)
                    out.append(WorkloadEvent(ts, "EADD", *pair))
        elif pick == 3 and len(alive) > 3:
            x = rng.choice(alive)
            alive.remove(x)
            arcs = {p for p in arcs if x not in p}
            out.append(WorkloadEvent(ts, "NDEL", x))
    return out[:count]


# -- trace files ------------------------------------------------------------------------

TRACE_FIELDS = ("ts", "kind", "node", "node2", "value")


def write_trace(events: Iterable[WorkloadEvent], dest=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_FIELDS)
    for e in events:
        w.writerow([repr(e.ts) if e.ts != int(e.ts) else int(e.ts), e.kind, e.node,
                    e.node2 or "", "" if e.value is None else e.value])
    text = buf.getvalue()
    if dest is not None:
        dest.write(text)
    return text


def read_trace(source: Union[str, Iterable[str]]) -> list[WorkloadEvent]:
    """Parse the CSV trace format; a header row is optional."""
    lines = source.splitlines() if isinstance(source, str) else source
    out = []
    last = float("-inf")
    for lineno, row in enumerate(csv.reader(lines), start=1):
        if not row or row[0].startswith("#") or row[0] == "ts":
            continue
        row = row + [""] * (5 - len(row))
        try:
            ts = float(row[0])
            value = int(row[4]) if row[4] != "" else None
            ev = WorkloadEvent(ts, row[1], row[2], row[3] or None, value)
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
        if ts < last:
            raise ValueError(f"line {lineno}: timestamps must not decrease")
        last = ts
        out.append(ev)
    return out


# -- HTTP logs ----------------------------------------------------------------------------

_CLF = re.compile(r'^(\S+) \S+ \S+ \[([^\]]+)\] "[^"]*" \S+ \S+')
_EPA = re.compile(r'^(\S+) \[(\d+):(\d+):(\d+):(\d+)\] "[^"]*" \S+ \S+')


@dataclass
class HttpTrace:
    events: list[tuple[float, str]]  # (seconds since first request, node label)
    clients: int
    skipped: int
    per_client: dict[str, int]


def _parse_line(line: str) -> Optional[tuple[str, float]]:
    m = _EPA.match(line)
    if m:
        d, h, mi, s = (int(x) for x in m.groups()[1:])
        return m.group(1), ((d * 24 + h) * 60 + mi) * 60 + s
    m = _CLF.match(line)
    if m:
        try:
            t = datetime.strptime(m.group(2), "%d/%b/%Y:%H:%M:%S %z")
        except ValueError:
            return None
        return m.group(1), t.timestamp()
    return None


def parse_http_trace(source: Union[str, Iterable[str]], nodes: Sequence[str], seed: int = 0) -> HttpTrace:
    """Map web-log requests onto graph nodes.

    Clients are dealt onto nodes round-robin.  When there are fewer clients
    than nodes each client owns several nodes and every one of its requests
    goes to a seeded random pick among them, so busy clients spread out.
    Lines that do not parse are skipped and counted.
    """
    if not nodes:
        raise ValueError("need at least one node")
    lines = source.splitlines() if isinstance(source, str) else source
    raw: list[tuple[float, str]] = []
    skipped = 0
    for line in lines:
        line = line.strip()
        if not line:
            continue
        got = _parse_line(line)
        if got is None:
            skipped += 1
            continue
        raw.append((got[1], got[0]))
    raw.sort(key=lambda p: p[0])
    clients = list(dict.fromkeys(c for _, c in raw))  # first-seen order
    owned: dict[str, list[str]] = {c: [] for c in clients}
    if clients:
        if len(clients) >= len(nodes):
            for i, c in enumerate(clients):
                owned[c].append(nodes[i % len(nodes)])
        else:
            for i, x in enumerate(nodes):
                owned[clients[i % len(clients)]].append(x)
    rng = random.Random(seed)
    t0 = raw[0][0] if raw else 0.0
    events = []
    per_client: dict[str, int] = {}
    for ts, c in raw:
        targets = owned[c]
        events.append((ts - t0, targets[0] if len(targets) == 1 else rng.choice(targets)))
        per_client[c] = per_client.get(c, 0) + 1
    return HttpTrace(events, len(clients), skipped, per_client)


def http_workload(trace: HttpTrace, write_read_ratio: float = 1.0, seed: int = 0,
                  value_domain: int = 16) -> list[WorkloadEvent]:
    """Turn mapped requests into reads and writes with a seeded biased coin."""
    rng = random.Random(seed)
    wshare = write_read_ratio / (1.0 + write_read_ratio)
    out = []
    for ts, x in trace.events:
        if rng.random() < wshare:
            out.append(WorkloadEvent(ts, "W", x, value=rng.randrange(value_domain)))
        else:
            out.append(WorkloadEvent(ts, "R", x))
    return out
