"""Trace replay and metrics.

A trace is cut into read/write segments at structural events.  Segments are
replayed by injector threads: writes go to the worker owning the node (so
each node's writes stay ordered), reads are dealt round-robin.  Structural
events are applied between segments while the engine is quiescent, followed
by a single engine epoch switch per run of consecutive structural events.
"""
from __future__ import annotations

import csv
import io
import json
import threading
import time
import zlib
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Any, Optional, Sequence

from .costs import CostModel
from .dataflow import DataflowPlan, adapt, annotate_frequencies, apply_plan, plan_cost
from .engine import Engine, EngineConfig
from .errors import EgoAggError
from .maintain import Maintainer
from .overlay import depth_profile, sharing_index
from .pipeline import Compiled, compile_query, plan_overlay
from .workload import WorkloadEvent, activity_from_events, shift_workload

_MAX_ERRORS = 20


@dataclass
class KindCounts:
    emitted: int = 0
    consumed: int = 0
    rejected: int = 0


@dataclass
class MetricsReport:
    ops: int = 0
    wall_seconds: float = 0.0
    throughput: float = 0.0
    read_latency_mean_us: float = 0.0
    read_latency_p95_us: float = 0.0
    read_latency_max_us: float = 0.0
    write_latency_mean_us: Optional[float] = None
    counts: dict[str, KindCounts] = field(default_factory=dict)
    sharing_index: float = 0.0
    depth_mean: float = 0.0
    plan_cost: float = 0.0
    plan_method: str = ""
    algorithm: str = ""
    threads: int = 1
    phases: dict[str, float] = field(default_factory=dict)
    errors: list[str] = field(default_factory=list)
    error_count: int = 0
    final_reads: dict[str, Any] = field(default_factory=dict, repr=False)

    def to_dict(self, with_reads: bool = False) -> dict:
        d = asdict(self)
        if not with_reads:
            d.pop("final_reads")
        else:
            d["final_reads"] = {k: _jsonable(v) for k, v in self.final_reads.items()}
        return d

    def to_json(self, with_reads: bool = False) -> str:
        return json.dumps(self.to_dict(with_reads), indent=2, sort_keys=True)

    CSV_FIELDS = (
        "algorithm", "plan_method", "threads", "ops", "wall_seconds", "throughput",
        "read_latency_mean_us", "read_latency_p95_us", "read_latency_max_us",
        "reads", "writes", "structural", "rejected", "sharing_index", "depth_mean", "plan_cost",
    )

    def csv_row(self) -> dict:
        c = self.counts
        return {
            "algorithm": self.algorithm,
            "plan_method": self.plan_method,
            "threads": self.threads,
            "ops": self.ops,
            "wall_seconds": round(self.wall_seconds, 6),
            "throughput": round(self.throughput, 1),
            "read_latency_mean_us": round(self.read_latency_mean_us, 2),
            "read_latency_p95_us": round(self.read_latency_p95_us, 2),
            "read_latency_max_us": round(self.read_latency_max_us, 2),
            "reads": c.get("R", KindCounts()).consumed,
            "writes": c.get("W", KindCounts()).consumed,
            "structural": sum(k.consumed for n, k in c.items() if n not in ("R", "W")),
            "rejected": sum(k.rejected for k in c.values()),
            "sharing_index": round(self.sharing_index, 4),
            "depth_mean": round(self.depth_mean, 3),
            "plan_cost": round(self.plan_cost, 3),
        }

    def text(self) -> str:
        lines = [
            f"algorithm      {self.algorithm} / {self.plan_method} / {self.threads} thread(s)",
            f"throughput     {self.throughput:,.0f} ops/s ({self.ops} ops in {self.wall_seconds:.3f}s)",
            f"read latency   mean {self.read_latency_mean_us:.1f}us  p95 {self.read_latency_p95_us:.1f}us"
            f"  max {self.read_latency_max_us:.1f}us",
            f"overlay        sharing index {self.sharing_index:.3f}, mean depth {self.depth_mean:.2f}",
            f"plan cost      {self.plan_cost:.2f}",
        ]
        for kind in sorted(self.counts):
            k = self.counts[kind]
            lines.append(f"{kind:<14} emitted {k.emitted}, consumed {k.consumed}, rejected {k.rejected}")
        for name, secs in self.phases.items():
            lines.append(f"phase {name:<8} {secs:.3f}s")
        if self.error_count:
            lines.append(f"errors         {self.error_count} (first: {self.errors[0]})")
        return "\n".join(lines)


def reports_to_csv(reports: Sequence[MetricsReport], extra: Optional[Sequence[dict]] = None) -> str:
    extra = extra or [{} for _ in reports]
    keys = list(extra[0]) if extra and extra[0] else []
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=keys + list(MetricsReport.CSV_FIELDS), lineterminator="\n")
    w.writeheader()
    for rep, ex in zip(reports, extra):
        w.writerow({**ex, **rep.csv_row()})
    return buf.getvalue()


def _jsonable(v):
    if isinstance(v, (int, float, str)) or v is None:
        return v
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return repr(v)


def percentile(sorted_values: Sequence[float], p: float) -> float:
    """Nearest-rank percentile of an ascending sequence."""
    if not sorted_values:
        return 0.0
    rank = max(1, -(-len(sorted_values) * p // 100))
    return sorted_values[int(rank) - 1]


class _Worker:
    """Per-thread tallies, merged once the segment is done."""

    def __init__(self):
        self.counts: Counter = Counter()
        self.rejected: Counter = Counter()
        self.read_lat: list[float] = []
        self.write_lat: list[float] = []
        self.errors: list[str] = []
        self.error_count = 0

    def fail(self, kind: str, exc: BaseException) -> None:
        self.rejected[kind] += 1
        self.error_count += 1
        if len(self.errors) < _MAX_ERRORS:
            self.errors.append(f"{kind}: {type(exc).__name__}: {exc}")


class Replayer:
    """Replays traces against one compiled query and its engine."""

    def __init__(self, c: Compiled, threads: int = 1, config: Optional[EngineConfig] = None,
                 isolated: bool = False):
        if threads < 1:
            raise ValueError("threads must be >= 1")
        self.c = c
        self.threads = threads
        self.isolated = isolated
        self.config = config or EngineConfig(read_threads=threads, window=c.q.window)
        self.engine = Engine(c.o, c.uda, self.config, nodes=c.g.alive)
        self.maintainer: Optional[Maintainer] = None

    # -- segments -----------------------------------------------------------------------
    def _run_ops(self, ops: Sequence[WorkloadEvent], wk: _Worker, timed_writes: bool) -> None:
        eng = self.engine
        ids = self.c.g.ids
        clock = time.perf_counter
        for e in ops:
            try:
                v = ids[e.node]
                if e.kind == "W":
                    if timed_writes:
                        t0 = clock()
                        eng.write(v, e.ts, e.value)
                        eng.drain()
                        wk.write_lat.append(clock() - t0)
                    else:
                        eng.write(v, e.ts, e.value)
                else:
                    t0 = clock()
                    eng.read(v)
                    wk.read_lat.append(clock() - t0)
                wk.counts[e.kind] += 1
            except (EgoAggError, KeyError) as exc:
                wk.fail(e.kind, exc)

    def _segment(self, ops: list[WorkloadEvent], workers: list[_Worker]) -> None:
        if self.threads == 1 or self.isolated:
            self._run_ops(ops, workers[0], self.isolated)
            return
        n = self.threads
        parts: list[list[WorkloadEvent]] = [[] for _ in range(n)]
        rr = 0
        for e in ops:
            if e.kind == "W":
                parts[zlib.crc32(e.node.encode()) % n].append(e)
            else:
                parts[rr].append(e)
                rr = (rr + 1) % n
        ts = [threading.Thread(target=self._run_ops, args=(p, w, False)) for p, w in zip(parts, workers)]
        for t in ts:
            t.start()
        for t in ts:
            t.join()
        self.engine.drain()

    def _structural(self, batch: list[WorkloadEvent], wk: _Worker) -> None:
        if self.maintainer is None:
            self.maintainer = Maintainer(self.c.g, self.c.q, self.c.o)
        g, eng = self.c.g, self.engine
        changed = False
        for e in batch:
            try:
                dropped = g.ids.get(e.node) if e.kind == "NDEL" else None
                self.maintainer.apply(e.to_update())
                if e.kind == "NADD":
                    eng.add_data_node(g.node_id(e.node))
                elif e.kind == "NDEL" and dropped is not None:
                    eng.drop_data_node(dropped)
                wk.counts[e.kind] += 1
                changed = True
            except (EgoAggError, KeyError, ValueError) as exc:
                wk.fail(e.kind, exc)
        if changed:
            eng.install(self.c.o)

    # -- public ---------------------------------------------------------------------------
    def replay(self, trace: Sequence[WorkloadEvent]) -> MetricsReport:
        workers = [_Worker() for _ in range(self.threads)]
        emitted = Counter(e.kind for e in trace)
        self.engine.start()
        t0 = time.perf_counter()
        try:
            i = 0
            while i < len(trace):
                j = i
                if trace[i].structural:
                    while j < len(trace) and trace[j].structural:
                        j += 1
                    self._structural(list(trace[i:j]), workers[0])
                else:
                    while j < len(trace) and not trace[j].structural:
                        j += 1
                    self._segment(list(trace[i:j]), workers)
                i = j
        finally:
            self.engine.stop()
        wall = time.perf_counter() - t0
        return self._report(workers, emitted, wall)

    def _report(self, workers: list[_Worker], emitted: Counter, wall: float) -> MetricsReport:
        consumed, rejected = Counter(), Counter()
        read_lat, write_lat, errors = [], [], []
        error_count = 0
        for w in workers:
            consumed.update(w.counts)
            rejected.update(w.rejected)
            read_lat.extend(w.read_lat)
            write_lat.extend(w.write_lat)
            errors.extend(w.errors)
            error_count += w.error_count
        read_lat.sort()
        ops = sum(consumed.values())
        c = self.c
        return MetricsReport(
            ops=ops,
            wall_seconds=wall,
            throughput=ops / wall if wall > 0 else 0.0,
            read_latency_mean_us=1e6 * sum(read_lat) / len(read_lat) if read_lat else 0.0,
            read_latency_p95_us=1e6 * percentile(read_lat, 95),
            read_latency_max_us=1e6 * read_lat[-1] if read_lat else 0.0,
            write_latency_mean_us=1e6 * sum(write_lat) / len(write_lat) if write_lat else None,
            counts={k: KindCounts(emitted[k], consumed[k], rejected[k]) for k in sorted(emitted)},
            sharing_index=sharing_index(c.o, c.a) if c.a.num_edges else 0.0,
            depth_mean=depth_profile(c.o)[1],
            plan_cost=c.plan.cost if c.plan is not None else 0.0,
            plan_method=c.plan.method if c.plan is not None else "",
            threads=self.threads,
            errors=errors[:_MAX_ERRORS],
            error_count=error_count,
        )

    def final_reads(self) -> dict[str, Any]:
        """Every reader's current answer, keyed by node label."""
        o, eng, g = self.c.o, self.engine, self.c.g
        return {g.labels[n // 3]: eng.read(n // 3) for n in sorted(o.nodes) if n % 3 == 1}


def run_benchmark(
    c: Compiled,
    trace: Sequence[WorkloadEvent],
    threads: int = 1,
    config: Optional[EngineConfig] = None,
    isolated: bool = False,
    collect_reads: bool = False,
) -> MetricsReport:
    """Replay ``trace`` through an already compiled and planned query.

    Engine errors are counted per event kind and the run carries on.  With
    ``isolated`` every event runs alone on the calling thread (writes are
    drained before the next event) so latencies carry no queueing delay.
    """
    rep = Replayer(c, threads, config, isolated)
    report = rep.replay(trace)
    report.algorithm = c.algorithm
    if collect_reads:
        report.final_reads = rep.final_reads()
    return report


def run_configuration(
    g,
    q,
    trace: Sequence[WorkloadEvent],
    algo: str = "iob",
    method: str = "optimal",
    threads: int = 1,
    activity=None,
    cost_model: Optional[CostModel] = None,
    params=None,
    isolated: bool = False,
    collect_reads: bool = False,
    config: Optional[EngineConfig] = None,
) -> MetricsReport:
    """Build, plan and replay in one go, timing each phase.

    Activity defaults to the rates observed in the trace itself.  ``g`` is
    copied first because structural events mutate it.
    """
    g = g.copy()
    t0 = time.perf_counter()
    c = compile_query(g, q, algo, params)
    t1 = time.perf_counter()
    if activity is None:
        activity = activity_from_events(trace, {lab: v for lab, v in g.ids.items() if v in g.alive})
    plan_overlay(c, activity, method, cost_model)
    t2 = time.perf_counter()
    report = run_benchmark(c, trace, threads, config, isolated, collect_reads)
    report.phases = {"build": t1 - t0, "plan": t2 - t1, "replay": report.wall_seconds}
    return report


@dataclass
class ShiftResult:
    static_cost: float
    adapted_cost: float
    flips: int
    static_throughput: list[float]
    adapted_throughput: list[float]


def shift_experiment(
    g,
    q,
    algo: str = "vnma",
    skew: float = 1.0,
    ratio_before: float = 20.0,
    ratio_after: float = 0.05,
    count: int = 40000,
    seed: int = 0,
    samples: int = 2,
    repeats: int = 5,
    threads: int = 1,
    params=None,
) -> ShiftResult:
    """Plan for the first half of a trace, then let the workload shift.

    The first part of the post-shift phase is the observation window, cut
    into ``samples`` slices; ``adapt`` re-decides the frontier from them.
    Both plans are then costed under the whole post-shift phase's rates and
    replayed over the rest of it.
    """
    labels = [g.labels[v] for v in sorted(g.alive)]
    events, half = shift_workload(labels, skew, ratio_before, ratio_after, count, seed)
    before, after = events[:half], events[half:]
    observe, tail = after[: len(after) // 2], after[len(after) // 2:]
    ids = {lab: g.ids[lab] for lab in labels}
    c = compile_query(g, q, algo, params)
    static = plan_overlay(c, activity_from_events(before, ids))
    cm = c.cost_model
    step = max(1, len(observe) // samples)
    windows = [annotate_frequencies(c.o, activity_from_events(observe[i:i + step], ids))
               for i in range(0, step * samples, step)]
    adapted = adapt(c.o, static, windows, cm)
    post = annotate_frequencies(c.o, activity_from_events(after, ids))
    result = ShiftResult(
        plan_cost(c.o, static.decisions, post, cm),
        plan_cost(c.o, adapted.decisions, post, cm),
        sum(1 for n in c.o.nodes if static.decisions[n] != adapted.decisions[n]),
        [], [],
    )
    for _ in range(repeats):
        for plan, out in ((static, result.static_throughput), (adapted, result.adapted_throughput)):
            apply_plan(c.o, DataflowPlan(plan.decisions, plan.cost, plan.method))
            c.plan = plan
            rep = Replayer(c, threads)
            rep.replay(observe)  # warm the windows to the shift point
            out.append(rep.replay(tail).throughput)
    return result
