"""Executes writes and reads over a decided overlay.

Writes enter at writer nodes and are pushed downstream as (old, new) value
deltas until they reach a pull node.  Reads walk upstream from the reader,
merging snapshots of push nodes and recomputing pull nodes on the way.

Windows live per data node, not per overlay node, so they survive overlay
swaps: ``install`` rebuilds every push state from the windows at an epoch
boundary (plan changes, maintenance).
"""
from __future__ import annotations

import heapq
import threading
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Iterable, Mapping, Optional

from .aggregates import UDA
from .errors import CapabilityError, NodeNotFoundError, OutOfOrderWriteError, StructuralError
from .graph import CountWindow, TimeWindow, Window
from .overlay import INSENSITIVE, PULL, PUSH, OverlayGraph, reader_id, writer_id

WRITE_MODELS = ("queueing", "uni_thread")


@dataclass(frozen=True)
class EngineConfig:
    read_threads: int = 1
    write_threads: int = 1
    write_model: str = "uni_thread"
    window: Window = CountWindow(1)

    def __post_init__(self):
        if self.read_threads < 1 or self.write_threads < 1:
            raise ValueError("thread counts must be >= 1")
        if self.write_model not in WRITE_MODELS:
            raise ValueError(f"write_model must be one of {WRITE_MODELS}")


class _Pending:
    """Counts in-flight micro-tasks so callers can wait for quiescence."""

    def __init__(self):
        self._n = 0
        self._cv = threading.Condition()

    def add(self, k: int = 1) -> None:
        with self._cv:
            self._n += k

    def done(self) -> None:
        with self._cv:
            self._n -= 1
            if self._n == 0:
                self._cv.notify_all()

    def wait(self) -> None:
        with self._cv:
            while self._n:
                self._cv.wait()


class Engine:
    def __init__(
        self,
        o: OverlayGraph,
        uda: UDA,
        config: EngineConfig = EngineConfig(),
        nodes: Optional[Iterable[int]] = None,
        decisions: Optional[Mapping[int, str]] = None,
    ):
        self.uda = uda
        self.config = config
        self.window = config.window
        self.windows: dict[int, deque] = {}
        self._last_ts: dict[int, float] = {}
        self._expiry: list[tuple[float, int]] = []
        self._expiry_lock = threading.Lock()
        self.now = float("-inf")
        if nodes is None:
            nodes = {n // 3 for n in o.nodes if n % 3 != 2}
        for v in nodes:
            self.add_data_node(v)
        self._pool: Optional[ThreadPoolExecutor] = None
        self._pending = _Pending()
        self._errors: list[BaseException] = []
        self.install(o, decisions)

    # -- epochs -----------------------------------------------------------------------
    def add_data_node(self, v: int) -> None:
        if v not in self.windows:
            self.windows[v] = deque()
            self._last_ts[v] = float("-inf")

    def drop_data_node(self, v: int) -> None:
        self.windows.pop(v, None)
        self._last_ts.pop(v, None)

    def install(self, o: Optional[OverlayGraph] = None, decisions: Optional[Mapping[int, str]] = None) -> None:
        """Swap in an overlay and/or plan and rebuild all push states.  Callers
        must make sure no reads or writes are running."""
        self.drain()
        if o is not None:
            self.o = o
        o = self.o
        if o.has_negative_edges() and not self.uda.caps.subtractable:
            raise CapabilityError(f"overlay has negative edges but {self.uda.name} cannot subtract")
        if o.mode == INSENSITIVE and not self.uda.caps.duplicate_insensitive:
            raise CapabilityError(f"duplicate-insensitive overlay used with {self.uda.name}")
        self.decisions = dict(o.decisions if decisions is None else decisions)
        for n in o.nodes:
            if n % 3 == 0:
                self.decisions[n] = PUSH
                self.add_data_node(n // 3)
        for u, v, _ in o.edges():
            if self.decisions[u] == PULL and self.decisions[v] == PUSH:
                raise StructuralError(f"push node {o.name(v)} depends on pull node {o.name(u)}")
        self.locks = {n: threading.Lock() for n in o.nodes}
        self.version = {n: 0 for n in o.nodes}
        self.state: dict[int, Any] = {}
        uda = self.uda
        for n in o.topo_order():
            if self.decisions[n] != PUSH:
                continue
            if n % 3 == 0:
                st = uda.initialize()
                for _, x in self.windows[n // 3]:
                    st = uda.update(st, None, x)
            else:
                st = uda.initialize()
                for u, s in o.inputs[n].items():
                    st = uda.merge_into(st, self.state[u]) if s > 0 else uda.unmerge(st, self.state[u])
            self.state[n] = st
        # push targets per node, resolved once per epoch
        self._push_out = {
            n: tuple((v, s) for v, s in o.outputs[n].items() if self.decisions[v] == PUSH) for n in o.nodes
        }

    # -- writes -------------------------------------------------------------------------
    def write(self, v: int, ts: float, value: Any) -> int:
        """Append ``value`` to v's window and push the resulting deltas.
        Returns the number of values that fell out of the window."""
        if v not in self.windows:
            raise NodeNotFoundError(v)
        if ts < self._last_ts[v]:
            raise OutOfOrderWriteError(f"write on {v} at {ts} precedes {self._last_ts[v]}")
        self._last_ts[v] = ts
        if ts > self.now:
            self.now = ts
        win = self.windows[v]
        win.append((ts, value))
        if isinstance(self.window, CountWindow):
            # an eviction and the new value travel as one replace delta
            dropped = len(win) > self.window.size
            deltas = [(win.popleft()[1] if dropped else None, value)]
        else:
            deltas = [(None, value)]
            with self._expiry_lock:
                heapq.heappush(self._expiry, (ts + self.window.duration, v))
            deltas.extend((x, None) for x in self._drop_stale(v, ts))
            dropped = len(deltas) - 1
        w = writer_id(v)
        if w in self.locks:
            for old, new in deltas:
                self._apply(w, old, new)
        return int(dropped)

    def _drop_stale(self, v: int, now: float) -> list:
        win = self.windows.get(v)
        out = []
        if win is None:
            return out
        cutoff = now - self.window.duration
        while win and win[0][0] <= cutoff:
            out.append(win.popleft()[1])
        return out

    def _apply(self, n: int, old, new) -> None:
        if self.config.write_model == "queueing" and self._pool is not None:
            self._pending.add()
            self._pool.submit(self._task, n, old, new)
            return
        uda = self.uda
        stack = [(n, old, new)]
        while stack:
            m, a, b = stack.pop()
            with self.locks[m]:
                self.state[m] = uda.update(self.state[m], a, b)
                self.version[m] += 1
            for x, s in self._push_out[m]:
                stack.append((x, a, b) if s > 0 else (x, b, a))

    def _task(self, n: int, old, new) -> None:
        try:
            with self.locks[n]:
                self.state[n] = self.uda.update(self.state[n], old, new)
                self.version[n] += 1
            for x, s in self._push_out[n]:
                self._pending.add()
                self._pool.submit(self._task, x, *((old, new) if s > 0 else (new, old)))
        except BaseException as e:  # surfaced by drain()
            self._errors.append(e)
        finally:
            self._pending.done()

    def expire(self, now: float) -> int:
        """Drop values older than the time window and push the deletes."""
        if isinstance(self.window, CountWindow):
            return 0
        if now > self.now:
            self.now = now
        dropped = 0
        while True:
            with self._expiry_lock:
                if not self._expiry or self._expiry[0][0] > now:
                    break
                _, v = heapq.heappop(self._expiry)
            w = writer_id(v)
            for x in self._drop_stale(v, now):
                dropped += 1
                if w in self.locks:
                    self._apply(w, x, None)
        return dropped

    # -- reads ----------------------------------------------------------------------------
    def read(self, r: int, now: Optional[float] = None) -> Any:
        """Finalized aggregate at reader r, computed on the calling thread."""
        n = reader_id(r)
        if n not in self.locks:
            raise NodeNotFoundError(r)
        if now is not None:
            self.expire(now)
        uda = self.uda
        if self.decisions[n] == PUSH:
            with self.locks[n]:
                return uda.finalize(self.state[n])
        return uda.finalize(self._resolve(n))

    def _resolve(self, n: int) -> Any:
        uda = self.uda
        acc = uda.initialize()
        for u, s in self.o.inputs[n].items():
            if self.decisions[u] == PUSH:
                with self.locks[u]:
                    acc = uda.merge_into(acc, self.state[u]) if s > 0 else uda.unmerge(acc, self.state[u])
            else:
                part = self._resolve(u)
                acc = uda.merge_into(acc, part) if s > 0 else uda.unmerge(acc, part)
        return acc

    def snapshot(self, n: int) -> Any:
        """Current state of overlay node n, whatever its decision."""
        if self.decisions[n] == PUSH:
            with self.locks[n]:
                return self.uda.copy(self.state[n])
        return self._resolve(n)

    def window_values(self, v: int) -> list:
        return [x for _, x in self.windows.get(v, ())]

    # -- thread pool for queued writes -------------------------------------------------
    def start(self) -> None:
        if self._pool is None and self.config.write_model == "queueing":
            self._pool = ThreadPoolExecutor(self.config.write_threads, thread_name_prefix="push")

    def drain(self) -> None:
        """Wait until every queued micro-task has run; re-raise the first failure."""
        self._pending.wait()
        if self._errors:
            err = self._errors[0]
            self._errors.clear()
            raise err

    def stop(self) -> None:
        self.drain()
        if self._pool is not None:
            self._pool.shutdown(wait=True)
            self._pool = None

    def __enter__(self):
        self.start()
        return self

    def __exit__(self, *exc):
        self.stop()
