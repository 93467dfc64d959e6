"""Edmonds-Karp max-flow: Ford-Fulkerson with shortest augmenting paths."""
from __future__ import annotations

from collections import deque
from typing import Hashable, Iterable

EPS = 1e-9


class FlowNetwork:
    def __init__(self):
        self.cap: dict[Hashable, dict[Hashable, float]] = {}

    def add_node(self, v: Hashable) -> None:
        self.cap.setdefault(v, {})

    def add_edge(self, u: Hashable, v: Hashable, capacity: float) -> None:
        if capacity < 0:
            raise ValueError("capacities must be non-negative")
        self.add_node(u)
        self.add_node(v)
        self.cap[u][v] = self.cap[u].get(v, 0.0) + capacity
        # reverse residual slot
        self.cap[v].setdefault(u, 0.0)

    def max_flow(self, s: Hashable, t: Hashable) -> float:
        """Saturate the network in place; capacities become residual capacities."""
        self.add_node(s)
        self.add_node(t)
        cap = self.cap
        total = 0.0
        while True:
            parent = {s: None}
            q = deque([s])
            while q and t not in parent:
                u = q.popleft()
                for v, c in cap[u].items():
                    if c > EPS and v not in parent:
                        parent[v] = u
                        q.append(v)
            if t not in parent:
                return total
            push = float("inf")
            v = t
            while parent[v] is not None:
                u = parent[v]
                push = min(push, cap[u][v])
                v = u
            v = t
            while parent[v] is not None:
                u = parent[v]
                cap[u][v] -= push
                cap[v][u] += push
                v = u
            total += push

    def reachable(self, s: Hashable) -> set:
        """Nodes reachable from ``s`` through edges with residual capacity."""
        seen = {s}
        q = deque([s])
        while q:
            u = q.popleft()
            for v, c in self.cap.get(u, {}).items():
                if c > EPS and v not in seen:
                    seen.add(v)
                    q.append(v)
        return seen


def min_cut(edges: Iterable[tuple[Hashable, Hashable, float]], s: Hashable, t: Hashable) -> tuple[float, set]:
    """Max-flow value and the source side of the minimal minimum cut."""
    net = FlowNetwork()
    for u, v, c in edges:
        net.add_edge(u, v, c)
    value = net.max_flow(s, t)
    return value, net.reachable(s)
