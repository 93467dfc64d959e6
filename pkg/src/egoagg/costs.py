"""Push and pull cost curves for aggregation nodes.

A curve is a monotone piecewise-linear function of the input count, stored as
(k, cost) knots.  Between knots it interpolates; past the last knot it keeps
the slope of the final segment, so a two-knot curve is just a line.
"""
from __future__ import annotations

import bisect
import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .aggregates import UDA


@dataclass(frozen=True)
class Curve:
    knots: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if not self.knots:
            raise ValueError("a cost curve needs at least one knot")
        ks = [k for k, _ in self.knots]
        if ks != sorted(ks) or len(set(ks)) != len(ks):
            raise ValueError("curve knots must have strictly increasing k")
        if any(c < 0 for _, c in self.knots):
            raise ValueError("costs must be non-negative")

    def __call__(self, k: float) -> float:
        kn = self.knots
        if len(kn) == 1:
            return kn[0][1]
        i = bisect.bisect_right([x for x, _ in kn], k)
        if i == 0:
            (k0, c0), (k1, c1) = kn[0], kn[1]
        elif i >= len(kn):
            (k0, c0), (k1, c1) = kn[-2], kn[-1]
        else:
            (k0, c0), (k1, c1) = kn[i - 1], kn[i]
        return max(0.0, c0 + (c1 - c0) * (k - k0) / (k1 - k0))

    def to_json(self) -> list[list[float]]:
        return [[k, c] for k, c in self.knots]

    @classmethod
    def from_json(cls, data) -> "Curve":
        return cls(tuple((float(k), float(c)) for k, c in data))


def constant(c: float = 1.0) -> Curve:
    return Curve(((1.0, c),))


def linear(slope: float = 1.0, intercept: float = 0.0) -> Curve:
    return Curve(((0.0, intercept), (1.0, intercept + slope)))


def logarithmic(scale: float = 1.0, max_k: int = 1 << 20) -> Curve:
    """1 + log2(k), sampled at powers of two."""
    knots = [(0.0, scale)]
    k = 1
    while k <= max_k:
        knots.append((float(k), scale * (1.0 + math.log2(k))))
        k *= 2
    return Curve(tuple(knots))


@dataclass(frozen=True)
class CostModel:
    """H(k): one push into a k-input node.  L(k): one pull of a k-input node.

    Writers are charged as if they had ``window_factor`` inputs, the number
    of values their window holds on average.
    """

    push: Curve = field(default_factory=constant)
    pull: Curve = field(default_factory=linear)
    window_factor: float = 1.0

    def __post_init__(self):
        if self.window_factor <= 0:
            raise ValueError("window_factor must be positive")

    def H(self, k: float) -> float:
        return self.push(k)

    def L(self, k: float) -> float:
        return self.pull(k)

    def with_window(self, window_factor: float) -> "CostModel":
        return CostModel(self.push, self.pull, window_factor)

    def to_json(self) -> dict:
        return {"push": self.push.to_json(), "pull": self.pull.to_json(), "window_factor": self.window_factor}

    @classmethod
    def from_json(cls, data: dict) -> "CostModel":
        return cls(Curve.from_json(data["push"]), Curve.from_json(data["pull"]), float(data.get("window_factor", 1.0)))


def default_cost_model(aggregate: str = "sum", window_factor: float = 1.0) -> CostModel:
    """Textbook curves: constant-time pushes for SUM and COUNT, logarithmic ones for
    heap-like state (MIN, MAX, TOP-K); pulls are linear in the input count."""
    name = aggregate.lower().split(":")[0]
    push = logarithmic() if name in ("min", "max", "topk", "top-k") else constant()
    return CostModel(push, linear(), window_factor)


def _monotone(samples: Sequence[tuple[int, float]]) -> Curve:
    best = 0.0
    knots = []
    for k, c in samples:
        best = max(best, c)
        knots.append((float(k), best))
    return Curve(tuple(knots))


def calibrate(
    uda: UDA,
    sizes: Sequence[int] = tuple(1 << i for i in range(11)),
    repeats: int = 200,
    window_factor: float = 1.0,
    clock=time.perf_counter,
) -> CostModel:
    """Measure H and L for ``uda`` by timing it on synthetic states.

    A push is one replace-update on a state holding k values; a pull merges
    k single-value states and finalizes the result.  Costs are normalised so
    the cheapest pull (k = 1) costs 1, then forced monotone.
    """
    push_samples: list[tuple[int, float]] = []
    pull_samples: list[tuple[int, float]] = []
    for k in sizes:
        state = uda.initialize()
        for i in range(k):
            state = uda.update(state, None, i)
        t0 = clock()
        for i in range(repeats):
            state = uda.update(state, i % k, i % k)
        push_samples.append((k, (clock() - t0) / repeats))

        singles = [uda.update(uda.initialize(), None, i) for i in range(k)]
        reps = max(1, repeats // max(1, k // 8))
        t0 = clock()
        for _ in range(reps):
            acc = uda.initialize()
            for s in singles:
                acc = uda.merge(acc, s)
            uda.finalize(acc)
        pull_samples.append((k, (clock() - t0) / reps))
    unit = pull_samples[0][1] or 1e-9
    return CostModel(
        _monotone([(k, c / unit) for k, c in push_samples]),
        _monotone([(k, c / unit) for k, c in pull_samples]),
        window_factor,
    )
