"""Aggregate interface and the built-in aggregates.

A UDA works on plain state values.  ``update`` may mutate the state it is
given and returns the result; ``merge`` and ``unmerge`` never touch their
arguments.  ``None`` stands for "no contribution" in ``update`` so that one
call covers insert, delete and replace.
"""
from __future__ import annotations

from abc import ABC, abstractmethod
from collections import Counter
from dataclasses import dataclass
from typing import Any, Callable, Optional

from .errors import CapabilityError


@dataclass(frozen=True)
class Capabilities:
    duplicate_insensitive: bool = False
    subtractable: bool = False


class _Empty:
    _inst = None

    def __new__(cls):
        if cls._inst is None:
            cls._inst = super().__new__(cls)
        return cls._inst

    def __repr__(self):
        return "EMPTY"

    def __bool__(self):
        return False


# Finalized value of an aggregate with nothing in it, for aggregates that have
# no natural identity (MIN, MAX, TOP-K).
EMPTY = _Empty()


class UDA(ABC):
    name: str = "uda"
    caps: Capabilities = Capabilities()

    @abstractmethod
    def initialize(self) -> Any: ...

    @abstractmethod
    def update(self, state: Any, old: Optional[Any], new: Optional[Any]) -> Any: ...

    @abstractmethod
    def merge(self, a: Any, b: Any) -> Any: ...

    def unmerge(self, a: Any, b: Any) -> Any:
        raise CapabilityError(f"aggregate {self.name!r} cannot subtract partial aggregates")

    @abstractmethod
    def finalize(self, state: Any) -> Any: ...

    def merge_into(self, acc: Any, b: Any) -> Any:
        """Merge b into acc, reusing acc's storage when the state is mutable."""
        return self.merge(acc, b)

    def copy(self, state: Any) -> Any:
        return state

    def __repr__(self):
        return f"<{type(self).__name__} {self.name}>"


class Sum(UDA):
    name = "sum"
    caps = Capabilities(duplicate_insensitive=False, subtractable=True)

    def initialize(self):
        return 0

    def update(self, state, old, new):
        if old is not None:
            state -= old
        if new is not None:
            state += new
        return state

    def merge(self, a, b):
        return a + b

    def unmerge(self, a, b):
        return a - b

    def finalize(self, state):
        return state


class Count(UDA):
    name = "count"
    caps = Capabilities(duplicate_insensitive=False, subtractable=True)

    def initialize(self):
        return 0

    def update(self, state, old, new):
        return state + (new is not None) - (old is not None)

    def merge(self, a, b):
        return a + b

    def unmerge(self, a, b):
        return a - b

    def finalize(self, state):
        return state


def _bump(state: Counter, v, d: int) -> None:
    c = state.get(v, 0) + d
    if c:
        state[v] = c
    else:
        state.pop(v, None)


class _MultisetAggregate(UDA):
    """State is a Counter of live values so deletes stay exact."""

    def initialize(self):
        return Counter()

    def update(self, state, old, new):
        # counts may dip below zero while out-of-order deltas are in flight
        if old is not None:
            _bump(state, old, -1)
        if new is not None:
            _bump(state, new, 1)
        return state

    def merge(self, a, b):
        return self.merge_into(Counter(a), b)

    def merge_into(self, acc, b):
        for v, c in b.items():
            _bump(acc, v, c)
        return acc

    def copy(self, state):
        return Counter(state)


class Min(_MultisetAggregate):
    name = "min"
    caps = Capabilities(duplicate_insensitive=True, subtractable=False)

    def finalize(self, state):
        return min(state) if state else EMPTY


class Max(_MultisetAggregate):
    name = "max"
    caps = Capabilities(duplicate_insensitive=True, subtractable=False)

    def finalize(self, state):
        return max(state) if state else EMPTY


class TopK(_MultisetAggregate):
    """The k most frequent values, as ``[(value, count), ...]``.

    Equal counts are ordered by value so results are reproducible.
    """

    caps = Capabilities(duplicate_insensitive=False, subtractable=False)

    def __init__(self, k: int = 3):
        if k < 1:
            raise ValueError("top-k needs k >= 1")
        self.k = k
        self.name = f"topk:{k}"

    def finalize(self, state):
        if not state:
            return EMPTY
        ranked = sorted(state.items(), key=lambda kv: (-kv[1], kv[0]))
        return [(v, c) for v, c in ranked[: self.k]]


_REGISTRY: dict[str, Callable[..., UDA]] = {
    "sum": Sum,
    "count": Count,
    "min": Min,
    "max": Max,
    "topk": TopK,
}


def register_aggregate(name: str, factory: Callable[..., UDA]) -> None:
    _REGISTRY[name.lower()] = factory


def builtin_aggregates() -> dict[str, UDA]:
    return {"SUM": Sum(), "COUNT": Count(), "MIN": Min(), "MAX": Max(), "TOP-K": TopK()}


def get_aggregate(spec: str) -> UDA:
    """Resolve ``sum``, ``max``, ``topk:5`` and so on to an aggregate instance."""
    name, _, arg = spec.lower().partition(":")
    name = name.replace("-", "")
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise ValueError(f"unknown aggregate {spec!r}; known: {sorted(_REGISTRY)}") from None
    return factory(int(arg)) if arg else factory()


def direct_aggregate(uda: UDA, values) -> Any:
    """Fold raw values straight through the aggregate; the reference answer for reads."""
    state = uda.initialize()
    for v in values:
        state = uda.update(state, None, v)
    return uda.finalize(state)
