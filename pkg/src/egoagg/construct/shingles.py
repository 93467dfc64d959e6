"""Min-hash signatures used to put readers with similar input sets next to each other."""
from __future__ import annotations

import random
from typing import Mapping, Sequence, Union

from ..graph import BipartiteGraph

_PRIME = (1 << 61) - 1


def _hash_family(num_hashes: int, seed: int) -> list[tuple[int, int]]:
    rng = random.Random(seed)
    return [(rng.randrange(1, _PRIME), rng.randrange(0, _PRIME)) for _ in range(num_hashes)]


def signature(items, family: Sequence[tuple[int, int]]) -> tuple[int, ...]:
    return tuple(min((a * x + b) % _PRIME for x in items) for a, b in family)


def shingle_order(
    a: Union[BipartiteGraph, Mapping[int, frozenset]],
    num_hashes: int = 2,
    seed: int = 0,
) -> list[int]:
    """Readers sorted by their min-hash vectors; ties by id, empty readers last."""
    if num_hashes < 1:
        raise ValueError("num_hashes must be >= 1")
    inputs = a.inputs if isinstance(a, BipartiteGraph) else a
    family = _hash_family(num_hashes, seed)
    keyed = []
    tail = []
    for r, ws in inputs.items():
        if ws:
            keyed.append((signature(ws, family), r))
        else:
            tail.append(r)
    keyed.sort()
    return [r for _, r in keyed] + sorted(tail)
