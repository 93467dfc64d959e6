"""Prefix tree over sorted input lists, and the biclique miner that scans it.

Items are overlay node ids (writers or partial aggregators) and transactions
are aggregation nodes, so the same tree serves every construction round.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Mapping, Optional, Sequence

from ..graph import BipartiteGraph

BASIC, NEGATIVE, DUPLICATE = "basic", "negative", "duplicate"


def biclique_benefit(length: int, support: int, negatives: int = 0, reused: int = 0) -> int:
    """Edges saved by replacing a (length x support) biclique with one partial node.

    Each negative edge costs twice: the positive edge it stands in for is not
    removed, and the negative edge itself is added.  Reused edges were already
    removed by an earlier biclique, so they save nothing.
    """
    return length * support - length - support - 2 * negatives - reused


def sort_writers(a: BipartiteGraph) -> list[int]:
    deg = a.out_degree()
    return sorted(deg, key=lambda w: (deg[w], w))


def item_order(transactions: Mapping[int, Iterable[int]], descending: bool = False) -> list[int]:
    """Items ordered by how many transactions contain them, ties by id."""
    freq: dict[int, int] = {}
    for items in transactions.values():
        for x in items:
            freq[x] = freq.get(x, 0) + 1
    if descending:
        return sorted(freq, key=lambda x: (-freq[x], x))
    return sorted(freq, key=lambda x: (freq[x], x))


class FPNode:
    __slots__ = ("item", "parent", "depth", "children", "support", "neg", "mined", "negsum", "minedsum", "seq")

    def __init__(self, item, parent, depth, seq):
        self.item = item
        self.parent = parent
        self.depth = depth
        self.children: dict[int, FPNode] = {}
        self.support: set[int] = set()
        self.neg: set[int] = set()
        self.mined: set[int] = set()
        self.negsum = 0
        self.minedsum = 0
        self.seq = seq

    def path(self) -> list["FPNode"]:
        out = []
        n = self
        while n.item is not None:
            out.append(n)
            n = n.parent
        out.reverse()
        return out

    def __repr__(self):
        return f"FPNode({self.item}, S={sorted(self.support)})"


@dataclass
class Biclique:
    writers: tuple[int, ...]
    readers: tuple[int, ...]
    negatives: tuple[tuple[int, int], ...] = ()
    reused: int = 0
    benefit: int = field(default=0)

    def __post_init__(self):
        expect = biclique_benefit(len(self.writers), len(self.readers), len(self.negatives), self.reused)
        if self.benefit == 0:
            self.benefit = expect
        elif self.benefit != expect:
            raise ValueError(f"benefit {self.benefit} disagrees with formula value {expect}")


class FPTree:
    def __init__(self, order: Sequence[int], mode: str = BASIC, k1: int = 1, k2: int = 5,
                 explore_limit: int = 4000):
        if mode not in (BASIC, NEGATIVE, DUPLICATE):
            raise ValueError(f"unknown tree mode {mode!r}")
        self.rank = {x: i for i, x in enumerate(order)}
        self.mode = mode
        self.k1 = k1
        self.k2 = k2
        self.explore_limit = explore_limit
        self._seq = 0
        self.root = FPNode(None, None, 0, self._next())
        self.paths: dict[int, list[FPNode]] = {}

    def _next(self) -> int:
        self._seq += 1
        return self._seq

    def sort_items(self, items: Iterable[int]) -> list[int]:
        rank = self.rank
        big = len(rank)
        return sorted(items, key=lambda x: (rank.get(x, big), x))

    # -- construction ------------------------------------------------------------
    def insert(self, r: int, items: Iterable[int], mined: Iterable[int] = (),
               forbid_negative: Iterable[int] = (), extra: bool = True) -> None:
        items = self.sort_items(items)
        mined = set(mined) if self.mode == DUPLICATE else set()
        node = self.root
        running_mined = 0
        for x in items:
            child = node.children.get(x)
            if child is None:
                child = FPNode(x, node, node.depth + 1, self._next())
                node.children[x] = child
            child.support.add(r)
            if x in mined:
                child.mined.add(r)
                running_mined += 1
                child.minedsum += running_mined
            elif running_mined:
                child.minedsum += running_mined
            node = child
        ends = [node] if items else []
        if extra and self.mode == NEGATIVE and self.k1 > 1 and items:
            for end, negs in self._extra_paths(r, set(items), set(forbid_negative)):
                self._add_along(r, end, negs)
                ends.append(end)
        self.paths[r] = ends

    def _add_along(self, r: int, end: FPNode, negs: set[int]) -> None:
        running = 0
        for n in end.path():
            n.support.add(r)
            if n.item in negs:
                n.neg.add(r)
                running += 1
            n.negsum += running

    def _extra_paths(self, r: int, have: set[int], forbid: set[int]):
        """Best existing root paths that r could join using at most k2 negative edges."""
        cands = []
        queue = deque((c, 0) for c in self.root.children.values())
        seen = 0
        while queue and seen < self.explore_limit:
            node, negs = queue.popleft()
            seen += 1
            if node.item not in have:
                if node.item in forbid:
                    continue
                negs += 1
                if negs > self.k2:
                    continue
            if r not in node.support and node.support:
                gain = node.depth - 1 - 2 * negs
                if gain > 0:
                    s = len(node.support) + 1
                    total = biclique_benefit(node.depth, s, 0) - 2 * (node.negsum + negs)
                    cands.append((-total, -node.depth, node.seq, node, negs))
            for child in node.children.values():
                queue.append((child, negs))
        cands.sort(key=lambda c: c[:3])
        chosen: list[tuple[FPNode, set[int]]] = []
        lineage: set[int] = set()
        for _, _, _, node, _ in cands:
            if len(chosen) >= self.k1 - 1:
                break
            path = node.path()
            if node.seq in lineage or any(p.seq in lineage for p in path):
                continue
            chosen.append((node, {p.item for p in path if p.item not in have}))
            lineage.update(p.seq for p in path)
        return chosen

    # -- inspection -----------------------------------------------------------------
    def iter_nodes(self) -> Iterator[FPNode]:
        stack = [self.root]
        while stack:
            n = stack.pop()
            if n.item is not None:
                yield n
            kids = sorted(n.children.values(), key=lambda c: (self.rank.get(c.item, 0), c.item), reverse=True)
            stack.extend(kids)

    def __len__(self):
        return sum(1 for _ in self.iter_nodes())

    def reader_paths(self, r: int) -> list[tuple[set[int], set[int]]]:
        """Per insertion path of r: (positive items, negative items)."""
        out = []
        for end in self.paths.get(r, []):
            pos, neg = set(), set()
            for n in end.path():
                (neg if r in n.neg else pos).add(n.item)
            out.append((pos, neg))
        return out

    def node_benefit(self, n: FPNode) -> int:
        return biclique_benefit(n.depth, len(n.support)) - 2 * n.negsum - n.minedsum


def build_fptree(
    readers: Sequence[tuple[int, Iterable[int]]],
    order: Sequence[int],
    mode: str = BASIC,
    k1: int = 2,
    k2: int = 5,
    mined: Optional[Mapping[int, Iterable[int]]] = None,
    forbid_negative: Optional[Mapping[int, Iterable[int]]] = None,
    extra_ok: Optional[Callable[[int], bool]] = None,
) -> FPTree:
    t = FPTree(order, mode, k1=k1, k2=k2)
    mined = mined or {}
    forbid_negative = forbid_negative or {}
    for r, items in readers:
        t.insert(r, items, mined.get(r, ()), forbid_negative.get(r, ()),
                 extra=extra_ok is None or extra_ok(r))
    return t


def mine_best(t: FPTree, min_benefit: int = 1) -> Optional[Biclique]:
    best = None
    best_key = None
    for n in t.iter_nodes():
        if n.depth < 2 or len(n.support) < 2:
            continue
        b = t.node_benefit(n)
        key = (b, n.depth, -n.seq)
        if best_key is None or key > best_key:
            best, best_key = n, key
    if best is None or best_key[0] < min_benefit:
        return None
    path = best.path()
    readers = tuple(sorted(best.support))
    negatives = []
    reused = 0
    for p in path:
        for r in readers:
            if r in p.neg:
                negatives.append((r, p.item))
            if r in p.mined:
                reused += 1
    return Biclique(tuple(p.item for p in path), readers, tuple(negatives), reused, best_key[0])
