"""Small hand-built instances used by tests, docs and the CLI smoke paths.

``example_*`` is the seven-node social graph where every node aggregates its
in-neighbours.  The reader lists below are the ground truth for that example.
Reader c lists c itself; the data-graph edge file leaves that pair out
because self-loops are rejected, so the file-derived graph differs from the
hand-written lists in exactly one pair.
"""
from __future__ import annotations

from dataclasses import dataclass

from .graph import BipartiteGraph, DataGraph, load_graph
from .overlay import PULL, OverlayGraph, reader_id, writer_id

EXAMPLE_READER_LISTS: dict[str, tuple[str, ...]] = {
    "a": ("c", "d", "e", "f"),
    "b": ("a", "c", "e", "f"),
    "c": ("a", "b", "c", "d", "e", "f"),
    "d": ("a", "b", "c", "e"),
    "e": ("a", "b", "c", "d"),
    "f": ("a", "b", "c", "d", "e"),
    "g": ("a", "b", "c", "d", "e", "f"),
}

# two writes on a, then one each elsewhere; with a count window of 1 only the 4 survives
EXAMPLE_WRITES: list[tuple[float, str, int]] = [
    (1.0, "a", 1),
    (2.0, "a", 4),
    (3.0, "c", 9),
    (4.0, "d", 3),
    (5.0, "e", 1),
    (6.0, "f", 6),
    (7.0, "b", 2),
]


def example_edge_list() -> str:
    lines = sorted(
        (w, r) for r, ws in EXAMPLE_READER_LISTS.items() for w in ws if w != r
    )
    return "".join(f"{w}\t{r}\n" for w, r in lines)


def example_graph() -> DataGraph:
    return load_graph(example_edge_list())


def example_bipartite() -> BipartiteGraph:
    return BipartiteGraph.from_lists(EXAMPLE_READER_LISTS)


def example_overlay() -> OverlayGraph:
    """Two shared partials: {a,b,c} feeds c..g and {d,e} feeds c, f and g.  Reader g pulls."""
    a = example_bipartite()
    ids = {lab: i for i, lab in enumerate(a.labels)}
    o = OverlayGraph(labels=a.labels)
    for w in sorted(a.writers):
        o.add_writer(w)
    pa1 = o.add_partial()
    pa2 = o.add_partial()
    for w in "abc":
        o.add_edge(writer_id(ids[w]), pa1)
    for w in "de":
        o.add_edge(writer_id(ids[w]), pa2)
    for r in sorted(a.readers):
        rid = o.add_reader(r)
        left = set(a.inputs[r])
        abc = {ids[x] for x in "abc"}
        de = {ids[x] for x in "de"}
        if abc <= left:
            o.add_edge(pa1, rid)
            left -= abc
        if a.labels[r] in "cfg":
            o.add_edge(pa2, rid)
            left -= de
        for w in sorted(left):
            o.add_edge(writer_id(w), rid)
    o.decisions[reader_id(ids["g"])] = PULL
    return o


@dataclass
class Activity:
    """Per data node write and read rates, the shape ``annotate_frequencies`` reads."""

    write_rate: dict[int, float]
    read_rate: dict[int, float]


@dataclass
class Instance:
    overlay: OverlayGraph
    activity: Activity
    names: dict[str, int]  # readable name -> overlay node id


def conflict_instance() -> Instance:
    """Frequency-propagation example with a push/pull conflict between i3 and s.

    Partial i1 sums a and b; i3 adds c on top.  Reader s also takes 59 cold
    writers x1..x59, the last of which is shared with reader q.  Under
    H(k) = 1 and L(k) = k this gives PUSH(i3) = 10, PULL(i3) = 6,
    PUSH(s) = 70, PULL(s) = 120, PUSH(a) = 3 and PULL(a) = 10.
    """
    labels = ["a", "b", "c", "m", "n", "s", "p", "q"] + [f"x{i}" for i in range(1, 60)]
    ids = {lab: i for i, lab in enumerate(labels)}
    o = OverlayGraph(labels=labels)
    wr = {ids["a"]: 3.0, ids["b"]: 2.0, ids["c"]: 5.0}
    wr.update({ids[f"x{i}"]: 1.0 for i in range(1, 59)})
    wr[ids["x59"]] = 2.0
    rr = {ids["m"]: 3.0, ids["n"]: 4.0, ids["s"]: 2.0, ids["p"]: 1.0, ids["q"]: 1.0}
    for w in wr:
        o.add_writer(w)
    i1 = o.add_partial()
    i3 = o.add_partial()
    o.add_edge(writer_id(ids["a"]), i1)
    o.add_edge(writer_id(ids["b"]), i1)
    o.add_edge(i1, i3)
    o.add_edge(writer_id(ids["c"]), i3)
    for r in rr:
        o.add_reader(r)
    o.add_edge(i1, reader_id(ids["m"]))
    o.add_edge(i1, reader_id(ids["n"]))
    o.add_edge(i3, reader_id(ids["s"]))
    o.add_edge(i3, reader_id(ids["p"]))
    for i in range(1, 60):
        o.add_edge(writer_id(ids[f"x{i}"]), reader_id(ids["s"]))
    o.add_edge(writer_id(ids["x59"]), reader_id(ids["q"]))
    names = {"i1": i1, "i3": i3}
    names.update({f"{lab}_w": writer_id(ids[lab]) for lab in ("a", "b", "c", "x59")})
    names.update({f"{lab}_r": reader_id(ids[lab]) for lab in ("m", "n", "s", "p", "q")})
    # every data node gets an entry so activity lookups never miss
    full_w = {i: wr.get(i, 0.0) for i in range(len(labels))}
    full_r = {i: rr.get(i, 0.0) for i in range(len(labels))}
    return Instance(o, Activity(full_w, full_r), names)


def split_instance(hot_write: float = 100.0, read_rate: float = 30.0) -> Instance:
    """One reader over four cold writers and one hot writer.

    Pushing pays for every hot write and pulling pays for five inputs; a child
    aggregate over the cold four lets the reader pull just two inputs.
    """
    labels = ["a", "b", "c", "d", "e", "r"]
    ids = {lab: i for i, lab in enumerate(labels)}
    o = OverlayGraph(labels=labels)
    rid = o.add_reader(ids["r"])
    for lab in "abcde":
        o.add_writer(ids[lab])
        o.add_edge(writer_id(ids[lab]), rid)
    wr = {ids[x]: 1.0 for x in "abcd"}
    wr[ids["e"]] = hot_write
    wr[ids["r"]] = 0.0
    rr = {i: 0.0 for i in range(len(labels))}
    rr[ids["r"]] = read_rate
    return Instance(o, Activity(wr, rr), {"r": rid})
