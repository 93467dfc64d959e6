"""Command-line client.

Each subcommand turns its flags and files into one service request.  With
``--url`` the request goes to a running server; otherwise the service runs
in-process.
"""
from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path
from typing import Optional

import httpx

from .aggregates import get_aggregate
from .errors import CapabilityError
from .graph import parse_window
from .pipeline import ALGORITHMS, check_combination

PLAN_CHOICES = ("optimal", "greedy", "all-push", "all-pull")
REPORT_CHOICES = ("json", "csv", "text")


class ServiceError(Exception):
    def __init__(self, status: int, detail: str, kind: str = ""):
        super().__init__(detail)
        self.status = status
        self.kind = kind


def _client(url: Optional[str]):
    if url:
        return httpx.Client(base_url=url, timeout=None)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # starlette nags about its httpx backend
        from fastapi.testclient import TestClient

    from .service import app

    return TestClient(app)


def _call(args, path: str, body: dict) -> dict:
    with _client(args.url) as client:
        resp = client.post(path, json=body)
    if resp.status_code >= 400:
        try:
            data = resp.json()
        except ValueError:
            data = {"detail": resp.text}
        detail = data.get("detail")
        if not isinstance(detail, str):
            detail = json.dumps(detail)
        raise ServiceError(resp.status_code, detail, data.get("kind", ""))
    return resp.json()


def _read(path: str) -> str:
    return sys.stdin.read() if path == "-" else Path(path).read_text()


def _write(path: Optional[str], text: str) -> None:
    if path and path != "-":
        Path(path).write_text(text)
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _graph(args) -> dict:
    return {"edges": _read(args.graph), "directed": not args.undirected}


def _query(args) -> dict:
    return {"aggregate": args.agg, "window": args.window, "hops": args.hops, "direction": args.direction}


def _emit_report(args, data: dict) -> None:
    if args.report == "json":
        _write(args.output, json.dumps(data, indent=2, sort_keys=True))
        return
    from .bench import KindCounts, MetricsReport, reports_to_csv

    data.pop("final_reads", None)
    counts = {k: KindCounts(**v) for k, v in data.pop("counts").items()}
    report = MetricsReport(counts=counts, **data)
    _write(args.output, reports_to_csv([report]) if args.report == "csv" else report.text())


# -- subcommands ---------------------------------------------------------------------


def cmd_build(args) -> int:
    data = _call(args, "/build", {"graph": _graph(args), "query": _query(args), "algo": args.algo, "seed": args.seed})
    _write(args.output, data["overlay"])
    s = data["stats"]
    print(f"{args.algo}: {s['nodes']} nodes, {s['edges']} edges ({s['bipartite_edges']} direct), "
          f"sharing index {s['sharing_index']:.3f}, mean depth {s['depth_mean']:.2f}", file=sys.stderr)
    return 0


def _activity(args) -> dict:
    body = {"ratio": args.ratio, "skew": args.skew, "seed": args.seed, "degree_correlated": args.degree_correlated}
    if getattr(args, "trace", None):
        body["trace"] = _read(args.trace)
    return body


def cmd_decide(args) -> int:
    body = {
        "graph": _graph(args),
        "overlay": _read(args.overlay),
        "query": _query(args),
        "activity": _activity(args),
        "plan": args.plan,
        "split": args.split,
    }
    if args.cost_model:
        body["cost_model"] = json.loads(_read(args.cost_model))
    data = _call(args, "/decide", body)
    _write(args.output, data["overlay"])
    st = data["stats"]
    print(f"{data['method']}: cost {data['cost']:.4f}, {data['push_nodes']} push / {data['pull_nodes']} pull "
          f"aggregation nodes, {data['splits']} splits, residual {st['residual_nodes']} nodes", file=sys.stderr)
    return 0


def cmd_run(args) -> int:
    body = {
        "graph": _graph(args),
        "trace": _read(args.trace),
        "query": _query(args),
        "algo": args.algo,
        "plan": args.plan,
        "threads": args.threads,
        "isolated": args.isolated,
        "seed": args.seed,
    }
    if args.overlay:
        body["overlay"] = _read(args.overlay)
    _emit_report(args, _call(args, "/run", body))
    return 0


def cmd_compare(args) -> int:
    body = {
        "graph": _graph(args),
        "query": _query(args),
        "algos": args.algos,
        "plans": args.plans,
        "ratios": args.ratios,
        "skew": args.skew,
        "count": args.count,
        "threads": args.threads,
        "seed": args.seed,
    }
    data = _call(args, "/compare", body)
    if args.report == "json":
        _write(args.output, json.dumps(data["rows"], indent=2))
    elif args.report == "csv":
        _write(args.output, data["csv"])
    else:
        rows = data["rows"]
        cols = ("algorithm", "plan_method", "ratio", "throughput", "plan_cost", "sharing_index")
        lines = ["  ".join(f"{c:>14}" for c in cols)]
        lines += ["  ".join(f"{r[c]:>14}" for c in cols) for r in rows]
        _write(args.output, "\n".join(lines))
    return 0


def cmd_validate(args) -> int:
    data = _call(args, "/validate", {"graph": _graph(args), "overlay": _read(args.overlay), "query": _query(args)})
    if data["valid"]:
        print("overlay is valid")
        return 0
    for v in data["violations"]:
        print(v)
    for n in data["orphans"]:
        print(f"orphan: {n}")
    return 1


def cmd_gen(args) -> int:
    body = {
        "kind": args.kind,
        "nodes": args.nodes,
        "degree": args.degree,
        "ratio": args.ratio,
        "ratio_after": args.ratio_after,
        "skew": args.skew,
        "count": args.count,
        "seed": args.seed,
        "degree_correlated": args.degree_correlated,
        "value_domain": args.value_domain,
    }
    if args.kind != "graph":
        if not args.graph:
            raise SystemExit(f"gen --kind {args.kind} needs --graph")
        body["graph"] = _graph(args)
    if args.kind == "http":
        if not args.log:
            raise SystemExit("gen --kind http needs --log")
        body["log"] = _read(args.log)
    data = _call(args, "/gen", body)
    _write(args.output, data["text"])
    note = f"{data['events']} events"
    if args.kind == "http":
        note += f" from {data['clients']} clients, {data['skipped']} malformed lines skipped"
    print(note, file=sys.stderr)
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    uvicorn.run("egoagg.service:app", host=args.host, port=args.port, log_level="info")
    return 0


# -- parser --------------------------------------------------------------------------------


def _window(text: str) -> str:
    try:
        parse_window(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    return text


def _aggregate(text: str) -> str:
    try:
        get_aggregate(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    return text


def _positive(kind):
    def parse(text: str):
        v = kind(text)
        if v <= 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return v

    return parse


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="egoagg", description="Compile and run ego-centric aggregate queries.")
    p.add_argument("--url", help="service base URL; runs in-process when omitted")
    sub = p.add_subparsers(dest="command", required=True)

    def query_flags(sp, graph_required: bool = True):
        if graph_required:
            sp.add_argument("graph", help="edge-list file ('-' for stdin)")
        else:
            sp.add_argument("--graph", help="edge-list file")
        sp.add_argument("--undirected", action="store_true", help="treat every edge line as symmetric")
        sp.add_argument("--agg", type=_aggregate, default="sum", help="sum, count, min, max or topk:K")
        sp.add_argument("--window", type=_window, default="count:1", help="count:N or time:T")
        sp.add_argument("--hops", type=_positive(int), default=1)
        sp.add_argument("--direction", choices=("in", "out", "both"), default="in")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("-o", "--output", help="output file (stdout by default)")

    def workload_flags(sp):
        sp.add_argument("--ratio", type=_positive(float), default=1.0, help="write/read ratio")
        sp.add_argument("--skew", type=_positive(float), default=1.0, help="Zipf skew")
        sp.add_argument("--degree-correlated", action="store_true", help="make high-degree nodes the hot ones")

    sp = sub.add_parser("build", help="build an overlay for a query")
    query_flags(sp)
    sp.add_argument("--algo", choices=ALGORITHMS, default="iob")
    sp.set_defaults(func=cmd_build)

    sp = sub.add_parser("decide", help="choose push/pull decisions for an overlay")
    query_flags(sp)
    sp.add_argument("overlay", help="overlay file")
    workload_flags(sp)
    sp.add_argument("--trace", help="count activity rates from this trace instead of drawing them")
    sp.add_argument("--plan", choices=PLAN_CHOICES, default="optimal")
    sp.add_argument("--split", action="store_true", help="also splice in pre-aggregating child nodes")
    sp.add_argument("--cost-model", help="cost model JSON file")
    sp.set_defaults(func=cmd_decide)

    sp = sub.add_parser("run", help="replay a trace and report metrics")
    query_flags(sp)
    sp.add_argument("trace", help="trace CSV file")
    sp.add_argument("--overlay", help="planned overlay file; otherwise built from --algo and --plan")
    sp.add_argument("--algo", choices=ALGORITHMS, default="iob")
    sp.add_argument("--plan", choices=PLAN_CHOICES, default="optimal")
    sp.add_argument("--threads", type=_positive(int), default=1)
    sp.add_argument("--isolated", action="store_true", help="time every event on its own")
    sp.add_argument("--report", choices=REPORT_CHOICES, default="text")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("compare", help="throughput over algorithms x plans x ratios")
    query_flags(sp)
    sp.add_argument("--algos", nargs="+", choices=ALGORITHMS, default=["trivial", "vnma", "iob"])
    sp.add_argument("--plans", nargs="+", choices=PLAN_CHOICES, default=list(PLAN_CHOICES))
    sp.add_argument("--ratios", nargs="+", type=_positive(float), default=[0.05, 0.2, 1.0, 5.0, 20.0])
    sp.add_argument("--skew", type=_positive(float), default=1.0)
    sp.add_argument("--count", type=_positive(int), default=10000)
    sp.add_argument("--threads", type=_positive(int), default=1)
    sp.add_argument("--report", choices=REPORT_CHOICES, default="csv")
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("validate", help="check an overlay against the graph and query")
    query_flags(sp)
    sp.add_argument("overlay", help="overlay file")
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("gen", help="generate graphs and traces")
    query_flags(sp, graph_required=False)
    workload_flags(sp)
    sp.add_argument("--kind", choices=("zipf", "shift", "structure", "http", "graph"), default="zipf")
    sp.add_argument("--count", type=int, default=10000)
    sp.add_argument("--ratio-after", type=_positive(float), default=0.05, help="ratio after the shift")
    sp.add_argument("--nodes", type=int, default=1000, help="graph size for --kind graph")
    sp.add_argument("--degree", type=int, default=5, help="out-links per node for --kind graph")
    sp.add_argument("--value-domain", type=_positive(int), default=16)
    sp.add_argument("--log", help="web server log for --kind http")
    sp.set_defaults(func=cmd_gen)

    sp = sub.add_parser("serve", help="run the HTTP service")
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--port", type=int, default=8000)
    sp.set_defaults(func=cmd_serve)
    return p


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    algos = [args.algo] if hasattr(args, "algo") else getattr(args, "algos", [])
    if hasattr(args, "agg") and args.command in ("build", "run", "compare"):
        uda = get_aggregate(args.agg)
        for algo in algos:
            try:
                check_combination(algo, uda)
            except CapabilityError as exc:
                parser.error(f"--algo {algo} with --agg {args.agg}: {exc}")
    try:
        return args.func(args)
    except ServiceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2 if exc.kind == "capability" else 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
