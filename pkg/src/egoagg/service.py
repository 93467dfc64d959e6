"""HTTP front end.  Every endpoint is stateless: inputs arrive as text bodies."""
from __future__ import annotations

from fastapi import FastAPI, HTTPException
from fastapi.responses import JSONResponse

from . import __version__
from .aggregates import get_aggregate
from .bench import reports_to_csv, run_benchmark
from .construct.vnm import ConstructionParams
from .costs import CostModel, default_cost_model
from .dataflow import DataflowPlan, annotate_frequencies, apply_plan, decide, plan_cost, split_nodes
from .errors import CapabilityError, EgoAggError
from .graph import DataGraph, QuerySpec, derive_bipartite, dump_graph, load_graph, parse_window
from .overlay import depth_profile, dump_overlay, load_overlay, orphans, sharing_index, validate
from .pipeline import Compiled, build_overlay, check_combination, compile_query, window_factor
from .schemas import (
    ActivityBody,
    BuildRequest,
    BuildResponse,
    CompareRequest,
    CompareResponse,
    DecideRequest,
    DecideResponse,
    GenRequest,
    GenResponse,
    GraphBody,
    OverlayStats,
    PlanStatsBody,
    QueryBody,
    RunRequest,
    ValidateRequest,
    ValidateResponse,
)
from .workload import (
    activity_from_events,
    copying_graph,
    gen_structure_updates,
    gen_zipf,
    http_workload,
    parse_http_trace,
    read_trace,
    shift_workload,
    write_trace,
    zipf_activity,
)


def _graph(body: GraphBody) -> DataGraph:
    return load_graph(body.edges, directed=body.directed)


def _query(body: QueryBody) -> QuerySpec:
    return QuerySpec(body.aggregate, parse_window(body.window), body.hops, body.direction)


def _compiled(g: DataGraph, q: QuerySpec, overlay_text: str) -> Compiled:
    uda = get_aggregate(q.aggregate)
    o = load_overlay(overlay_text, labels=g.ids, label_list=g.labels)
    a = derive_bipartite(g, q)
    return Compiled(g, q, uda, a, o, None, default_cost_model(q.aggregate, window_factor(q)))


def _live(g: DataGraph) -> dict[str, int]:
    return {g.labels[v]: v for v in sorted(g.alive)}


def _activity(body: ActivityBody, g: DataGraph):
    live = _live(g)
    if body.trace is not None:
        return activity_from_events(read_trace(body.trace), live)
    by_degree = None
    if body.degree_correlated:
        by_degree = {lab: len(g.in_adj[v]) + len(g.out_adj[v]) for lab, v in live.items()}
    return zipf_activity(list(live), body.skew, body.ratio, seed=body.seed, by_degree=by_degree, ids=live)


def _stats(c: Compiled) -> OverlayStats:
    return OverlayStats(
        nodes=len(c.o),
        edges=c.o.num_edges,
        partials=len(c.o.partials()),
        bipartite_edges=c.a.num_edges,
        sharing_index=sharing_index(c.o, c.a) if c.a.num_edges else 0.0,
        depth_mean=depth_profile(c.o)[1],
    )


def create_app() -> FastAPI:
    app = FastAPI(title="egoagg", version=__version__)

    @app.exception_handler(CapabilityError)
    async def _capability(_, exc: CapabilityError):
        return JSONResponse(status_code=422, content={"detail": str(exc), "kind": "capability"})

    @app.exception_handler(EgoAggError)
    async def _domain(_, exc: EgoAggError):
        return JSONResponse(status_code=400, content={"detail": str(exc), "kind": type(exc).__name__})

    @app.exception_handler(ValueError)
    async def _value(_, exc: ValueError):
        return JSONResponse(status_code=400, content={"detail": str(exc), "kind": "value"})

    @app.get("/health")
    def health():
        return {"status": "ok", "version": __version__}

    @app.post("/build", response_model=BuildResponse)
    def build(req: BuildRequest):
        g, q = _graph(req.graph), _query(req.query)
        c = compile_query(g, q, req.algo, ConstructionParams(seed=req.seed))
        return BuildResponse(overlay=dump_overlay(c.o), stats=_stats(c))

    @app.post("/decide", response_model=DecideResponse)
    def decide_(req: DecideRequest):
        g, q = _graph(req.graph), _query(req.query)
        c = _compiled(g, q, req.overlay)
        cm = CostModel.from_json(req.cost_model) if req.cost_model else c.cost_model
        freq = annotate_frequencies(c.o, _activity(req.activity, g))
        plan = decide(c.o, cm=cm, method=req.plan, freq=freq)
        splits = 0
        if req.split:
            splits = len(split_nodes(c.o, freq, cm, plan).splits)
        apply_plan(c.o, plan)
        return DecideResponse(
            overlay=dump_overlay(c.o),
            cost=plan.cost,
            method=plan.method,
            push_nodes=sum(1 for n in plan.push_nodes if n % 3),
            pull_nodes=len(plan.pull_nodes),
            splits=splits,
            stats=PlanStatsBody(**vars(plan.stats)),
        )

    @app.post("/run")
    def run(req: RunRequest):
        g, q = _graph(req.graph), _query(req.query)
        trace = read_trace(req.trace)
        if req.overlay is not None:
            c = _compiled(g, q, req.overlay)
            c.algorithm = "file"
            freq = annotate_frequencies(c.o, activity_from_events(trace, _live(g)))
            c.plan = DataflowPlan(dict(c.o.decisions), plan_cost(c.o, c.o.decisions, freq, c.cost_model), "file")
        else:
            c = compile_query(g, q, req.algo, ConstructionParams(seed=req.seed))
            plan = decide(c.o, activity_from_events(trace, _live(g)), c.cost_model, req.plan)
            apply_plan(c.o, plan)
            c.plan = plan
        report = run_benchmark(c, trace, req.threads, isolated=req.isolated, collect_reads=req.with_reads)
        return report.to_dict(with_reads=req.with_reads)

    @app.post("/compare", response_model=CompareResponse)
    def compare(req: CompareRequest):
        g, q = _graph(req.graph), _query(req.query)
        uda = get_aggregate(q.aggregate)
        for algo in req.algos:
            check_combination(algo, uda)
        labels = [g.labels[v] for v in sorted(g.alive)]
        live = {lab: g.ids[lab] for lab in labels}
        a = derive_bipartite(g, q)
        reports, extra = [], []
        for algo in req.algos:
            o = build_overlay(a, algo, uda, ConstructionParams(seed=req.seed))
            c = Compiled(g, q, uda, a, o, None, default_cost_model(q.aggregate, window_factor(q)), algo)
            for ratio in req.ratios:
                trace = gen_zipf(labels, req.skew, ratio, req.count, req.seed)
                act = activity_from_events(trace, live)
                for method in req.plans:
                    c.plan = decide(o, act, c.cost_model, method)
                    apply_plan(o, c.plan)
                    reports.append(run_benchmark(c, trace, req.threads))
                    extra.append({"ratio": ratio})
        text = reports_to_csv(reports, extra)
        rows = [{**ex, **r.csv_row()} for r, ex in zip(reports, extra)]
        return CompareResponse(csv=text, rows=rows)

    @app.post("/validate", response_model=ValidateResponse)
    def validate_(req: ValidateRequest):
        g, q = _graph(req.graph), _query(req.query)
        c = _compiled(g, q, req.overlay)
        bad = validate(c.o, c.a, c.uda.caps)
        return ValidateResponse(
            valid=not bad and not orphans(c.o),
            violations=[str(v) for v in bad],
            orphans=[c.o.name(n) for n in orphans(c.o)],
        )

    @app.post("/gen", response_model=GenResponse)
    def gen(req: GenRequest):
        if req.kind == "graph":
            g = copying_graph(req.nodes, req.degree, seed=req.seed)
            return GenResponse(text=dump_graph(g), events=g.num_arcs)
        if req.graph is None:
            raise HTTPException(status_code=400, detail=f"kind={req.kind} needs a graph")
        g = _graph(req.graph)
        labels = [g.labels[v] for v in sorted(g.alive)]
        by_degree = None
        if req.degree_correlated:
            by_degree = {g.labels[v]: len(g.in_adj[v]) + len(g.out_adj[v]) for v in g.alive}
        skipped = clients = 0
        if req.kind == "zipf":
            events = gen_zipf(labels, req.skew, req.ratio, req.count, req.seed, req.value_domain, by_degree=by_degree)
        elif req.kind == "shift":
            events, _ = shift_workload(labels, req.skew, req.ratio, req.ratio_after, req.count, req.seed, req.value_domain)
        elif req.kind == "structure":
            events = gen_structure_updates(g, req.count, req.seed)
        else:
            if req.log is None:
                raise HTTPException(status_code=400, detail="kind=http needs a log body")
            mapped = parse_http_trace(req.log, labels, req.seed)
            events = http_workload(mapped, req.ratio, req.seed, req.value_domain)
            skipped, clients = mapped.skipped, mapped.clients
        return GenResponse(text=write_trace(events), events=len(events), skipped=skipped, clients=clients)

    return app


app = create_app()
