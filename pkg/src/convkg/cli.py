"""``convkg`` command line.

Subcommands::

    convkg graph validate|stats   load/validate a graph, print statistics
    convkg retrieve               grounding + traversal + scoring, no LLM
    convkg annotate               one LLM call per cell (or --mock / --dry-run)
    convkg eval                   exact / ancestor match, calls, evidence
    convkg synth                  synthetic graph + dataset + ontology + manifest
    convkg obo-export             ontology terms as graph-store TSV

Exit codes: 0 success, 1 validation/data error, 2 configuration error,
3 transport error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import synth
from .annotate import AnnotationResult, annotate_batch, retrieve
from .config import ConfigError, RunConfig, load_config, tomllib, with_overrides
from .evaluation import EvaluationError, evaluate
from .graph_store import GraphLoadError, PropertyGraph, graph_stats, load_graph, write_graph
from .grounding import CellSentence, DatasetParseError, parse_cell_sentences
from .llm import HttpChatClient, MockChatClient
from .obo import OboParseError, parse_obo

logger = logging.getLogger("convkg")

EXIT_OK, EXIT_DATA, EXIT_CONFIG, EXIT_TRANSPORT = 0, 1, 2, 3


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML run configuration")
    p.add_argument("--graph-nodes")
    p.add_argument("--graph-edges")
    p.add_argument("--obo")
    p.add_argument("--dataset")
    p.add_argument("--k", type=int)
    p.add_argument("--top-k", type=int)
    decay = p.add_mutually_exclusive_group()
    decay.add_argument("--gamma", type=float, help="geometric hop decay, alpha_h = gamma**(h-1)")
    decay.add_argument("--alpha", type=float, nargs="+", help="explicit per-hop weights")
    p.add_argument("--out")
    p.add_argument("--jobs", type=int)
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="convkg", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("graph", help="validate a graph or print its statistics")
    g.add_argument("action", choices=["validate", "stats"])
    g.add_argument("--manifest", help="synth manifest to cross-check statistics against")
    _add_common(g)

    r = sub.add_parser("retrieve", help="run retrieval only (no LLM) and dump ranked candidates")
    sel = r.add_mutually_exclusive_group(required=True)
    sel.add_argument("--cell-id")
    sel.add_argument("--all", action="store_true")
    r.add_argument("--dump-table", action="store_true", help="include the hop-binned support table")
    _add_common(r)

    a = sub.add_parser("annotate", help="annotate cells with a single LLM call each")
    a.add_argument("--mock", action="store_true", default=None,
                   help="deterministic mock LLM answering with the top evidence candidate")
    a.add_argument("--dry-run", action="store_true", default=None, help="write prompts, make no calls")
    a.add_argument("--include-paths", action="store_true", default=None)
    a.add_argument("--base-url")
    a.add_argument("--model")
    a.add_argument("--temperature", type=float)
    _add_common(a)

    e = sub.add_parser("eval", help="score annotation results against gold labels")
    e.add_argument("results", help="results JSONL written by 'annotate'")
    _add_common(e)

    s = sub.add_parser("synth", help="generate a synthetic graph, dataset and ontology")
    s.add_argument("--spec", help="JSON or TOML file with SynthSpec fields")
    s.add_argument("--profile", choices=["planted", "vckg"], default="planted")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)
    s.add_argument("-v", "--verbose", action="store_true")

    o = sub.add_parser("obo-export", help="write ontology terms as graph-store nodes/edges TSV")
    o.add_argument("--obo", required=True)
    o.add_argument("--out", required=True)
    o.add_argument("-v", "--verbose", action="store_true")
    return parser


def _config(args) -> RunConfig:
    cfg = load_config(args.config)
    return with_overrides(
        cfg,
        graph_nodes=args.graph_nodes,
        graph_edges=args.graph_edges,
        obo=args.obo,
        dataset=args.dataset,
        k=args.k,
        top_k=args.top_k,
        gamma=args.gamma,
        alpha=args.alpha,
        out=args.out,
        jobs=args.jobs,
        include_paths=getattr(args, "include_paths", None),
        dry_run=getattr(args, "dry_run", None),
        model=getattr(args, "model", None),
        temperature=getattr(args, "temperature", None),
        base_url=getattr(args, "base_url", None),
    )


def _require(value, flag: str):
    if value is None:
        raise CliError(f"missing required setting {flag}", EXIT_CONFIG)
    return value


def _load_graph(cfg: RunConfig) -> PropertyGraph:
    return load_graph(_require(cfg.paths.graph_nodes, "--graph-nodes"),
                      _require(cfg.paths.graph_edges, "--graph-edges"))


def _emit(text: str, out: Path | None, filename: str) -> None:
    if out is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
        return
    out.mkdir(parents=True, exist_ok=True)
    (out / filename).write_text(text if text.endswith("\n") else text + "\n", encoding="utf-8")


def cmd_graph(args) -> int:
    cfg = _config(args)
    graph = _load_graph(cfg)
    stats = graph_stats(graph).to_dict()
    if args.action == "validate":
        print(f"ok: {stats['node_count']} nodes, {stats['edge_count']} edges")
        return EXIT_OK
    print(json.dumps(stats, indent=2, sort_keys=True))
    if args.manifest:
        expected = json.loads(Path(args.manifest).read_text(encoding="utf-8"))["stats"]
        if expected != stats:
            print("statistics differ from manifest", file=sys.stderr)
            return EXIT_DATA
        print("statistics match manifest", file=sys.stderr)
    return EXIT_OK


def _retrieval_record(sentence: CellSentence, graph: PropertyGraph, cfg: RunConfig, dump_table: bool) -> dict:
    r = retrieve(sentence, graph, cfg.grounding, cfg.traversal, cfg.scoring)
    symbol = {g.rank: g.symbol for g in r.grounded}
    rec = {
        "cell_id": sentence.cell_id,
        "grounded": [{"symbol": g.symbol, "node_id": g.node_id, "rank": g.rank} for g in r.grounded],
        "filtered": [{"symbol": f.symbol, "rank": f.rank, "reason": f.reason} for f in r.grounded.filtered],
        "support": {
            "source_count": r.table.source_count,
            "candidate_count": r.table.target_count,
            "df": {symbol[rank]: df for rank, df in sorted(r.table.df.items())},
        },
        "candidates": [c.to_dict(graph.names[graph.index_of(c.target)]) for c in r.topk],
    }
    if dump_table:
        rec["support_table"] = json.loads(r.table.to_debug_json(r.grounded))
    if not r.grounded.genes:
        rec["warning"] = "no groundable genes"
    return rec


def cmd_retrieve(args) -> int:
    cfg = _config(args)
    graph = _load_graph(cfg)
    dataset = parse_cell_sentences(_require(cfg.paths.dataset, "--dataset"))
    if args.cell_id:
        chosen = [s for s in dataset if s.cell_id == args.cell_id]
        if not chosen:
            raise CliError(f"unknown cell id {args.cell_id!r}", EXIT_DATA)
    else:
        chosen = dataset
    jobs = max(1, cfg.jobs)

    def run(s):
        return _retrieval_record(s, graph, cfg, args.dump_table)

    if jobs == 1:
        records = [run(s) for s in chosen]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(run, chosen))
    for rec in records:
        if "warning" in rec:
            logger.warning("cell %s: %s", rec["cell_id"], rec["warning"])
    _emit(json.dumps(records, indent=2, sort_keys=True), cfg.out, "retrieval.json")
    return EXIT_OK


def cmd_annotate(args) -> int:
    cfg = _config(args)
    graph = _load_graph(cfg)
    dag = parse_obo(_require(cfg.paths.obo, "--obo"))
    dataset = parse_cell_sentences(_require(cfg.paths.dataset, "--dataset"))
    out = _require(cfg.out, "--out")
    dry = cfg.annotate.dry_run
    if dry:
        client = None
    elif args.mock:
        client = MockChatClient(echo_top_candidate=True)
    else:
        client = HttpChatClient(_require(cfg.llm.base_url, "--base-url"), cfg.llm.token_env, cfg.llm.timeout)

    results = annotate_batch(
        dataset, graph, dag, client, cfg.grounding, cfg.traversal, cfg.scoring, cfg.annotate
    )
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "results.jsonl", "w", encoding="utf-8", newline="\n") as fh:
        for r in results:
            fh.write(json.dumps(r.to_record(), sort_keys=True) + "\n")
    if dry:
        prompts = out / "prompts"
        prompts.mkdir(exist_ok=True)
        for r in results:
            req = r.request
            (prompts / f"{r.cell_id}.txt").write_text(
                f"# system\n{req.system_prompt}\n\n# user\n{req.user_prompt}\n", encoding="utf-8"
            )
    n = len(results)
    calls = sum(r.llm_calls for r in results)
    evidence = sum(r.evidence_count for r in results)
    failed = [r for r in results if r.error]
    print(
        f"annotated {n} cells: avg_calls={calls / n if n else 0:.2f} "
        f"avg_evidence={evidence / n if n else 0:.2f} "
        f"retries={sum(r.retries for r in results)} failed={len(failed)}"
    )
    for r in failed:
        print(f"{r.cell_id}: {r.error}", file=sys.stderr)
    return EXIT_TRANSPORT if failed else EXIT_OK


def cmd_eval(args) -> int:
    cfg = _config(args)
    dag = parse_obo(_require(cfg.paths.obo, "--obo"))
    dataset = parse_cell_sentences(_require(cfg.paths.dataset, "--dataset"))
    results = []
    with open(args.results, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                results.append(AnnotationResult.from_record(json.loads(line)))
    report = evaluate(results, dataset, dag)
    if cfg.out is None:
        print(report.to_json())
        print(report.to_table())
    else:
        _emit(report.to_json(), cfg.out, "metrics.json")
        _emit(report.to_table(), cfg.out, "metrics.txt")
        print(report.to_table())
    return EXIT_OK


def _read_mapping(path: Path) -> dict:
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".toml":
        return tomllib.loads(text)
    return json.loads(text)


def cmd_synth(args) -> int:
    if args.spec:
        try:
            data = _read_mapping(Path(args.spec))
        except (OSError, ValueError) as exc:
            raise CliError(f"cannot read spec {args.spec}: {exc}", EXIT_CONFIG) from exc
        if args.seed is not None:
            data["seed"] = args.seed
        try:
            if "planted" not in data and "n_targets" in data:
                auto = {k: data.pop(k) for k in ("n_targets", "supporters_per_target", "hop2_fraction") if k in data}
                spec = synth.planted_spec(**auto, **data)
            else:
                spec = synth.SynthSpec.from_dict(data)
        except TypeError as exc:
            raise CliError(f"bad synth spec: {exc}", EXIT_CONFIG) from exc
    elif args.profile == "vckg":
        spec = synth.vckg_profile_spec(seed=args.seed or 0)
    else:
        spec = synth.planted_spec(seed=args.seed or 0)
    paths = synth.generate(spec, args.out)
    print(json.dumps({k: str(v) for k, v in vars(paths).items()}, indent=2))
    return EXIT_OK


def cmd_obo_export(args) -> int:
    dag = parse_obo(args.obo)
    nodes, edges = dag.to_graph_records()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_graph(nodes, edges, out / "nodes.tsv", out / "edges.tsv")
    print(f"wrote {len(nodes)} nodes and {len(edges)} edges to {out}")
    return EXIT_OK


COMMANDS = {
    "graph": cmd_graph,
    "retrieve": cmd_retrieve,
    "annotate": cmd_annotate,
    "eval": cmd_eval,
    "synth": cmd_synth,
    "obo-export": cmd_obo_export,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (GraphLoadError, OboParseError, DatasetParseError, EvaluationError, synth.InfeasibleSpecError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
