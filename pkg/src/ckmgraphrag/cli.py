"""Command-line entry point.

Subcommands: synth, ingest, build, stats, query, evaluate, export.  Every
config key is also a flag (``--retrieval.k_anchor 4``); flags override the
``--config`` file, which overrides defaults.  Failures print one JSON line on
stderr and exit with 2 (config), 3 (I/O), 4 (backend) or 5 (empty result).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Sequence

from . import ingest
from .backends import BackendConfig, ChatClient
from .config import OPTIONS, RunConfig, load_config, read_config_file
from .errors import CkmRagError, ConfigError, DataError
from .evaluation import EvalConfig, emit_plot_data, evaluate, split_pairs
from .generation import generate_remote, mock_predict_from_reports, mock_predict_gain
from .graph import dumps_graph, export_graph, graph_stats, import_graph
from .pipeline import build_knowledge_graph
from .retrieval import GainQuery, flat_retrieve, global_search, local_search, render_query_line

def _option_parent() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    group = parent.add_argument_group("configuration (any config-file key)")
    group.add_argument("--config", metavar="FILE", help="flat key = value config file")
    for opt in OPTIONS:
        group.add_argument(
            f"--{opt.key}", dest=f"opt:{opt.key}", metavar=opt.kind.upper(), default=None,
            help=f"{opt.help} [default: {opt.default!r}]",
        )
    return parent


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ckmgraphrag", description="Channel gain prediction over a channel knowledge map knowledge graph.")
    sub = parser.add_subparsers(dest="command", required=True)
    parent = _option_parent()

    sub.add_parser("synth", parents=[parent], help="write a seeded synthetic CKM CSV")
    sub.add_parser("ingest", parents=[parent], help="label stations and render the knowledge document")
    sub.add_parser("build", parents=[parent], help="build the knowledge graph from the document")
    p = sub.add_parser("stats", parents=[parent], help="print graph statistics")
    p.add_argument("graph", help="graph JSON file")
    p = sub.add_parser("query", parents=[parent], help="predict the gain for a tx/rx location pair")
    p.add_argument("graph", help="graph JSON file")
    p.add_argument("--tx", required=True, help="transmitter position x,y,z (m)")
    p.add_argument("--rx", required=True, help="receiver position x,y,z (m)")
    p.add_argument("--mode", choices=("local", "global", "flat"), default="local")
    p.add_argument("--backend", choices=("mock", "remote"), default=None,
                   help="overrides generation.backend")
    p.add_argument("--text", default=None, help="global-search query text (default: rendered query)")
    sub.add_parser("evaluate", parents=[parent], help="GraphRAG vs vanilla RAG vs PL model")
    p = sub.add_parser("export", parents=[parent], help="rewrite a graph file in canonical order")
    p.add_argument("graph", help="graph JSON file")
    p.add_argument("path", help="output path")
    return parser


def _run_config(args: argparse.Namespace) -> RunConfig:
    file_values = read_config_file(args.config) if args.config else {}
    overrides = {
        key[4:]: value for key, value in vars(args).items()
        if key.startswith("opt:") and value is not None
    }
    if getattr(args, "backend", None):
        overrides["generation.backend"] = args.backend
    return load_config(file_values, overrides)


def _xyz(text: str, flag: str) -> tuple[float, float, float]:
    try:
        parts = [float(v) for v in text.split(",")]
    except ValueError:
        parts = []
    if len(parts) != 3:
        raise ConfigError([f"{flag}: expected x,y,z, got {text!r}"])
    return tuple(parts)


def _chat(cfg: RunConfig) -> ChatClient:
    return ChatClient(BackendConfig(
        kind="remote", base_url=cfg["generation.base_url"], model=cfg["generation.model"],
        timeout=cfg["generation.timeout"], max_retries=cfg["generation.max_retries"],
        token_env=cfg["generation.token_env"], max_in_flight=max(1, cfg["threads"]),
    ))


def _write(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc}") from exc


def _read(path: Path) -> str:
    try:
        return path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc


def _build(cfg: RunConfig, doc: str):
    return build_knowledge_graph(
        doc,
        chunk_size=cfg["chunking.chunk_size"],
        mode=cfg["extraction.mode"],
        reified=cfg["extraction.reified"],
        entity_types=cfg["extraction.entity_types"],
        dim=cfg["embedding.dim"],
        resolution=cfg["leiden.resolution"],
        max_community_size=cfg["leiden.max_community_size"],
        max_sweeps=cfg["leiden.max_sweeps"],
        seed=cfg.stage_seed("leiden"),
        threads=cfg["threads"],
        chat=_chat(cfg) if cfg["extraction.mode"] == "llm" else None,
    )


def cmd_synth(cfg: RunConfig) -> dict:
    a = cfg["synth.area"]
    synth_cfg = ingest.SyntheticCkmConfig(
        n_pairs=cfg["synth.n_pairs"], area=(tuple(a[:3]), tuple(a[3:])),
        pl_intercept_db=cfg["synth.pl_intercept_db"], pl_exponent=cfg["synth.pl_exponent"],
        shadowing_sigma_db=cfg["synth.shadowing_sigma_db"],
        shadowing_correlation_m=cfg["synth.shadowing_correlation_m"],
        station_reuse_prob=cfg["synth.station_reuse_prob"], seed=cfg.stage_seed("synth"),
    )
    records = ingest.generate_synthetic_ckm(synth_cfg)
    cfg.ckm_path.parent.mkdir(parents=True, exist_ok=True)
    ingest.write_ckm(records, cfg.ckm_path)
    return {"ckm": str(cfg.ckm_path), "pairs": len(records)}


def cmd_ingest(cfg: RunConfig) -> dict:
    records = ingest.parse_ckm(cfg.ckm_path)
    tx, rx, pairs = ingest.label_stations(records, cfg["ingest.tol"])
    cfg.workdir.mkdir(parents=True, exist_ok=True)
    ingest.write_pairs(pairs, cfg.workdir / "pairs.csv")
    _write(cfg.workdir / "document.txt", ingest.render_document(pairs))
    return {"pairs": len(pairs), "transmitters": len(tx), "receivers": len(rx),
            "document": str(cfg.workdir / "document.txt")}


def cmd_build(cfg: RunConfig) -> dict:
    graph = _build(cfg, _read(cfg.workdir / "document.txt"))
    export_graph(graph, cfg.workdir / "graph.json")
    return {"graph": str(cfg.workdir / "graph.json"), **asdict(graph_stats(graph))}


def cmd_stats(graph_path: str) -> tuple[str, dict]:
    stats = asdict(graph_stats(import_graph(graph_path)))
    rows = [(k, v) for k, v in stats.items() if k != "communities_per_level"]
    rows += [(f"communities at level {lvl}", n) for lvl, n in stats["communities_per_level"].items()]
    width = max(len(k) for k, _ in rows)
    table = "\n".join(f"{k:<{width}}  {v}" for k, v in rows)
    return table, stats


def cmd_query(cfg: RunConfig, graph_path: str, tx: str, rx: str, mode: str, text: str | None) -> dict:
    graph = import_graph(graph_path)
    q = GainQuery(_xyz(tx, "--tx"), _xyz(rx, "--rx"))
    if mode == "local":
        ctx = local_search(graph, q, cfg["retrieval.k_anchor"], cfg["retrieval.hops"],
                           cfg["retrieval.m"], cfg["retrieval.budget"])
    elif mode == "flat":
        ctx = flat_retrieve(graph, q, cfg["retrieval.top_k"], cfg["retrieval.budget"])
    else:
        ctx = global_search(graph, text or render_query_line(q), cfg["retrieval.r"], cfg["retrieval.budget"])
    if cfg["generation.backend"] == "remote":
        answer = generate_remote(ctx, q, _chat(cfg))
    elif mode == "global":
        answer = mock_predict_from_reports(ctx, q)
    else:
        answer = mock_predict_gain(ctx, q, cfg["generation.eps"])
    return {"answer": answer.to_dict(), "context": ctx.to_dict()}


def cmd_evaluate(cfg: RunConfig) -> dict:
    records = ingest.parse_ckm(cfg.ckm_path)
    _, _, pairs = ingest.label_stations(records, cfg["ingest.tol"])
    eval_cfg = EvalConfig(
        power_levels_dbm=tuple(cfg["eval.power_levels_dbm"]), noise_dbm=cfg["eval.noise_dbm"],
        train_fraction=cfg["eval.train_fraction"], split_seed=cfg.stage_seed("split"),
        k_anchor=cfg["retrieval.k_anchor"], hops=cfg["retrieval.hops"], m=cfg["retrieval.m"],
        top_k=cfg["retrieval.top_k"], budget=cfg["retrieval.budget"], eps=cfg["generation.eps"],
    )
    train, test = split_pairs(pairs, eval_cfg.train_fraction, eval_cfg.split_seed)
    graph = _build(cfg, ingest.render_document(train))
    generator = None
    if cfg["generation.backend"] == "remote":
        chat = _chat(cfg)
        generator = lambda ctx, q: generate_remote(ctx, q, chat)  # noqa: E731
    report = evaluate(graph, train, test, eval_cfg, generator, threads=cfg["threads"])
    cfg.workdir.mkdir(parents=True, exist_ok=True)
    export_graph(graph, cfg.workdir / "graph_train.json")
    _write(cfg.workdir / "eval.json", json.dumps(report.to_dict(), indent=1, sort_keys=True) + "\n")
    emit_plot_data(report, cfg.workdir / "plot.csv")
    return {
        "eval": str(cfg.workdir / "eval.json"), "plot": str(cfg.workdir / "plot.csv"),
        "rmse_db": {k: v.rmse_db for k, v in report.predictors.items()},
    }


def cmd_export(graph_path: str, out: str) -> dict:
    graph = import_graph(graph_path)
    _write(Path(out), dumps_graph(graph))
    return {"graph": out}


def _fail(exc: Exception, code: int, kind: str) -> int:
    payload = {"error": kind, "exit_code": code, "message": str(exc)}
    if isinstance(exc, ConfigError):
        payload["problems"] = exc.problems
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)
    return code


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _run_config(args)
        if args.command == "synth":
            out = cmd_synth(cfg)
        elif args.command == "ingest":
            out = cmd_ingest(cfg)
        elif args.command == "build":
            out = cmd_build(cfg)
        elif args.command == "stats":
            table, out = cmd_stats(args.graph)
            print(table)
        elif args.command == "query":
            out = cmd_query(cfg, args.graph, args.tx, args.rx, args.mode, args.text)
        elif args.command == "evaluate":
            out = cmd_evaluate(cfg)
        else:
            out = cmd_export(args.graph, args.path)
    except CkmRagError as exc:
        return _fail(exc, exc.exit_code, type(exc).__name__)
    except OSError as exc:
        return _fail(exc, 3, "OSError")
    except ValueError as exc:
        return _fail(exc, 2, "ValueError")
    print(json.dumps(out, indent=1, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
