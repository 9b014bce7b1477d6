from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any

import pandas as pd

from vizrec import learn, render
from vizrec.aspmini import ParseError, parse_program
from vizrec.config import EngineConfig, SolverConfig
from vizrec.data import SchemaError, infer_schema, load_schema
from vizrec.debug import emit_debug_chart, save_debug_png, unactivated
from vizrec.engine import Engine
from vizrec.facts import ModelError, nest_facts, parse_facts
from vizrec.kb import KBError, block_source, list_blocks
from vizrec.render import RenderError, dumps_chart
from vizrec.solver import IncompleteSpecError
from vizrec.validation import ValidationError, validate_engine_config

EXIT_OK = 0
EXIT_NEGATIVE = 1
EXIT_USAGE = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vizrec", description="Constraint-based chart recommendation.")
    parser.add_argument("--kb", help="knowledge base directory (default: $DRACO_KB, $VIZREC_KB or the bundled KB)")
    parser.add_argument("--config", help="engine config JSON")
    parser.add_argument("--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="list hard violations of a complete spec")
    p.add_argument("spec")

    p = sub.add_parser("schema", help="infer a data schema from CSV")
    p.add_argument("data")
    p.add_argument("-o", "--output")

    p = sub.add_parser("complete", help="complete a partial spec")
    p.add_argument("spec")
    p.add_argument("--schema", help="schema JSON or CSV data")
    p.add_argument("-k", type=int)
    p.add_argument("--hint", help="extra rules file")
    p.add_argument("--weights", help="weight overrides JSON")
    p.add_argument("--max-added", type=int, dest="max_added")
    p.add_argument("-o", "--output", default="out")

    p = sub.add_parser("render", help="render a spec as Vega-Lite")
    p.add_argument("spec")
    p.add_argument("--data", help="CSV rows to inline")
    p.add_argument("-o", "--output")

    p = sub.add_parser("debug", help="violation matrix and debug chart for a directory of specs")
    p.add_argument("specs_dir")
    p.add_argument("-o", "--output", default="matrix.csv")
    p.add_argument("--chart")
    p.add_argument("--png")
    p.add_argument("--size", default="medium", choices=["small", "medium", "large"])

    p = sub.add_parser("learn", help="learn weights from ranked pairs")
    p.add_argument("pairs")
    p.add_argument("-o", "--output")
    p.add_argument("--seed", type=int)

    p = sub.add_parser("kb", help="inspect the knowledge base")
    kb_sub = p.add_subparsers(dest="kb_command", required=True)
    kb_sub.add_parser("list")
    show = kb_sub.add_parser("show")
    show.add_argument("block")
    return parser


def _read_json(path: str) -> Any:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"Missing input file: {p}")
    return json.loads(p.read_text(encoding="utf-8"))


def _read_spec(path: str) -> Any:
    """Nested JSON, or fact text for `.lp` files."""
    if path.endswith(".lp"):
        return parse_facts(Path(path).read_text(encoding="utf-8"))
    return _read_json(path)


def _write_json(path: str | Path, value: Any) -> None:
    Path(path).write_text(json.dumps(value, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def _engine(args: argparse.Namespace, solver: SolverConfig | None = None) -> Engine:
    config = EngineConfig.from_json_file(args.config) if args.config else EngineConfig()
    if args.kb:
        config = replace(config, kb_path=Path(args.kb))
    if solver is not None:
        config = replace(config, solver=solver)
    validate_engine_config(config)
    return Engine(config=config)


def _cmd_validate(args: argparse.Namespace) -> int:
    engine = _engine(args)
    names = engine.get_violations(_read_spec(args.spec))
    if not names:
        print("valid")
        return EXIT_OK
    for name in names:
        print(name)
    return EXIT_NEGATIVE


def _cmd_schema(args: argparse.Namespace) -> int:
    schema = infer_schema(args.data).to_dict()
    if args.output:
        _write_json(args.output, schema)
    print(json.dumps(schema, indent=2, ensure_ascii=False))
    return EXIT_OK


def _cmd_complete(args: argparse.Namespace) -> int:
    base = EngineConfig.from_json_file(args.config).solver if args.config else SolverConfig()
    solver = replace(
        base,
        max_added_encodings=base.max_added_encodings if args.max_added is None else args.max_added,
        k=base.k if args.k is None else args.k,
    )
    engine = _engine(args, solver)
    schema = load_schema(args.schema) if args.schema else None
    hints = parse_program(Path(args.hint).read_text(encoding="utf-8")) if args.hint else None
    weights = _read_json(args.weights) if args.weights else None
    models = engine.complete_spec(_read_spec(args.spec), schema=schema, hints=hints, weights=weights)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    manifest = []
    for i, model in enumerate(models):
        name = f"spec_{i}.json"
        _write_json(out / name, model.spec)
        manifest.append({"file": name, "cost": model.cost, "violations": model.violations})
        print(f"{i}\t{model.cost}\t{name}")
    _write_json(out / "manifest.json", manifest)
    if not models:
        print("warning: no valid completion for this query", file=sys.stderr)
    return EXIT_OK


def _load_rows(path: str) -> list[dict[str, Any]]:
    frame = pd.read_csv(path)
    frame = frame.astype(object).where(frame.notna(), None)
    return frame.to_dict(orient="records")


def _cmd_render(args: argparse.Namespace) -> int:
    spec = _read_spec(args.spec)
    if isinstance(spec, list):
        spec = nest_facts(spec)
    data = _load_rows(args.data) if args.data else None
    text = dumps_chart(render.render(spec, data))
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        print(text, end="")
    return EXIT_OK


def _cmd_debug(args: argparse.Namespace) -> int:
    engine = _engine(args)
    paths = sorted(Path(args.specs_dir).glob("*.json"))
    specs = [_read_json(str(p)) for p in paths]
    matrix = engine.debug(specs, [p.stem for p in paths])
    matrix.to_csv(args.output)
    if args.chart:
        Path(args.chart).write_text(dumps_chart(emit_debug_chart(matrix, args.size)), encoding="utf-8")
    if args.png:
        save_debug_png(matrix, args.png, args.size)
    idle = unactivated(matrix)
    print(f"specs={len(matrix.spec_labels)} excluded={len(matrix.excluded)} unactivated={len(idle)}/{len(matrix.constraint_names)}")
    return EXIT_OK


def _cmd_learn(args: argparse.Namespace) -> int:
    engine = _engine(args)
    cfg = engine.config.learn
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    pairs = learn.load_pairs(args.pairs, engine.kb)
    w = learn.learn_weights(pairs, cfg)
    weights = learn.export_weights(engine.kb.soft_names, w, cfg.export_scale)
    if args.output:
        _write_json(args.output, weights)
    print(f"pair_accuracy={learn.pair_accuracy(w, pairs):.4f}")
    return EXIT_OK


def _cmd_kb(args: argparse.Namespace) -> int:
    engine = _engine(args)
    if args.kb_command == "list":
        for info in list_blocks(engine.kb):
            weight = "" if info.weight is None else f"\t{info.weight}"
            print(f"{info.role}\t{info.name}{weight}\t{info.description}")
        return EXIT_OK
    print(block_source(engine.kb, args.block))
    return EXIT_OK


_COMMANDS = {
    "validate": _cmd_validate,
    "schema": _cmd_schema,
    "complete": _cmd_complete,
    "render": _cmd_render,
    "debug": _cmd_debug,
    "learn": _cmd_learn,
    "kb": _cmd_kb,
}


def main(argv: list[str] | None = None) -> int:
    """Run one CLI subcommand; returns the process exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    if args.verbose:
        logging.basicConfig(level=logging.DEBUG, format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except (json.JSONDecodeError, ParseError, ModelError, IncompleteSpecError, RenderError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (KBError, SchemaError, ValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NEGATIVE


if __name__ == "__main__":
    raise SystemExit(main())
