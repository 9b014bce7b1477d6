"""JSON-over-HTTP front end; every endpoint is one library call."""
from __future__ import annotations

import argparse
import logging
from dataclasses import asdict, replace
from pathlib import Path
from typing import Any

from flask import Flask, jsonify, request

from vizrec.config import EngineConfig
from vizrec.data import DataSchema, infer_schema_text
from vizrec.debug import emit_debug_chart
from vizrec.engine import Engine
from vizrec.kb import list_blocks
from vizrec.solver import CandidateModel
from vizrec.validation import ValidationError

log = logging.getLogger(__name__)


class RequestError(Exception):
    pass


def model_to_json(model: CandidateModel) -> dict[str, Any]:
    return {"spec": model.spec, "cost": model.cost, "violations": dict(model.violations)}


def _error_detail(exc: ValidationError) -> dict[str, Any]:
    detail: dict[str, Any] = {"type": type(exc).__name__}
    for name in ("problems", "line", "column", "cycle", "index"):
        value = getattr(exc, name, None)
        if value is not None:
            detail[name] = value
    missing = getattr(exc, "missing", None)
    if missing is not None:
        detail["missing"] = [[str(entity), prop] for entity, prop in missing]
    return detail


def _body() -> dict[str, Any]:
    body = request.get_json(silent=True)
    if not isinstance(body, dict) or not body:
        raise RequestError("request body must be a non-empty JSON object")
    return body


def _field(body: dict[str, Any], name: str) -> Any:
    if name not in body:
        raise RequestError(f"missing '{name}'")
    return body[name]


def create_app(engine: Engine | None = None, config: EngineConfig | None = None) -> Flask:
    """Build the app around one engine; the KB is shared read-only across requests."""
    config = config or (engine.config if engine is not None else EngineConfig())
    engine = engine or Engine(config=config)
    app = Flask(__name__)
    app.config["MAX_CONTENT_LENGTH"] = config.service.max_content_length

    @app.errorhandler(RequestError)
    def _bad_request(exc: RequestError):
        return jsonify({"error": str(exc)}), 400

    @app.errorhandler(ValidationError)
    def _invalid(exc: ValidationError):
        return jsonify({"error": str(exc), "detail": _error_detail(exc)}), 422

    @app.post("/validate")
    def validate_spec():
        body = _body()
        return jsonify({"hard_violations": engine.get_violations(_field(body, "spec"))})

    @app.post("/complete")
    def complete():
        body = _body()
        spec = body.get("spec", body.get("facts"))
        if spec is None:
            raise RequestError("missing 'spec' or 'facts'")
        schema = DataSchema.from_dict(body["schema"]) if body.get("schema") is not None else None
        k = body.get("k")
        if k is not None and (isinstance(k, bool) or not isinstance(k, int)):
            raise RequestError("'k' must be an integer")
        models = engine.complete_spec(spec, schema=schema, hints=body.get("hints"), k=k, weights=body.get("weights"))
        return jsonify({"models": [model_to_json(m) for m in models]})

    @app.post("/schema")
    def schema():
        text = request.get_data(as_text=True)
        if not text.strip():
            raise RequestError("request body must be CSV text")
        return jsonify(infer_schema_text(text).to_dict())

    @app.post("/render")
    def render_spec():
        body = _body()
        return jsonify(engine.render(_field(body, "spec"), body.get("data")))

    @app.post("/debug")
    def debug():
        body = _body()
        specs = _field(body, "specs")
        if not isinstance(specs, list):
            raise RequestError("'specs' must be a list")
        matrix = engine.debug(specs, body.get("labels"))
        chart = emit_debug_chart(matrix) if matrix.spec_labels else None
        return jsonify({"matrix": matrix.to_json(), "chart": chart})

    @app.get("/kb")
    def kb():
        return jsonify({"blocks": [asdict(info) for info in list_blocks(engine.kb)]})

    return app


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="vizrec-service")
    parser.add_argument("--port", type=int)
    parser.add_argument("--host")
    parser.add_argument("--kb")
    parser.add_argument("--config")
    args = parser.parse_args(argv)
    config = EngineConfig.from_json_file(args.config) if args.config else EngineConfig()
    service = config.service
    if args.port is not None:
        service = replace(service, port=args.port)
    if args.host:
        service = replace(service, host=args.host)
    config = replace(config, service=service, kb_path=Path(args.kb) if args.kb else config.kb_path)
    app = create_app(config=config)
    log.info("serving on %s:%d", service.host, service.port)
    app.run(host=service.host, port=service.port, threaded=True)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
