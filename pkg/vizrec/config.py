from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal

KB_DIR_ENV = "DRACO_KB"
KB_DIR_ENV_ALIAS = "VIZREC_KB"
DEFAULT_KB_DIR = Path(__file__).resolve().parent / "kb_default"

Strategy = Literal["branch_and_bound", "exhaustive"]


def default_kb_dir() -> Path:
    """Knowledge base directory: `DRACO_KB` (or `VIZREC_KB`) when set, else the bundled default."""
    override = os.getenv(KB_DIR_ENV) or os.getenv(KB_DIR_ENV_ALIAS)
    return Path(override) if override else DEFAULT_KB_DIR


@dataclass(frozen=True)
class SolverConfig:
    max_added_encodings: int = 3
    allow_new_entities: bool = True
    k: int = 5
    strategy: Strategy = "branch_and_bound"


@dataclass(frozen=True)
class LearnConfig:
    epochs: int = 200
    learning_rate: float = 0.01
    margin: float = 1.0
    l2: float = 0.001
    seed: int = 0
    # Integer weight given to the largest learned weight on export.
    export_scale: int = 10


@dataclass(frozen=True)
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 5000
    max_content_length: int = 1 << 20


@dataclass(frozen=True)
class EngineConfig:
    solver: SolverConfig = SolverConfig()
    learn: LearnConfig = LearnConfig()
    service: ServiceConfig = ServiceConfig()
    kb_path: Path | None = None

    @staticmethod
    def from_json_file(path: str | Path) -> "EngineConfig":
        """Load config from a JSON file on disk."""
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        return EngineConfig.from_dict(raw)

    @staticmethod
    def from_dict(raw: dict[str, Any]) -> "EngineConfig":
        """Build config from a decoded JSON dict."""
        solver_raw = _section(raw, "solver")
        learn_raw = _section(raw, "learn")
        service_raw = _section(raw, "service")
        solver = SolverConfig(
            max_added_encodings=int(solver_raw.get("max_added_encodings", 3)),
            allow_new_entities=bool(solver_raw.get("allow_new_entities", True)),
            k=int(solver_raw.get("k", 5)),
            strategy=_normalize_strategy(solver_raw.get("strategy", "branch_and_bound")),
        )
        learn = LearnConfig(
            epochs=int(learn_raw.get("epochs", 200)),
            learning_rate=float(learn_raw.get("learning_rate", 0.01)),
            margin=float(learn_raw.get("margin", 1.0)),
            l2=float(learn_raw.get("l2", 0.001)),
            seed=int(learn_raw.get("seed", 0)),
            export_scale=int(learn_raw.get("export_scale", 10)),
        )
        service = ServiceConfig(
            host=str(service_raw.get("host", "127.0.0.1")),
            port=int(service_raw.get("port", 5000)),
            max_content_length=_parse_size(service_raw.get("max_content_length", 1 << 20)),
        )
        kb_raw = raw.get("kb_path")
        return EngineConfig(
            solver=solver,
            learn=learn,
            service=service,
            kb_path=Path(kb_raw) if kb_raw else None,
        )


def _section(raw: dict[str, Any], key: str) -> dict[str, Any]:
    value = raw.get(key, {})
    if not isinstance(value, dict):
        raise ValueError(f"{key} must be a mapping")
    return value


def _normalize_strategy(raw: Any) -> Strategy:
    """Normalize search strategy names."""
    key = str(raw).strip().lower().replace("-", "_").replace(" ", "_")
    if key in ("branch_and_bound", "bnb", "bb"):
        return "branch_and_bound"
    if key in ("exhaustive", "brute_force"):
        return "exhaustive"
    raise ValueError(f"Unknown strategy: {raw}")


def _parse_size(raw: Any) -> int:
    """Parse a byte size given as an int or a string such as '512k' or '2m'."""
    if isinstance(raw, int):
        return raw
    text = str(raw).strip().lower()
    units = {"k": 1 << 10, "m": 1 << 20}
    if text and text[-1] in units:
        return int(float(text[:-1]) * units[text[-1]])
    try:
        return int(text)
    except ValueError:
        raise ValueError(f"Unknown size: {raw}") from None
