from __future__ import annotations

from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from vizrec.config import EngineConfig


class ValidationError(ValueError):
    """Raised when input data is logically invalid."""


def validate_engine_config(cfg: "EngineConfig") -> None:
    """Validate numeric ranges of an engine config."""
    _ensure_non_negative(cfg.solver.max_added_encodings, "solver.max_added_encodings")
    _ensure_positive(cfg.solver.k, "solver.k")
    _ensure_positive(cfg.learn.epochs, "learn.epochs")
    _ensure_positive(cfg.learn.learning_rate, "learn.learning_rate")
    _ensure_positive(cfg.learn.margin, "learn.margin")
    _ensure_positive(cfg.learn.l2, "learn.l2")
    _ensure_non_negative(cfg.learn.seed, "learn.seed")
    _ensure_positive(cfg.learn.export_scale, "learn.export_scale")
    _validate_service(cfg)


def _ensure_non_negative(value: float, name: str) -> None:
    if value < 0:
        raise ValidationError(f"{name} must be >= 0 (got {value})")


def _ensure_positive(value: float, name: str) -> None:
    if value <= 0:
        raise ValidationError(f"{name} must be > 0 (got {value})")


def _validate_service(cfg: "EngineConfig") -> None:
    port = cfg.service.port
    if port < 0 or port > 65535:
        raise ValidationError(f"service.port must be between 0 and 65535 (got {port})")
    _ensure_positive(cfg.service.max_content_length, "service.max_content_length")
