"""Soft-constraint weights from ranked pairs of charts.

Each chart is its soft-violation count vector; a pair says the `better` chart
should cost less than the `worse` one. Weights are fit by a linear ranker with a
hinge loss and kept non-negative so they stay usable as penalties.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from vizrec.config import LearnConfig
from vizrec.facts import flatten_spec
from vizrec.kb import KnowledgeBase
from vizrec.solver import count_violations
from vizrec.validation import ValidationError

log = logging.getLogger(__name__)


class LearnError(ValidationError):
    pass


@dataclass(frozen=True)
class RankedPair:
    better: tuple[int, ...]
    worse: tuple[int, ...]


def _differences(pairs: Sequence[RankedPair]) -> np.ndarray:
    if not pairs:
        raise LearnError("need at least one ranked pair")
    dim = len(pairs[0].better)
    for i, pair in enumerate(pairs):
        if len(pair.better) != dim or len(pair.worse) != dim:
            raise LearnError(f"pair {i}: expected vectors of length {dim}")
        if any(v < 0 for v in pair.better) or any(v < 0 for v in pair.worse):
            raise LearnError(f"pair {i}: violation counts must be >= 0")
    worse = np.array([p.worse for p in pairs], dtype=float)
    better = np.array([p.better for p in pairs], dtype=float)
    return worse - better


def training_loss(weights: np.ndarray, pairs: Sequence[RankedPair], config: LearnConfig) -> float:
    diffs = _differences(pairs)
    hinge = np.maximum(0.0, config.margin - diffs @ weights)
    return float(hinge.mean() + config.l2 * float(weights @ weights))


def learn_weights(
    pairs: Sequence[RankedPair],
    config: LearnConfig = LearnConfig(),
    initial: np.ndarray | None = None,
    full_batch: bool = False,
) -> np.ndarray:
    """Projected subgradient descent on mean hinge loss plus L2; deterministic given the seed."""
    diffs = _differences(pairs)
    n, dim = diffs.shape
    w = np.zeros(dim) if initial is None else np.array(initial, dtype=float)
    if w.shape != (dim,):
        raise LearnError(f"initial weights must have length {dim}")
    degenerate = int(np.sum(~diffs.any(axis=1)))
    if degenerate:
        log.warning("%d of %d pairs rank identical violation vectors", degenerate, n)
    if degenerate == n:
        return w
    rng = np.random.default_rng(config.seed)
    lr = config.learning_rate
    for _ in range(config.epochs):
        if full_batch:
            active = (config.margin - diffs @ w) > 0
            grad = -diffs[active].sum(axis=0) / n + 2 * config.l2 * w
            w = np.maximum(w - lr * grad, 0.0)
            continue
        for i in rng.permutation(n):
            d = diffs[i]
            grad = 2 * config.l2 * w
            if config.margin - d @ w > 0:
                grad = grad - d
            w = np.maximum(w - lr * grad, 0.0)
    return w


def pair_accuracy(weights: Sequence[float] | np.ndarray, pairs: Sequence[RankedPair]) -> float:
    """Share of pairs where the better chart costs less; ties count half."""
    diffs = _differences(pairs)
    margins = diffs @ np.asarray(weights, dtype=float)
    score = np.where(margins > 0, 1.0, np.where(margins == 0, 0.5, 0.0))
    return float(score.mean())


def export_weights(names: Sequence[str], weights: Sequence[float] | np.ndarray, scale: int = 10) -> dict[str, int]:
    """Integer weights: the largest maps to `scale`, the rest proportionally, rounded half up."""
    w = np.asarray(weights, dtype=float)
    if len(names) != len(w):
        raise LearnError(f"{len(names)} names for {len(w)} weights")
    top = float(w.max()) if len(w) else 0.0
    if top <= 0:
        return {name: 0 for name in names}
    scaled = np.floor(w / top * scale + 0.5).astype(int)
    return {name: int(v) for name, v in zip(names, scaled)}


def _vector(raw: Any, kb: KnowledgeBase, where: str) -> tuple[int, ...]:
    names = kb.soft_names
    if isinstance(raw, list):
        if len(raw) != len(names) or not all(isinstance(v, int) and not isinstance(v, bool) for v in raw):
            raise LearnError(f"{where}: expected {len(names)} integer counts")
        return tuple(raw)
    if isinstance(raw, dict):
        counts = count_violations(kb, flatten_spec(raw))
        return tuple(counts[n] for n in names)
    raise LearnError(f"{where}: expected a count vector or a spec object")


def pairs_from_json(raw: Any, kb: KnowledgeBase) -> list[RankedPair]:
    if not isinstance(raw, list):
        raise LearnError("pairs must be a JSON array")
    pairs: list[RankedPair] = []
    for i, item in enumerate(raw):
        if not isinstance(item, dict) or "better" not in item or "worse" not in item:
            raise LearnError(f"pair {i}: expected an object with better and worse")
        pairs.append(
            RankedPair(
                better=_vector(item["better"], kb, f"pair {i}.better"),
                worse=_vector(item["worse"], kb, f"pair {i}.worse"),
            )
        )
    return pairs


def load_pairs(path: str | Path, kb: KnowledgeBase) -> list[RankedPair]:
    """Pairs file: JSON array of {better, worse}, each a count vector or a nested spec."""
    p = Path(path)
    if not p.exists():
        raise LearnError(f"Missing pairs file: {p}")
    try:
        raw = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise LearnError(f"{p}: {exc}") from None
    return pairs_from_json(raw, kb)
