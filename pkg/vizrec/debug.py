"""Which soft constraints a corpus of specs violates, as a matrix and as a chart."""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal, Mapping, Sequence

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

from vizrec.config import Strategy
from vizrec.data import DataSchema, schema_to_facts
from vizrec.facts import flatten_spec, merge_facts
from vizrec.kb import KnowledgeBase
from vizrec.render import SCHEMA_URL
from vizrec.solver import CandidateModel, Caps, Query, complete_spec, count_violations, validate
from vizrec.validation import ValidationError

log = logging.getLogger(__name__)

SizePreset = Literal["small", "medium", "large"]

# (row height, bar chart width) in pixels
_SIZES: dict[str, tuple[int, int]] = {
    "small": (12, 80),
    "medium": (16, 120),
    "large": (22, 180),
}


@dataclass(frozen=True)
class DebugMatrix:
    spec_labels: tuple[str, ...]
    constraint_names: tuple[str, ...]
    counts: np.ndarray
    weights: np.ndarray
    # (label, reason) for specs left out of the matrix
    excluded: tuple[tuple[str, str], ...] = field(default=())

    @property
    def costs(self) -> np.ndarray:
        return self.counts @ self.weights

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.counts, index=list(self.spec_labels), columns=list(self.constraint_names))
        frame["cost"] = self.costs
        frame.index.name = "spec"
        return frame

    def to_csv(self, path: str | Path | None = None) -> str:
        text = self.to_frame().to_csv(lineterminator="\n")
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text

    def to_json(self) -> dict[str, Any]:
        return {
            "specs": list(self.spec_labels),
            "constraints": list(self.constraint_names),
            "weights": [int(w) for w in self.weights],
            "counts": [[int(c) for c in row] for row in self.counts],
            "costs": [int(c) for c in self.costs],
            "excluded": [{"spec": label, "reason": reason} for label, reason in self.excluded],
        }


def build_matrix(
    kb: KnowledgeBase,
    specs: Sequence[Mapping[str, Any]],
    labels: Sequence[str] | None = None,
) -> DebugMatrix:
    """Soft-violation counts for every valid spec; invalid specs are listed in `excluded`."""
    if labels is None:
        labels = [f"spec{i}" for i in range(len(specs))]
    if len(labels) != len(specs):
        raise ValidationError(f"{len(labels)} labels for {len(specs)} specs")
    names = tuple(kb.soft_names)
    rows: list[list[int]] = []
    kept: list[str] = []
    excluded: list[tuple[str, str]] = []
    for label, spec in zip(labels, specs):
        try:
            facts = flatten_spec(spec)
            hard = validate(kb, facts)
            if hard:
                raise ValidationError(f"violates {', '.join(hard)}")
            vector = count_violations(kb, facts)
        except ValidationError as exc:
            log.warning("excluding %s from the debug matrix: %s", label, exc)
            excluded.append((label, str(exc)))
            continue
        kept.append(label)
        rows.append([vector[n] for n in names])
    counts = np.array(rows, dtype=np.int64).reshape(len(rows), len(names))
    weights = np.array([kb.weights[n] for n in names], dtype=np.int64)
    return DebugMatrix(
        spec_labels=tuple(kept),
        constraint_names=names,
        counts=counts,
        weights=weights,
        excluded=tuple(excluded),
    )


@dataclass(frozen=True)
class SweepResult:
    # (mark, field, channel) -> completions, cheapest first
    models: dict[tuple[str, str, str], list[CandidateModel]]
    matrix: DebugMatrix

    @property
    def empty(self) -> list[tuple[str, str, str]]:
        """Combinations without any valid completion."""
        return [combo for combo, models in self.models.items() if not models]


def sweep_spec(mark: str, field_name: str, channel: str) -> dict[str, Any]:
    return {"view": [{"mark": [{"type": mark, "encoding": [{"channel": channel, "field": field_name}]}]}]}


def design_sweep(
    kb: KnowledgeBase,
    schema: DataSchema,
    marks: Sequence[str],
    fields: Sequence[str],
    channels: Sequence[str],
    k: int = 1,
    caps: Caps | None = None,
    strategy: Strategy = "branch_and_bound",
) -> SweepResult:
    """Complete one query per mark, field and channel combination and debug all results together."""
    unknown = [name for name in fields if name not in {f.name for f in schema.fields}]
    if unknown:
        raise ValidationError(f"fields not in the schema: {', '.join(unknown)}")
    schema_facts = schema_to_facts(schema)
    models: dict[tuple[str, str, str], list[CandidateModel]] = {}
    for combo in itertools.product(marks, fields, channels):
        base = merge_facts(schema_facts, flatten_spec(sweep_spec(*combo)))
        query = Query(base=tuple(base), caps=caps or Caps(), k=k)
        models[combo] = complete_spec(kb, query, strategy)
        if not models[combo]:
            log.info("no valid completion for mark=%s field=%s channel=%s", *combo)
    labels = [f"{'-'.join(combo)}-{i}" for combo, found in models.items() for i in range(len(found))]
    specs = [m.spec for found in models.values() for m in found]
    return SweepResult(models=models, matrix=build_matrix(kb, specs, labels))


def unactivated(matrix: DebugMatrix) -> list[str]:
    """Constraints no spec in the matrix violates."""
    active = matrix.counts.sum(axis=0) > 0
    return [name for name, on in zip(matrix.constraint_names, active) if not on]


def violation_table(matrix: DebugMatrix) -> pd.DataFrame:
    """Long form: one row per nonzero (spec, constraint) cell."""
    records = []
    for i, label in enumerate(matrix.spec_labels):
        for j, name in enumerate(matrix.constraint_names):
            count = int(matrix.counts[i, j])
            if count:
                weight = int(matrix.weights[j])
                records.append(
                    {"spec": label, "constraint": name, "count": count, "weight": weight, "weighted": count * weight}
                )
    return pd.DataFrame.from_records(records, columns=["spec", "constraint", "count", "weight", "weighted"])


def _constraint_order(matrix: DebugMatrix) -> list[str]:
    # descending weight, then name
    pairs = sorted(zip(matrix.constraint_names, matrix.weights), key=lambda nw: (-int(nw[1]), nw[0]))
    return [name for name, _ in pairs]


def emit_debug_chart(matrix: DebugMatrix, size: SizePreset = "medium") -> dict[str, Any]:
    """Weights bar chart next to a spec-by-constraint heatmap, sharing the constraint axis."""
    if not matrix.spec_labels or not matrix.constraint_names:
        raise ValidationError("empty debug matrix")
    if size not in _SIZES:
        raise ValidationError(f"Unknown size preset: {size}")
    row, bar_width = _SIZES[size]
    order = _constraint_order(matrix)
    height = row * len(order)
    weights = [{"constraint": n, "weight": int(w)} for n, w in zip(matrix.constraint_names, matrix.weights)]
    cells = [
        {"constraint": name, "count": int(matrix.counts[i, j]), "spec": label}
        for i, label in enumerate(matrix.spec_labels)
        for j, name in enumerate(matrix.constraint_names)
    ]
    bar = {
        "data": {"values": weights},
        "mark": "bar",
        "encoding": {
            "x": {"field": "weight", "type": "quantitative"},
            "y": {"field": "constraint", "type": "nominal", "sort": order},
        },
        "width": bar_width,
        "height": height,
    }
    heatmap = {
        "data": {"values": cells},
        "mark": "rect",
        "encoding": {
            "x": {"field": "spec", "type": "nominal", "sort": list(matrix.spec_labels)},
            "y": {"field": "constraint", "type": "nominal", "sort": order, "axis": None},
            "color": {"field": "count", "type": "quantitative"},
        },
        "width": row * len(matrix.spec_labels),
        "height": height,
    }
    return {
        "$schema": SCHEMA_URL,
        "hconcat": [bar, heatmap],
        "resolve": {"scale": {"y": "shared"}},
    }


def save_debug_png(matrix: DebugMatrix, path: str | Path, size: SizePreset = "medium") -> None:
    """Static rendering of the debug chart."""
    if not matrix.spec_labels:
        raise ValidationError("empty debug matrix")
    order = _constraint_order(matrix)
    index = {n: j for j, n in enumerate(matrix.constraint_names)}
    cols = [index[n] for n in order]
    weights = matrix.weights[cols]
    grid = matrix.counts[:, cols].T
    row, _ = _SIZES[size]
    height = max(3.0, row * len(order) / 40)
    fig, (bar_ax, heat_ax) = plt.subplots(
        1,
        2,
        figsize=(4 + 0.4 * len(matrix.spec_labels), height),
        sharey=True,
        gridspec_kw={"width_ratios": [1, max(1, len(matrix.spec_labels) / 4)]},
    )
    positions = np.arange(len(order))
    bar_ax.barh(positions, weights, color="#4c78a8")
    bar_ax.set_yticks(positions)
    bar_ax.set_yticklabels(order, fontsize=7)
    bar_ax.set_xlabel("weight")
    image = heat_ax.imshow(grid, aspect="auto", cmap="Blues", interpolation="nearest")
    heat_ax.set_xticks(np.arange(len(matrix.spec_labels)))
    heat_ax.set_xticklabels(matrix.spec_labels, rotation=90, fontsize=7)
    fig.colorbar(image, ax=heat_ax, label="count")
    fig.tight_layout()
    fig.savefig(path, dpi=200)
    plt.close(fig)
