from __future__ import annotations

import csv
import io
import json
import logging
import re
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Literal, TextIO

import numpy as np
import pandas as pd

from vizrec.facts import AttributeFact, EntityFact, Fact
from vizrec.terms import ROOT, Symbol
from vizrec.validation import ValidationError

log = logging.getLogger(__name__)

FieldType = Literal["number", "string", "boolean", "datetime"]

_ISO_DATE = re.compile(r"\d{4}-\d{2}-\d{2}([T ]\d{2}:\d{2}(:\d{2}(\.\d+)?)?(Z|[+-]\d{2}:?\d{2})?)?\Z")


class SchemaError(ValidationError):
    pass


@dataclass(frozen=True)
class FieldSchema:
    name: str
    type: FieldType
    unique: int
    freq_most_common: int
    # Number fields only.
    min: int | None = None
    max: int | None = None
    std: int | None = None


@dataclass(frozen=True)
class DataSchema:
    number_rows: int
    fields: tuple[FieldSchema, ...] = ()

    def field(self, name: str) -> FieldSchema:
        for f in self.fields:
            if f.name == name:
                return f
        raise KeyError(name)

    def to_dict(self) -> dict[str, Any]:
        return {
            "number_rows": self.number_rows,
            "fields": [{k: v for k, v in asdict(f).items() if v is not None} for f in self.fields],
        }

    @staticmethod
    def from_dict(raw: dict[str, Any]) -> "DataSchema":
        if not isinstance(raw, dict):
            raise SchemaError("schema must be an object")
        rows = raw.get("number_rows", 0)
        if isinstance(rows, bool) or not isinstance(rows, int) or rows < 0:
            raise SchemaError(f"number_rows must be an integer >= 0 (got {rows!r})")
        fields: list[FieldSchema] = []
        for item in raw.get("fields", []):
            try:
                fields.append(
                    FieldSchema(
                        name=str(item["name"]),
                        type=_normalize_type(item["type"]),
                        unique=int(item.get("unique", 0)),
                        freq_most_common=int(item.get("freq_most_common", 0)),
                        min=item.get("min"),
                        max=item.get("max"),
                        std=item.get("std"),
                    )
                )
            except (KeyError, TypeError) as exc:
                raise SchemaError(f"bad field entry {item!r}: {exc}") from None
        _check_unique_names([f.name for f in fields])
        return DataSchema(number_rows=rows, fields=tuple(fields))


def _normalize_type(raw: Any) -> FieldType:
    if raw in ("number", "string", "boolean", "datetime"):
        return raw
    raise SchemaError(f"Unknown field type: {raw}")


def _check_unique_names(names: list[str]) -> None:
    seen: set[str] = set()
    dupes = sorted({n for n in names if n in seen or seen.add(n)})
    if dupes:
        raise SchemaError(f"duplicate column names: {', '.join(dupes)}")


def _read_raw(source: str | Path | TextIO) -> pd.DataFrame:
    if isinstance(source, (str, Path)):
        path = Path(source)
        if not path.exists():
            raise SchemaError(f"Missing data file: {path}")
        text = path.read_text(encoding="utf-8-sig")
    else:
        text = source.read()
    _check_row_widths(text)
    try:
        return pd.read_csv(io.StringIO(text), header=None, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        raise SchemaError("empty file") from None
    except pd.errors.ParserError as exc:
        raise SchemaError(f"ragged rows: {exc}") from None


def _check_row_widths(text: str) -> None:
    # Short rows come back from pandas padded with "" when NA parsing is off.
    reader = csv.reader(io.StringIO(text))
    width = None
    for record in reader:
        if not record:
            continue
        if width is None:
            width = len(record)
        elif len(record) != width:
            side = "few" if len(record) < width else "many"
            raise SchemaError(f"ragged rows: line {reader.line_num} has too {side} fields")


def infer_schema(source: str | Path | TextIO) -> DataSchema:
    """Read a CSV with a header row and infer field types and statistics."""
    raw = _read_raw(source)
    header = [str(v) for v in raw.iloc[0]]
    _check_unique_names(header)
    body = raw.iloc[1:].reset_index(drop=True)
    body.columns = header
    schema = schema_from_dataframe(body)
    log.info("inferred schema: %d rows, %d fields", schema.number_rows, len(schema.fields))
    return schema


def infer_schema_text(text: str) -> DataSchema:
    return infer_schema(io.StringIO(text))


def schema_from_dataframe(frame: pd.DataFrame) -> DataSchema:
    """Schema of a frame; cells are read through their string form, empty cells are missing."""
    names = [str(c) for c in frame.columns]
    _check_unique_names(names)
    fields = tuple(_field_schema(name, frame[col]) for name, col in zip(names, frame.columns))
    return DataSchema(number_rows=len(frame), fields=fields)


def _field_schema(name: str, column: pd.Series) -> FieldSchema:
    values = column.map(lambda v: "" if pd.isna(v) else str(v))
    values = values[values != ""]
    kind, parsed = _infer_type(values)
    counts = parsed.value_counts()
    unique = int(len(counts))
    freq = int(counts.iloc[0]) if unique else 0
    if kind != "number" or not unique:
        return FieldSchema(name=name, type=kind, unique=unique, freq_most_common=freq)
    numbers = parsed.to_numpy(dtype=float)
    return FieldSchema(
        name=name,
        type=kind,
        unique=unique,
        freq_most_common=freq,
        min=_round_half_up(numbers.min()),
        max=_round_half_up(numbers.max()),
        std=_round_half_up(numbers.std(ddof=0)),
    )


def _infer_type(values: pd.Series) -> tuple[FieldType, pd.Series]:
    """Priority: boolean, number, ISO date/datetime, string."""
    if values.empty:
        return "string", values
    lowered = values.str.lower()
    if lowered.isin(["true", "false"]).all():
        return "boolean", lowered
    numbers = pd.to_numeric(values, errors="coerce")
    if numbers.notna().all() and np.isfinite(numbers.to_numpy(dtype=float)).all():
        return "number", numbers
    if values.map(lambda v: bool(_ISO_DATE.match(v))).all():
        stamps = pd.to_datetime(values, errors="coerce", format="ISO8601")
        if stamps.notna().all():
            return "datetime", stamps
    return "string", values


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def schema_to_facts(schema: DataSchema) -> list[Fact]:
    facts: list[Fact] = [AttributeFact(("number_rows",), ROOT, schema.number_rows)]
    for i, f in enumerate(schema.fields):
        fid = Symbol(f"f{i}")
        facts.append(EntityFact("field", ROOT, fid))
        facts.append(AttributeFact(("field", "name"), fid, f.name))
        facts.append(AttributeFact(("field", "type"), fid, Symbol(f.type)))
        facts.append(AttributeFact(("field", "unique"), fid, f.unique))
        if f.type == "number" and f.min is not None:
            facts.append(AttributeFact(("field", "min"), fid, f.min))
            facts.append(AttributeFact(("field", "max"), fid, f.max))
            facts.append(AttributeFact(("field", "std"), fid, f.std))
    return facts


def load_schema(path: str | Path) -> DataSchema:
    """Read a schema from JSON, or infer it when given a CSV file."""
    p = Path(path)
    if not p.exists():
        raise SchemaError(f"Missing schema file: {p}")
    if p.suffix.lower() == ".csv":
        return infer_schema(p)
    try:
        raw = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{p}: {exc}") from None
    return DataSchema.from_dict(raw)
