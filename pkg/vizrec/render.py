"""Vega-Lite output for complete chart specs."""
from __future__ import annotations

import functools
import json
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Any, Iterable, Literal, Mapping, Sequence

import jsonschema

from vizrec.validation import ValidationError

SCHEMA_URL = "https://vega.github.io/schema/vega-lite/v5.json"
SCHEMA_FILE = Path(__file__).resolve().parent / "vega_lite_v5_subset.schema.json"

EncodingType = Literal["quantitative", "temporal", "ordinal", "nominal"]

# Attributes each kind may carry; anything else is rejected so newer KBs fail loudly.
_KNOWN_ATTRIBUTES: dict[str, set[str]] = {
    "root": {"number_rows", "task"},
    "field": {"name", "type", "unique", "min", "max", "std", "freq_most_common"},
    "view": {"coordinates"},
    "mark": {"type"},
    "encoding": {"channel", "field", "aggregate", "binning", "stack"},
    "scale": {"channel", "type"},
    "facet": {"channel", "field"},
}
_KNOWN_CHILDREN: dict[str, set[str]] = {
    "root": {"field", "view"},
    "field": set(),
    "view": {"mark", "scale", "facet"},
    "mark": {"encoding"},
    "encoding": set(),
    "scale": set(),
    "facet": set(),
}
_POLAR_CHANNELS = {"x": "theta", "y": "radius"}
_FACET_CHANNELS = {"col": "column", "row": "row"}


class RenderError(ValidationError):
    def __init__(self, message: str, problems: Sequence[str] = (), index: int | None = None) -> None:
        super().__init__(message)
        self.problems = list(problems)
        self.index = index


class Renderer(ABC):
    """Turns a complete nested spec into a chart document."""

    @abstractmethod
    def render(self, spec: Mapping[str, Any], data: Sequence[Mapping[str, Any]] | None = None) -> dict[str, Any]:
        raise NotImplementedError


def infer_encoding_type(field_type: str, scale_type: str) -> EncodingType:
    if scale_type == "ordinal":
        return "ordinal"
    if scale_type == "categorical":
        return "nominal"
    if scale_type in ("linear", "log"):
        if field_type == "number":
            return "quantitative"
        if field_type == "datetime" and scale_type == "linear":
            return "temporal"
    raise RenderError(f"cannot draw a {field_type} field on a {scale_type} scale")


def _check_known(node: Mapping[str, Any], kind: str, where: str, problems: list[str]) -> None:
    for name, value in node.items():
        if isinstance(value, list):
            if name not in _KNOWN_CHILDREN[kind]:
                problems.append(f"{where}.{name}")
                continue
            for i, child in enumerate(value):
                _check_known(child, name, f"{where}.{name}[{i}]", problems)
        elif name not in _KNOWN_ATTRIBUTES[kind]:
            problems.append(f"{where}.{name}")


def _require(node: Mapping[str, Any], name: str, where: str) -> Any:
    if name not in node:
        raise RenderError(f"incomplete spec: {where} has no {name}", [f"{where}.{name}"])
    return node[name]


class VegaLiteRenderer(Renderer):
    def render(self, spec: Mapping[str, Any], data: Sequence[Mapping[str, Any]] | None = None) -> dict[str, Any]:
        problems: list[str] = []
        _check_known(spec, "root", "root", problems)
        if problems:
            raise RenderError(f"unknown attributes: {', '.join(problems)}", problems)
        field_types = {
            _require(f, "name", f"field[{i}]"): str(_require(f, "type", f"field[{i}]"))
            for i, f in enumerate(spec.get("field", []))
        }
        views = spec.get("view", [])
        if not views:
            raise RenderError("incomplete spec: no view", ["root.view"])
        docs = [self._view(view, f"view[{i}]", field_types) for i, view in enumerate(views)]
        doc: dict[str, Any] = {"$schema": SCHEMA_URL}
        if data is not None:
            doc["data"] = {"values": [dict(row) for row in data]}
        if len(docs) == 1:
            doc.update(docs[0])
        else:
            doc["vconcat"] = docs
        return doc

    def _view(self, view: Mapping[str, Any], where: str, field_types: dict[str, str]) -> dict[str, Any]:
        polar = view.get("coordinates", "cartesian") == "polar"
        scales: dict[str, str] = {}
        for i, scale in enumerate(view.get("scale", [])):
            scales[str(_require(scale, "channel", f"{where}.scale[{i}]"))] = str(
                _require(scale, "type", f"{where}.scale[{i}]")
            )
        marks = view.get("mark", [])
        if not marks:
            raise RenderError(f"incomplete spec: {where} has no mark", [f"{where}.mark"])
        units = [
            self._unit(mark, f"{where}.mark[{i}]", scales, field_types, polar) for i, mark in enumerate(marks)
        ]
        if len(units) == 1:
            inner = units[0]
        else:
            inner = {"layer": units}
            shared = _shared_channels(units)
            if shared:
                inner["resolve"] = {"scale": {ch: "shared" for ch in shared}}
        facets = view.get("facet", [])
        if not facets:
            return inner
        mapping: dict[str, Any] = {}
        for i, facet in enumerate(facets):
            channel = str(_require(facet, "channel", f"{where}.facet[{i}]"))
            name = _require(facet, "field", f"{where}.facet[{i}]")
            if name not in field_types:
                raise RenderError(f"{where}.facet[{i}] references unknown field {name}", [f"{where}.facet[{i}].field"])
            mapping[_FACET_CHANNELS.get(channel, channel)] = {
                "field": name,
                "type": "ordinal" if field_types[name] in ("number", "datetime") else "nominal",
            }
        return {"facet": mapping, "spec": inner}

    def _unit(
        self,
        mark: Mapping[str, Any],
        where: str,
        scales: dict[str, str],
        field_types: dict[str, str],
        polar: bool,
    ) -> dict[str, Any]:
        mark_type = str(_require(mark, "type", where))
        if polar:
            if mark_type != "bar":
                raise RenderError(f"{where}: polar coordinates are only drawn for bar marks", [f"{where}.type"])
            mark_type = "arc"
        encoding: dict[str, Any] = {}
        for i, enc in enumerate(mark.get("encoding", [])):
            at = f"{where}.encoding[{i}]"
            channel = str(_require(enc, "channel", at))
            out_channel = _POLAR_CHANNELS.get(channel, channel) if polar else channel
            encoding[out_channel] = self._channel(enc, at, channel, scales, field_types)
        unit: dict[str, Any] = {"mark": mark_type}
        if encoding:
            unit["encoding"] = encoding
        return unit

    def _channel(
        self,
        enc: Mapping[str, Any],
        where: str,
        channel: str,
        scales: dict[str, str],
        field_types: dict[str, str],
    ) -> dict[str, Any]:
        if channel not in scales:
            raise RenderError(f"{where}: no scale for channel {channel}", [f"{where}.channel"])
        scale_type = scales[channel]
        name = enc.get("field", "none")
        aggregate = enc.get("aggregate", "none")
        out: dict[str, Any] = {}
        if name == "none":
            if aggregate != "count":
                raise RenderError(f"{where}: an encoding without a field must count", [f"{where}.aggregate"])
            out["aggregate"] = "count"
            out["type"] = "quantitative"
        else:
            if name not in field_types:
                raise RenderError(f"{where} references unknown field {name}", [f"{where}.field"])
            out["field"] = name
            if aggregate != "none":
                out["aggregate"] = aggregate
            out["type"] = infer_encoding_type(field_types[name], scale_type)
        binning = enc.get("binning", "none")
        if binning != "none":
            out["bin"] = {"maxbins": int(binning)}
        if enc.get("stack", "none") != "none":
            out["stack"] = enc["stack"]
        if scale_type == "log":
            out["scale"] = {"type": "log"}
        return out


def _shared_channels(units: list[dict[str, Any]]) -> list[str]:
    seen: dict[str, int] = {}
    for unit in units:
        for channel in unit.get("encoding", {}):
            seen[channel] = seen.get(channel, 0) + 1
    return sorted(ch for ch, n in seen.items() if n > 1)


_DEFAULT_RENDERER = VegaLiteRenderer()


def render(
    spec: Mapping[str, Any],
    data: Sequence[Mapping[str, Any]] | None = None,
    renderer: Renderer | None = None,
) -> dict[str, Any]:
    return (renderer or _DEFAULT_RENDERER).render(spec, data)


def render_many(specs: Iterable[Mapping[str, Any]], renderer: Renderer | None = None) -> list[dict[str, Any]]:
    """Render each spec in order; the first failure is reported with its index."""
    out: list[dict[str, Any]] = []
    for i, spec in enumerate(specs):
        try:
            out.append(render(spec, renderer=renderer))
        except RenderError as exc:
            raise RenderError(f"spec {i}: {exc}", exc.problems, index=i) from None
    return out


def dumps_chart(doc: Mapping[str, Any]) -> str:
    return json.dumps(doc, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


@functools.cache
def _chart_schema() -> dict[str, Any]:
    return json.loads(SCHEMA_FILE.read_text(encoding="utf-8"))


def validate_chart(doc: Mapping[str, Any]) -> None:
    """Check a document against the bundled Vega-Lite v5 subset schema."""
    validator = jsonschema.Draft7Validator(_chart_schema())
    errors = sorted(validator.iter_errors(doc), key=lambda e: [str(p) for p in e.absolute_path])
    if errors:
        problems = [f"{'/'.join(str(p) for p in e.absolute_path) or '<root>'}: {e.message}" for e in errors]
        raise RenderError(f"invalid chart document: {problems[0]}", problems)
