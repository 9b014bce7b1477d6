import json
from pathlib import Path

import pytest

from vizrec.config import EngineConfig
from vizrec.data import infer_schema
from vizrec.debug import build_matrix, emit_debug_chart, save_debug_png, unactivated, violation_table
from vizrec.engine import Engine
from vizrec.kb import filter_blocks, load_default_kb
from vizrec.render import dumps_chart, validate_chart
from vizrec.validation import ValidationError


CONFIGS = Path(__file__).resolve().parents[1] / "configs"
GOLDEN = Path(__file__).resolve().parent / "golden"


@pytest.fixture(scope="module")
def corpus():
    engine = Engine()
    schema = infer_schema(CONFIGS / "seattle_weather.csv")
    spec = json.loads((CONFIGS / "schema_only.json").read_text(encoding="utf-8"))
    models = engine.complete_spec(spec, schema=schema, k=20)
    return engine, models


def test_matrix_rows_match_counts(corpus):
    """Each row is the spec's violation vector and each cost its weighted sum."""
    engine, models = corpus
    assert len(models) == 20
    matrix = build_matrix(engine.kb, [m.spec for m in models])
    assert matrix.counts.shape == (20, len(engine.kb.soft_names))
    assert matrix.excluded == ()
    for i, model in enumerate(models):
        row = {name: int(c) for name, c in zip(matrix.constraint_names, matrix.counts[i]) if c}
        assert row == model.violations
        assert int(matrix.costs[i]) == model.cost


def test_unactivated_is_a_strict_subset(corpus):
    """Some constraints stay quiet on a small corpus, but not all of them."""
    engine, models = corpus
    matrix = build_matrix(engine.kb, [m.spec for m in models])
    quiet = unactivated(matrix)
    assert quiet
    assert set(quiet) < set(engine.kb.soft_names)
    assert "encoding_count" not in quiet


def test_debug_chart_structure(corpus):
    """The chart pairs a weights bar with a heatmap on a shared constraint axis."""
    engine, models = corpus
    labels = [f"m{i}" for i in range(5)]
    matrix = build_matrix(engine.kb, [m.spec for m in models[:5]], labels)
    doc = emit_debug_chart(matrix, "small")
    validate_chart(doc)
    bar, heatmap = doc["hconcat"]
    assert bar["mark"] == "bar"
    assert heatmap["mark"] == "rect"
    assert doc["resolve"] == {"scale": {"y": "shared"}}
    assert len(bar["data"]["values"]) == len(engine.kb.soft_names)
    assert len(heatmap["data"]["values"]) == 5 * len(engine.kb.soft_names)
    assert bar["width"] == 80
    assert bar["height"] == 12 * len(engine.kb.soft_names)
    order = bar["encoding"]["y"]["sort"]
    assert order[:2] == ["same_field_twice", "high_cardinality_color"]
    assert heatmap["encoding"]["y"]["sort"] == order
    assert heatmap["encoding"]["x"]["sort"] == labels


def test_size_presets(corpus):
    """Larger presets give taller rows."""
    engine, models = corpus
    matrix = build_matrix(engine.kb, [models[0].spec])
    heights = [emit_debug_chart(matrix, size)["hconcat"][0]["height"] for size in ("small", "medium", "large")]
    assert heights == sorted(heights)
    with pytest.raises(ValidationError, match="size preset"):
        emit_debug_chart(matrix, "huge")


def test_invalid_specs_are_excluded():
    """Specs that fail hard constraints are left out with a reason."""
    engine = Engine()
    bar = json.loads((CONFIGS / "bar_chart.json").read_text(encoding="utf-8"))
    line_size = json.loads((CONFIGS / "line_size.json").read_text(encoding="utf-8"))
    matrix = build_matrix(engine.kb, [bar, line_size], ["bar", "line_size"])
    assert matrix.spec_labels == ("bar",)
    assert [label for label, _ in matrix.excluded] == ["line_size"]
    assert "size_without_point_text" in matrix.excluded[0][1]
    assert int(matrix.costs[0]) == engine.spec_cost(bar) == 11


def test_empty_matrix():
    """No valid specs means no chart."""
    engine = Engine()
    matrix = build_matrix(engine.kb, [])
    assert matrix.counts.shape == (0, len(engine.kb.soft_names))
    with pytest.raises(ValidationError, match="empty"):
        emit_debug_chart(matrix)
    with pytest.raises(ValidationError, match="labels"):
        build_matrix(engine.kb, [{}], ["a", "b"])


def test_exports(tmp_path):
    """The matrix exports as CSV, JSON and a long table."""
    engine = Engine()
    bar = json.loads((CONFIGS / "bar_chart.json").read_text(encoding="utf-8"))
    matrix = build_matrix(engine.kb, [bar], ["bar"])
    text = matrix.to_csv(tmp_path / "matrix.csv")
    header = text.splitlines()[0].split(",")
    assert header[0] == "spec"
    assert header[-1] == "cost"
    assert text.splitlines()[1].startswith("bar,")
    assert text.splitlines()[1].endswith(",11")
    assert (tmp_path / "matrix.csv").read_text(encoding="utf-8") == text
    raw = matrix.to_json()
    assert raw["specs"] == ["bar"]
    assert raw["costs"] == [11]
    table = violation_table(matrix)
    assert int(table["weighted"].sum()) == 11
    assert (table["count"] > 0).all()


def test_png_output(tmp_path):
    """A static PNG is written for the matrix."""
    engine = Engine()
    bar = json.loads((CONFIGS / "bar_chart.json").read_text(encoding="utf-8"))
    path = tmp_path / "debug.png"
    save_debug_png(build_matrix(engine.kb, [bar, bar], ["a", "b"]), path)
    assert path.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def _date_spec(channel: str) -> dict:
    return {
        "field": [{"name": "date", "type": "datetime", "unique": 30}],
        "view": [
            {
                "mark": [{"type": "point", "encoding": [{"channel": channel, "field": "date"}]}],
                "scale": [{"channel": channel, "type": "linear"}],
            }
        ],
    }


def test_debug_chart_golden():
    """A two-spec, four-constraint chart matches the stored document."""
    kb = filter_blocks(load_default_kb(), ["invalid_domain", "encoding_count", "time_not_x", "mark_point", "y_without_x"])
    matrix = build_matrix(kb, [_date_spec("x"), _date_spec("y")], ["date_on_x", "date_on_y"])
    assert matrix.counts.tolist() == [[1, 0, 1, 0], [1, 1, 1, 1]]
    doc = emit_debug_chart(matrix, "small")
    validate_chart(doc)
    assert dumps_chart(doc) == (GOLDEN / "debug_small.vl.json").read_text(encoding="utf-8")


def test_design_sweep_reports_empty_combinations():
    """Line marks cannot use size, so those combinations have no completion; the rest feed the matrix."""
    engine = Engine(config=EngineConfig.from_dict({"solver": {"max_added_encodings": 1}}))
    schema = infer_schema(CONFIGS / "seattle_weather.csv")
    result = engine.sweep(schema, ["line", "point"], ["date", "weather"], ["size"])
    assert list(result.models) == [
        ("line", "date", "size"),
        ("line", "weather", "size"),
        ("point", "date", "size"),
        ("point", "weather", "size"),
    ]
    assert result.empty == [("line", "date", "size"), ("line", "weather", "size")]
    assert result.matrix.spec_labels == ("point-date-size-0", "point-weather-size-0")
    assert result.matrix.excluded == ()
    top = result.models[("point", "date", "size")][0]
    encodings = top.spec["view"][0]["mark"][0]["encoding"]
    assert any(e["channel"] == "size" and e.get("field") == "date" for e in encodings)
    assert "size_without_point_text" in engine.get_violations(
        {
            "field": [{"name": "date", "type": "datetime"}],
            "view": [
                {
                    "mark": [{"type": "line", "encoding": [{"channel": "size", "field": "date"}]}],
                    "scale": [{"channel": "size", "type": "linear"}],
                }
            ],
        }
    )
    with pytest.raises(ValidationError, match="temp_min"):
        engine.sweep(schema, ["point"], ["temp_min"], ["color"])
