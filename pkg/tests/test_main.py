import json
from pathlib import Path

from vizrec.main import main


CONFIGS = Path(__file__).resolve().parents[1] / "configs"
GOLDEN = Path(__file__).resolve().parent / "golden"

CIRCLE = {
    "view": [
        {
            "mark": [{"type": "circle", "encoding": [{"channel": "x", "aggregate": "count"}]}],
            "scale": [{"channel": "x", "type": "linear"}],
        }
    ]
}


def _write(path: Path, value) -> str:
    path.write_text(json.dumps(value), encoding="utf-8")
    return str(path)


def test_validate_valid_spec(capsys):
    """A valid spec prints `valid` and exits 0."""
    assert main(["validate", str(CONFIGS / "bar_chart.json")]) == 0
    assert capsys.readouterr().out == "valid\n"


def test_validate_lists_violations(tmp_path, capsys):
    """Hard violations are printed one per line with exit code 1."""
    assert main(["validate", _write(tmp_path / "circle.json", CIRCLE)]) == 1
    assert capsys.readouterr().out == "invalid_domain\n"


def test_validate_input_errors(tmp_path, capsys):
    """Missing files, bad JSON and incomplete specs are usage errors."""
    assert main(["validate", str(tmp_path / "nope.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{", encoding="utf-8")
    assert main(["validate", str(bad)]) == 2
    assert main(["validate", str(CONFIGS / "schema_only.json")]) == 2
    assert "error:" in capsys.readouterr().err


def test_usage_errors():
    """Argument errors exit with 2."""
    assert main([]) == 2
    assert main(["validate"]) == 2
    assert main(["debug", "x", "--size", "huge"]) == 2


def test_schema_command(tmp_path, capsys):
    """The schema of a CSV is printed and optionally written."""
    out = tmp_path / "schema.json"
    assert main(["schema", str(CONFIGS / "seattle_weather.csv"), "-o", str(out)]) == 0
    printed = json.loads(capsys.readouterr().out)
    assert printed["number_rows"] == 30
    assert json.loads(out.read_text(encoding="utf-8")) == printed
    assert main(["schema", str(tmp_path / "nope.csv")]) == 1


def test_complete_writes_manifest(tmp_path, capsys):
    """Completions are written one file each with a manifest."""
    out = tmp_path / "out"
    code = main(
        [
            "complete",
            str(CONFIGS / "schema_only.json"),
            "--schema",
            str(CONFIGS / "seattle_weather.csv"),
            "-k",
            "2",
            "-o",
            str(out),
        ]
    )
    assert code == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines == ["0\t4\tspec_0.json", "1\t4\tspec_1.json"]
    manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
    assert [entry["file"] for entry in manifest] == ["spec_0.json", "spec_1.json"]
    assert [entry["cost"] for entry in manifest] == [4, 4]
    spec = json.loads((out / "spec_0.json").read_text(encoding="utf-8"))
    assert spec["view"][0]["mark"][0]["type"] == "point"


def test_complete_without_result(tmp_path, capsys):
    """An unsatisfiable query still succeeds, with an empty manifest and a warning."""
    out = tmp_path / "out"
    assert main(["complete", str(CONFIGS / "line_size.json"), "-o", str(out)]) == 0
    assert json.loads((out / "manifest.json").read_text(encoding="utf-8")) == []
    assert "no valid completion" in capsys.readouterr().err


def test_complete_with_hint(tmp_path, capsys):
    """Hint files narrow the completions."""
    schema = _write(
        tmp_path / "schema.json",
        {
            "number_rows": 3,
            "fields": [{"name": "v", "type": "number", "unique": 3, "freq_most_common": 1, "min": 0, "max": 9, "std": 3}],
        },
    )
    out = tmp_path / "out"
    args = ["complete", str(CONFIGS / "schema_only.json"), "--schema", schema, "--hint", str(CONFIGS / "three_encodings.lp")]
    assert main(args + ["-k", "1", "-o", str(out)]) == 0
    assert capsys.readouterr().out.startswith("0\t")
    spec = json.loads((out / "spec_0.json").read_text(encoding="utf-8"))
    assert len(spec["view"][0]["mark"][0]["encoding"]) >= 3


def test_complete_bad_hint(tmp_path):
    """Hint files that do not parse are usage errors."""
    hint = tmp_path / "hint.lp"
    hint.write_text(":- p(X", encoding="utf-8")
    assert main(["complete", str(CONFIGS / "schema_only.json"), "--hint", str(hint), "-o", str(tmp_path)]) == 2


def test_render_command(tmp_path, capsys):
    """Rendering prints the Vega-Lite document."""
    assert main(["render", str(CONFIGS / "bar_chart.json")]) == 0
    assert capsys.readouterr().out == (GOLDEN / "bar.vl.json").read_text(encoding="utf-8")
    data = tmp_path / "rows.csv"
    data.write_text("weather\nsun\nrain\n", encoding="utf-8")
    out = tmp_path / "chart.json"
    assert main(["render", str(CONFIGS / "bar_chart.json"), "--data", str(data), "-o", str(out)]) == 0
    doc = json.loads(out.read_text(encoding="utf-8"))
    assert doc["data"] == {"values": [{"weather": "sun"}, {"weather": "rain"}]}


def test_render_unknown_attribute(tmp_path, capsys):
    """Specs the renderer cannot express are usage errors."""
    spec = json.loads((CONFIGS / "bar_chart.json").read_text(encoding="utf-8"))
    spec["view"][0]["mark"][0]["opacity"] = 1
    assert main(["render", _write(tmp_path / "spec.json", spec)]) == 2
    assert "opacity" in capsys.readouterr().err


def test_debug_command(tmp_path, capsys):
    """The debug command writes the matrix and a chart and prints a summary."""
    specs = tmp_path / "specs"
    specs.mkdir()
    (specs / "bar.json").write_text((CONFIGS / "bar_chart.json").read_text(encoding="utf-8"), encoding="utf-8")
    (specs / "line_size.json").write_text((CONFIGS / "line_size.json").read_text(encoding="utf-8"), encoding="utf-8")
    matrix = tmp_path / "matrix.csv"
    chart = tmp_path / "chart.vl.json"
    assert main(["debug", str(specs), "-o", str(matrix), "--chart", str(chart), "--size", "small"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("specs=1 excluded=1 unactivated=")
    assert out.rstrip().endswith("/31")
    assert matrix.read_text(encoding="utf-8").splitlines()[1].startswith("bar,")
    assert "hconcat" in json.loads(chart.read_text(encoding="utf-8"))


def test_learn_command(tmp_path, capsys):
    """Learned weights are exported as integers."""
    zeros = [0] * 31
    worse = list(zeros)
    worse[0] = 1
    pairs = _write(tmp_path / "pairs.json", [{"better": zeros, "worse": worse}])
    out = tmp_path / "weights.json"
    assert main(["learn", pairs, "-o", str(out), "--seed", "3"]) == 0
    assert capsys.readouterr().out == "pair_accuracy=1.0000\n"
    weights = json.loads(out.read_text(encoding="utf-8"))
    assert max(weights.values()) == 10
    assert main(["learn", str(tmp_path / "nope.json")]) == 1


def test_kb_commands(tmp_path, capsys):
    """Blocks can be listed and shown; a bad KB directory fails."""
    assert main(["kb", "list"]) == 0
    out = capsys.readouterr().out
    assert "soft\ttime_not_x\t5\t" in out
    assert "hard\tinvalid_domain\t" in out
    assert main(["kb", "show", "time_not_x"]) == 0
    assert capsys.readouterr().out.startswith("%% time_not_x\n")
    assert main(["kb", "show", "nope"]) == 1
    assert main(["--kb", str(tmp_path), "kb", "list"]) == 1


def test_bad_config(tmp_path):
    """Out-of-range config values exit with 1."""
    config = _write(tmp_path / "engine.json", {"solver": {"k": 0}})
    assert main(["--config", config, "validate", str(CONFIGS / "bar_chart.json")]) == 1
