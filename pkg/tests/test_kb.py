import json

import pytest

from vizrec.config import DEFAULT_KB_DIR, KB_DIR_ENV_ALIAS
from vizrec.facts import flatten_spec
from vizrec.kb import (
    BlockInfo,
    KBError,
    block_source,
    dump_kb,
    filter_blocks,
    list_blocks,
    load_default_kb,
    load_kb,
    set_weight,
    with_weights,
)
from vizrec.solver import validate
from vizrec.terms import Symbol


def _bundle() -> dict[str, str]:
    return {path.name: path.read_text(encoding="utf-8") for path in DEFAULT_KB_DIR.iterdir() if path.is_file()}


def test_default_kb_shape():
    """The bundled KB declares the default domains and all its blocks."""
    kb = load_default_kb()
    assert len(kb.domains[("mark", "type")]) == 7
    assert len(kb.domains[("encoding", "channel")]) == 6
    assert len(kb.domains[("scale", "type")]) == 4
    assert len(kb.hard_names) == 18
    assert len(kb.soft_names) == 31
    assert set(kb.weights) == set(kb.soft_names)
    assert ("mark", "type") in kb.required
    assert kb.defaults[("view", "coordinates")] == Symbol("cartesian")


def test_required_properties_have_domains():
    """Every required property is declared or derived, so the bundle loads uncached."""
    kb = load_kb(DEFAULT_KB_DIR)
    assert ("field", "name") in kb.required
    assert ("field", "name") not in kb.domains
    spec = {
        "field": [{"name": "v", "type": "number"}],
        "view": [
            {
                "mark": [{"type": "tick", "encoding": [{"channel": "x", "field": "v"}]}],
                "scale": [{"channel": "x", "type": "linear"}],
            }
        ],
    }
    assert "invalid_domain" not in validate(kb, flatten_spec(spec))


def test_default_kb_is_loaded_once():
    """Repeated loads share one parsed KB."""
    assert load_default_kb() is load_default_kb()


def test_kb_env_override(tmp_path, monkeypatch):
    """DRACO_KB points the default loader at another bundle."""
    kb = filter_blocks(load_kb(), ["invalid_domain", "encoding_count"])
    dump_kb(kb, tmp_path)
    monkeypatch.delenv(KB_DIR_ENV_ALIAS, raising=False)
    monkeypatch.setenv("DRACO_KB", str(tmp_path))
    loaded = load_default_kb()
    assert loaded.hard_names == ["invalid_domain"]
    assert loaded.soft_names == ["encoding_count"]


def test_dump_and_load_round_trip(tmp_path):
    """A dumped KB loads back equal."""
    kb = load_kb()
    dump_kb(kb, tmp_path)
    assert load_kb(tmp_path) == kb


def test_missing_file_is_reported(tmp_path):
    """Every missing bundle file is listed."""
    with pytest.raises(KBError) as info:
        load_kb(tmp_path)
    assert len(info.value.problems) == 6
    assert "Missing KB file" in str(info.value)


def test_orphan_weight_is_rejected():
    """Weights must name soft blocks."""
    bundle = _bundle()
    weights = json.loads(bundle["weights.json"])
    weights["nope"] = 1
    bundle["weights.json"] = json.dumps(weights)
    with pytest.raises(KBError, match="weight nope has no soft block"):
        load_kb(bundle)


def test_empty_soft_program_is_valid():
    """A KB without soft constraints or weights loads."""
    bundle = _bundle()
    bundle["soft.lp"] = ""
    bundle["weights.json"] = "{}"
    kb = load_kb(bundle)
    assert kb.soft_names == []
    assert kb.weights == {}


@pytest.mark.parametrize(
    "role, text, message",
    [
        ("hard", "%% bad\n{ p(X): q(X) } = 1 :- r.\n", "choice rules belong in generate"),
        ("hard", "%% bad\nviolation(other) :- p.\n", "violation name must equal the block name"),
        ("soft", "%% encoding_count\nviolation(encoding_count) :- p.\n", "witness"),
        ("constraints", "%% bad\ndomain((mark,type),circle).\n", "belongs in definitions"),
        ("hard", "%% bad\nviolation(bad) :- p(X, Y.\n", "syntax error"),
        ("hard", "%% loop\nviolation(loop) :- p.\np :- not q.\nq :- p.\n", "not stratifiable"),
    ],
)
def test_invalid_bundles(role, text, message):
    """Broken blocks fail the load with a readable reason."""
    bundle = _bundle()
    if role == "soft":
        bundle["weights.json"] = json.dumps({"encoding_count": 1})
    bundle[f"{role}.lp"] = text
    with pytest.raises(KBError, match=message):
        load_kb(bundle)


def test_negative_weight_is_rejected():
    """Weights are integers >= 0."""
    bundle = _bundle()
    weights = json.loads(bundle["weights.json"])
    weights["encoding_count"] = -1
    bundle["weights.json"] = json.dumps(weights)
    with pytest.raises(KBError, match="encoding_count"):
        load_kb(bundle)


def test_filter_blocks():
    """Filtering keeps only the named hard and soft blocks."""
    kb = load_kb()
    only = filter_blocks(kb, ["invalid_domain"])
    assert only.hard_names == ["invalid_domain"]
    assert only.soft_names == []
    assert filter_blocks(kb, []).hard_names == []
    assert filter_blocks(kb, kb.hard_names + kb.soft_names) == kb
    with pytest.raises(KBError, match="unknown block"):
        filter_blocks(kb, ["nope"])


def test_set_weight():
    """Weight changes return a new KB and leave the original alone."""
    kb = load_kb()
    changed = set_weight(kb, "time_not_x", 0)
    assert changed.weights["time_not_x"] == 0
    assert kb.weights["time_not_x"] == 5
    assert set_weight(kb, "time_not_x", kb.weights["time_not_x"]) == kb
    assert with_weights(kb, {"time_not_x": 9, "encoding_count": 1}).weights["encoding_count"] == 1
    with pytest.raises(KBError):
        set_weight(kb, "invalid_domain", 1)
    with pytest.raises(KBError):
        set_weight(kb, "time_not_x", -2)


def test_list_blocks_and_source():
    """Blocks are listed with role, description and weight."""
    kb = load_kb()
    infos = list_blocks(kb)
    assert BlockInfo(
        role="hard",
        name="size_without_point_text",
        description="The size channel only works when using point or text marks.",
    ) in infos
    soft = next(info for info in infos if info.name == "time_not_x")
    assert soft.role == "soft"
    assert soft.weight == 5
    assert block_source(kb, "time_not_x").startswith("%% time_not_x\n% Prefer to use a datetime field")
    with pytest.raises(KBError):
        block_source(kb, "nope")
    assert list_blocks(filter_blocks(kb, [])) == [i for i in infos if i.role not in ("hard", "soft")]
