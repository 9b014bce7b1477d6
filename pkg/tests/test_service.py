import json
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import pytest

from vizrec.config import EngineConfig
from vizrec.data import DataSchema, infer_schema, infer_schema_text
from vizrec.debug import emit_debug_chart
from vizrec.engine import Engine
from vizrec.render import render
from vizrec.service import create_app, model_to_json


CONFIGS = Path(__file__).resolve().parents[1] / "configs"

SCATTER = {
    "field": [
        {"name": "temp_max", "type": "number", "unique": 28, "min": -2, "max": 16, "std": 4},
        {"name": "wind", "type": "number", "unique": 25, "min": 1, "max": 9, "std": 2},
    ],
    "view": [
        {
            "mark": [{"type": "point", "encoding": [{"channel": "x", "field": "temp_max"}, {"channel": "y", "field": "wind"}]}],
            "scale": [{"channel": "x", "type": "linear"}, {"channel": "y", "type": "linear"}],
        }
    ],
}

CIRCLE = {
    "view": [
        {
            "mark": [{"type": "circle", "encoding": [{"channel": "x", "aggregate": "count"}]}],
            "scale": [{"channel": "x", "type": "linear"}],
        }
    ]
}

TICK_SKELETON = {
    "field": [{"name": "v", "type": "number", "unique": 3, "min": 0, "max": 9, "std": 3}],
    "view": [{"mark": [{"type": "tick"}]}],
}

FACET_SKELETON = {"view": [{"facet": [{"channel": "col", "field": "weather"}], "mark": [{}]}]}

WEATHER_CSV = "weather,wind\nsun,3\nrain,5\nsun,4\n"


def _load(name: str):
    return json.loads((CONFIGS / name).read_text(encoding="utf-8"))


@pytest.fixture(scope="module")
def engine():
    return Engine()


@pytest.fixture(scope="module")
def client(engine):
    app = create_app(engine)
    app.testing = True
    return app.test_client()


def test_validate_endpoint(client, engine):
    """/validate returns the library's hard violations."""
    bar = _load("bar_chart.json")
    response = client.post("/validate", json={"spec": bar})
    assert response.status_code == 200
    assert response.get_json() == {"hard_violations": engine.get_violations(bar)}
    line = {"view": [{"mark": [{"type": "line", "encoding": [{"channel": "size", "aggregate": "count"}]}], "scale": [{"channel": "size", "type": "linear"}]}]}
    assert "size_without_point_text" in client.post("/validate", json={"spec": line}).get_json()["hard_violations"]


def test_complete_endpoint(client, engine):
    """/complete matches a library completion of the same query."""
    schema = infer_schema(CONFIGS / "seattle_weather.csv")
    spec = _load("schema_only.json")
    response = client.post("/complete", json={"spec": spec, "schema": schema.to_dict(), "k": 2})
    assert response.status_code == 200
    expected = [model_to_json(m) for m in engine.complete_spec(spec, schema=schema, k=2)]
    assert response.get_json() == {"models": json.loads(json.dumps(expected))}
    assert [m["cost"] for m in response.get_json()["models"]] == [4, 4]


def test_schema_endpoint(client):
    """/schema takes CSV text."""
    text = (CONFIGS / "seattle_weather.csv").read_text(encoding="utf-8")
    response = client.post("/schema", data=text, content_type="text/csv")
    assert response.status_code == 200
    assert response.get_json() == infer_schema(CONFIGS / "seattle_weather.csv").to_dict()
    assert client.post("/schema", data="", content_type="text/csv").status_code == 400


def test_render_endpoint(client):
    """/render returns the same document as the library."""
    bar = _load("bar_chart.json")
    response = client.post("/render", json={"spec": bar, "data": [{"weather": "sun"}]})
    assert response.get_json() == render(bar, [{"weather": "sun"}])


def test_debug_endpoint(client):
    """/debug returns the matrix and the chart."""
    bar = _load("bar_chart.json")
    response = client.post("/debug", json={"specs": [bar, _load("line_size.json")], "labels": ["bar", "line"]})
    body = response.get_json()
    assert body["matrix"]["specs"] == ["bar"]
    assert body["matrix"]["costs"] == [11]
    assert body["matrix"]["excluded"][0]["spec"] == "line"
    assert "hconcat" in body["chart"]
    empty = client.post("/debug", json={"specs": []}).get_json()
    assert empty["chart"] is None


def test_kb_endpoint(client, engine):
    """GET /kb lists every block."""
    blocks = client.get("/kb").get_json()["blocks"]
    names = {b["name"] for b in blocks}
    assert set(engine.kb.hard_names) <= names
    assert set(engine.kb.soft_names) <= names
    assert next(b for b in blocks if b["name"] == "time_not_x")["weight"] == 5


@pytest.mark.parametrize(
    "path, payload",
    [
        ("/validate", {}),
        ("/validate", {"other": 1}),
        ("/complete", {"k": 1}),
        ("/complete", {"spec": {}, "k": "two"}),
        ("/debug", {"specs": "nope"}),
    ],
)
def test_bad_requests(client, path, payload):
    """Malformed bodies are 400s with an error message."""
    response = client.post(path, json=payload)
    assert response.status_code == 400
    assert "error" in response.get_json()


def test_non_json_body(client):
    """Bodies that are not JSON objects are rejected."""
    response = client.post("/validate", data="[1, 2]", content_type="application/json")
    assert response.status_code == 400


def test_validation_errors_are_422(client):
    """Library validation failures carry a structured detail."""
    response = client.post("/validate", json={"spec": _load("schema_only.json")})
    assert response.status_code == 422
    body = response.get_json()
    assert body["detail"]["type"] == "IncompleteSpecError"
    assert body["detail"]["missing"] == [["m0", "mark.type"]]
    response = client.post("/render", json={"spec": {"view": [{"mark": [{"type": "bar", "blob": 1}]}]}})
    assert response.status_code == 422
    assert response.get_json()["detail"]["problems"] == ["root.view[0].mark[0].blob"]


def test_body_size_limit(engine):
    """Bodies over the configured limit are refused."""
    config = EngineConfig.from_dict({"service": {"max_content_length": 64}})
    app = create_app(engine, config)
    response = app.test_client().post("/validate", json={"spec": _load("bar_chart.json")})
    assert response.status_code == 413


def _plain(value):
    return json.loads(json.dumps(value))


def _library_answer(engine, path: str, payload):
    """What the library returns for the request the service gets."""
    if path == "/validate":
        return {"hard_violations": engine.get_violations(payload["spec"])}
    if path == "/complete":
        schema = DataSchema.from_dict(payload["schema"]) if "schema" in payload else None
        models = engine.complete_spec(payload["spec"], schema=schema, k=payload["k"])
        return {"models": _plain([model_to_json(m) for m in models])}
    if path == "/render":
        return _plain(render(payload["spec"], payload.get("data")))
    if path == "/debug":
        matrix = engine.debug(payload["specs"], payload.get("labels"))
        return _plain({"matrix": matrix.to_json(), "chart": emit_debug_chart(matrix) if matrix.spec_labels else None})
    if path == "/schema":
        return infer_schema_text(payload).to_dict()
    raise AssertionError(path)


def _post(client, path: str, payload):
    if path == "/schema":
        return client.post(path, data=payload, content_type="text/csv")
    return client.post(path, json=payload)


def _requests():
    schema = infer_schema(CONFIGS / "seattle_weather.csv").to_dict()
    return [
        ("/validate", {"spec": _load("bar_chart.json")}),
        ("/validate", {"spec": SCATTER}),
        ("/validate", {"spec": CIRCLE}),
        ("/validate", {"spec": _load("line_size.json")}),
        ("/complete", {"spec": TICK_SKELETON, "k": 2}),
        ("/complete", {"spec": _load("schema_only.json"), "schema": schema, "k": 2}),
        ("/complete", {"spec": FACET_SKELETON, "schema": schema, "k": 2}),
        ("/render", {"spec": _load("bar_chart.json")}),
        ("/render", {"spec": SCATTER, "data": [{"temp_max": 3, "wind": 2}]}),
        ("/debug", {"specs": [_load("bar_chart.json"), SCATTER], "labels": ["bar", "scatter"]}),
        ("/debug", {"specs": [SCATTER, _load("line_size.json")]}),
        ("/schema", WEATHER_CSV),
        ("/schema", (CONFIGS / "seattle_weather.csv").read_text(encoding="utf-8")),
    ]


@pytest.mark.parametrize("index", range(13))
def test_endpoint_matches_library(client, engine, index):
    """Each endpoint answers exactly what the library computes for the same input."""
    path, payload = _requests()[index]
    response = _post(client, path, payload)
    assert response.status_code == 200
    assert response.get_json() == _library_answer(engine, path, payload)


def test_concurrent_mixed_requests(engine):
    """A parallel burst across endpoints gets the single-request answers."""
    app = create_app(engine)
    requests = _requests()
    expected = [_library_answer(engine, path, payload) for path, payload in requests]
    order = [i % len(requests) for i in range(26)]

    def call(i):
        path, payload = requests[i]
        response = _post(app.test_client(), path, payload)
        return response.status_code, response.get_json()

    with ThreadPoolExecutor(max_workers=8) as pool:
        results = list(pool.map(call, order))
    assert results == [(200, expected[i]) for i in order]
