from __future__ import annotations

from typing import Any, Mapping, Sequence, Union

from vizrec import debug as debug_mod
from vizrec import render as render_mod
from vizrec import solver
from vizrec.aspmini import Program, parse_program
from vizrec.config import EngineConfig
from vizrec.data import DataSchema, schema_to_facts
from vizrec.facts import EntityFact, Fact, flatten_spec, merge_facts, parse_facts
from vizrec.kb import KnowledgeBase, load_default_kb, load_kb, with_weights
from vizrec.validation import ValidationError


# A nested spec, a fact list, or fact text.
SpecInput = Union[Mapping[str, Any], Sequence[Fact], str]


def to_facts(spec: SpecInput) -> list[Fact]:
    if isinstance(spec, str):
        return parse_facts(spec)
    if isinstance(spec, Mapping):
        return flatten_spec(spec)
    return list(spec)


class Engine:
    """A knowledge base plus solver settings, with the common operations on specs."""

    def __init__(self, kb: KnowledgeBase | None = None, config: EngineConfig | None = None) -> None:
        self.config = config or EngineConfig()
        if kb is None:
            kb = load_kb(self.config.kb_path) if self.config.kb_path is not None else load_default_kb()
        self.kb = kb

    def _kb(self, weights: Mapping[str, int] | None) -> KnowledgeBase:
        return with_weights(self.kb, weights) if weights else self.kb

    def _caps(self) -> solver.Caps:
        cfg = self.config.solver
        return solver.Caps(max_added_encodings=cfg.max_added_encodings, allow_new_entities=cfg.allow_new_entities)

    def get_violations(self, spec: SpecInput) -> list[str]:
        return solver.validate(self.kb, to_facts(spec))

    def check_spec(self, spec: SpecInput) -> bool:
        return not self.get_violations(spec)

    def count_spec(self, spec: SpecInput) -> dict[str, int]:
        return solver.count_violations(self.kb, to_facts(spec))

    def spec_cost(self, spec: SpecInput, weights: Mapping[str, int] | None = None) -> int:
        kb = self._kb(weights)
        return solver.cost(kb.weights, solver.count_violations(kb, to_facts(spec)))

    def build_query(
        self,
        spec: SpecInput | None = None,
        schema: DataSchema | None = None,
        hints: Program | str | None = None,
        k: int | None = None,
    ) -> solver.Query:
        facts = to_facts(spec) if spec is not None else []
        if schema is not None:
            if any(isinstance(f, EntityFact) and f.kind == "field" for f in facts):
                raise ValidationError("the spec lists fields already; pass either fields or a schema")
            facts = merge_facts(schema_to_facts(schema), facts)
        if isinstance(hints, str):
            hints = parse_program(hints)
        return solver.Query(
            base=tuple(facts),
            extra_rules=hints or Program(),
            caps=self._caps(),
            k=self.config.solver.k if k is None else k,
        )

    def complete_spec(
        self,
        spec: SpecInput | None = None,
        schema: DataSchema | None = None,
        hints: Program | str | None = None,
        k: int | None = None,
        weights: Mapping[str, int] | None = None,
    ) -> list[solver.CandidateModel]:
        query = self.build_query(spec, schema, hints, k)
        return solver.complete_spec(self._kb(weights), query, strategy=self.config.solver.strategy)

    def render(self, spec: Mapping[str, Any], data: Sequence[Mapping[str, Any]] | None = None) -> dict[str, Any]:
        return render_mod.render(spec, data)

    def debug(self, specs: Sequence[Mapping[str, Any]], labels: Sequence[str] | None = None) -> debug_mod.DebugMatrix:
        return debug_mod.build_matrix(self.kb, specs, labels)

    def sweep(
        self,
        schema: DataSchema,
        marks: Sequence[str],
        fields: Sequence[str],
        channels: Sequence[str],
        k: int = 1,
    ) -> debug_mod.SweepResult:
        """One completion query per mark, field and channel combination, debugged together."""
        return debug_mod.design_sweep(
            self.kb, schema, marks, fields, channels, k=k, caps=self._caps(), strategy=self.config.solver.strategy
        )
