"""Checking and completion of chart specifications against a knowledge base.

`validate` and `count_violations` evaluate a complete spec. `complete_spec`
searches the space the generate program describes: marks get extra encodings
(bounded by the query caps), every unset property is assigned one domain value,
scales are added for channels that lack one, and the k cheapest hard-valid
candidates are returned.
"""
from __future__ import annotations

import bisect
import itertools
import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

from vizrec.aspmini import (
    Cardinality,
    ChoiceHead,
    EvaluationError,
    Evaluator,
    Negative,
    Positive,
    Program,
    Rule,
    ground_choices,
    matches,
)
from vizrec.config import Strategy
from vizrec.facts import (
    AttributeFact,
    EntityFact,
    EntityId,
    Fact,
    canonicalize,
    fact_from_atom,
    facts_to_atoms,
    nest_facts,
    print_facts,
)
from vizrec.kb import KnowledgeBase
from vizrec.terms import ROOT, Anonymous, Atom, Symbol, Variable, order_key
from vizrec.validation import ValidationError

log = logging.getLogger(__name__)

PathKey = tuple[str, ...]

PROPERTY_ORDER: tuple[PathKey, ...] = (
    ("mark", "type"),
    ("encoding", "channel"),
    ("scale", "channel"),
    ("encoding", "field"),
    ("encoding", "aggregate"),
    ("encoding", "binning"),
    ("encoding", "stack"),
    ("scale", "type"),
    ("facet", "channel"),
    ("facet", "field"),
    ("view", "coordinates"),
    ("task",),
)
_SCALE_RANK = PROPERTY_ORDER.index(("scale", "channel"))
_SCALE_PENDING = frozenset({("entity", ("scale",)), ("attribute", ("scale", "channel")), ("attribute", ("scale", "type"))})


class IncompleteSpecError(ValidationError):
    """A spec leaves required properties unset; `missing` lists (entity, property)."""

    def __init__(self, missing: list[tuple[EntityId, str]]) -> None:
        shown = ", ".join(f"{entity}.{prop}" for entity, prop in missing)
        super().__init__(f"incomplete spec, missing: {shown}")
        self.missing = missing


@dataclass(frozen=True)
class Caps:
    max_added_encodings: int = 3
    allow_new_entities: bool = True


@dataclass(frozen=True)
class Query:
    base: tuple[Fact, ...]
    extra_rules: Program = field(default_factory=Program)
    caps: Caps = field(default_factory=Caps)
    k: int = 5


@dataclass(frozen=True)
class CandidateModel:
    facts: tuple[Fact, ...]
    violations: dict[str, int]
    cost: int
    hard_violations: tuple[str, ...] = ()

    @property
    def spec(self) -> dict[str, Any]:
        return nest_facts(self.facts)

    def text(self) -> str:
        return print_facts(self.facts)


@dataclass
class SearchStats:
    nodes: int = 0
    leaves: int = 0
    pruned_hard: int = 0
    pruned_bound: int = 0


# --- checking complete specs ---------------------------------------------------


def missing_properties(kb: KnowledgeBase, facts: Iterable[Fact]) -> list[tuple[EntityId, str]]:
    facts = list(facts)
    have = {(f.entity, f.path) for f in facts if isinstance(f, AttributeFact)}
    missing: list[tuple[EntityId, str]] = []
    for fact in facts:
        if not isinstance(fact, EntityFact):
            continue
        for path in kb.required:
            if len(path) == 2 and path[0] == fact.kind and (fact.id, path) not in have:
                missing.append((fact.id, ".".join(path)))
    return missing


def with_defaults(kb: KnowledgeBase, facts: Iterable[Fact]) -> list[Fact]:
    """Add the default value of every defaulted property a spec leaves out."""
    facts = list(facts)
    have = {(f.entity, f.path) for f in facts if isinstance(f, AttributeFact)}
    out = list(facts)
    for path, value in kb.defaults.items():
        if len(path) == 1:
            if (ROOT, path) not in have:
                out.append(AttributeFact(path, ROOT, value))
            continue
        for fact in facts:
            if isinstance(fact, EntityFact) and fact.kind == path[0] and (fact.id, path) not in have:
                out.append(AttributeFact(path, fact.id, value))
    return out


def strip_defaults(kb: KnowledgeBase, facts: Iterable[Fact]) -> list[Fact]:
    defaults = kb.defaults
    return [f for f in facts if not (isinstance(f, AttributeFact) and defaults.get(f.path, _MISSING) == f.value)]


_MISSING = object()


def _checker(kb: KnowledgeBase, extra_rules: Program | None) -> Evaluator:
    if extra_rules is None or not extra_rules.blocks:
        return kb.checker
    return Evaluator(kb.check_program + extra_rules)


def _evaluate_complete(kb: KnowledgeBase, facts: Iterable[Fact], extra_rules: Program | None):
    facts = list(facts)
    nest_facts(facts)
    missing = missing_properties(kb, facts)
    if missing:
        raise IncompleteSpecError(missing)
    return _checker(kb, extra_rules).run(facts_to_atoms(with_defaults(kb, facts)))


def _violation_counts(atoms: Iterable[Atom]) -> Counter:
    counts: Counter = Counter()
    for atom in atoms:
        if atom.predicate == "violation" and atom.args and isinstance(atom.args[0], Symbol):
            counts[atom.args[0].name] += 1
    return counts


def validate(kb: KnowledgeBase, facts: Iterable[Fact], extra_rules: Program | None = None) -> list[str]:
    """Names of violated hard blocks (KB order), plus `inconsistent`; [] means valid."""
    model = _evaluate_complete(kb, facts, extra_rules)
    counts = _violation_counts(model.atoms)
    names = [name for name in kb.hard_names if counts[name]]
    if model.inconsistent:
        names.append("inconsistent")
    return names


def count_violations(kb: KnowledgeBase, facts: Iterable[Fact]) -> dict[str, int]:
    """Full soft-violation vector, zeros included, in KB order."""
    model = _evaluate_complete(kb, facts, None)
    counts = _violation_counts(model.atoms)
    return {name: counts[name] for name in kb.soft_names}


def cost(weights: Mapping[str, int], violations: Mapping[str, int]) -> int:
    unknown = [name for name in violations if name not in weights]
    if unknown:
        raise ValidationError(f"no weight for {', '.join(sorted(unknown))}")
    return sum(weights[name] * count for name, count in violations.items())


# --- which blocks can be trusted on a partial candidate ------------------------


def _literal_key(atom: Atom) -> tuple[str, PathKey] | None:
    if atom.predicate == "entity":
        kind = atom.args[0] if atom.args else None
        return ("entity", (kind.name,) if isinstance(kind, Symbol) else ("*",))
    if atom.predicate == "attribute":
        path = atom.args[0] if atom.args else None
        if not isinstance(path, tuple):
            return ("attribute", ("**",))
        return ("attribute", tuple(p.name if isinstance(p, Symbol) else "*" for p in path))
    return None


def _overlaps(key: tuple[str, PathKey], pending: frozenset) -> bool:
    kind, detail = key
    for pending_kind, pending_detail in pending:
        if pending_kind != kind:
            continue
        if detail == ("**",) or (kind == "entity" and detail == ("*",)):
            return True
        if len(detail) == len(pending_detail) and all(a == "*" or a == b for a, b in zip(detail, pending_detail)):
            return True
    return False


class _SourceAnalysis:
    """For a set of pending properties, the hard/soft blocks and constraints whose
    result on a partial candidate only grows as the candidate is completed."""

    def __init__(self, program: Program, hard: Program, soft: Program) -> None:
        self.rules_by_head: dict[str, list[Rule]] = {}
        self.constraints: list[Rule] = []
        for rule in program.rules():
            if rule.is_constraint:
                self.constraints.append(rule)
            elif isinstance(rule.head, Atom) and rule.head.predicate != "violation":
                self.rules_by_head.setdefault(rule.head.predicate, []).append(rule)
        self.sources = self._sources()
        self.hard_blocks = {b.name: b.rules for b in hard.blocks}
        self.soft_blocks = {b.name: b.rules for b in soft.blocks}
        self._cache: dict[frozenset, tuple[frozenset, frozenset, frozenset]] = {}

    def _sources(self) -> dict[str, set]:
        sources: dict[str, set] = {pred: set() for pred in self.rules_by_head}
        changed = True
        while changed:
            changed = False
            for pred, rules in self.rules_by_head.items():
                for rule in rules:
                    for lit in rule.body:
                        if not isinstance(lit, (Positive, Negative, Cardinality)):
                            continue
                        keys = self._keys(lit.atom, sources)
                        if not keys <= sources[pred]:
                            sources[pred] |= keys
                            changed = True
        return sources

    @staticmethod
    def _keys(atom: Atom, sources: dict[str, set]) -> set:
        key = _literal_key(atom)
        if key is not None:
            return {key}
        return sources.get(atom.predicate, set())

    def _determined(self, atom: Atom, pending: frozenset) -> bool:
        return not any(_overlaps(key, pending) for key in self._keys(atom, self.sources))

    def _rule_stable(self, rule: Rule, pending: frozenset, stable: set[str]) -> bool:
        for lit in rule.body:
            if isinstance(lit, Positive):
                pred = lit.atom.predicate
                if pred in self.rules_by_head and pred not in stable:
                    return False
            elif isinstance(lit, (Negative, Cardinality)):
                if not self._determined(lit.atom, pending):
                    return False
        return True

    def stable(self, pending: frozenset) -> tuple[frozenset, frozenset, frozenset]:
        """(hard names, soft names, constraint indices) safe to use for pruning."""
        cached = self._cache.get(pending)
        if cached is not None:
            return cached
        stable = set(self.rules_by_head)
        changed = True
        while changed:
            changed = False
            for pred in list(stable):
                if not all(self._rule_stable(r, pending, stable) for r in self.rules_by_head[pred]):
                    stable.discard(pred)
                    changed = True
        hard = frozenset(n for n, rules in self.hard_blocks.items() if all(self._rule_stable(r, pending, stable) for r in rules))
        soft = frozenset(n for n, rules in self.soft_blocks.items() if all(self._rule_stable(r, pending, stable) for r in rules))
        constraints = frozenset(i for i, r in enumerate(self.constraints) if self._rule_stable(r, pending, stable))
        result = (hard, soft, constraints)
        self._cache[pending] = result
        return result


# --- completion ----------------------------------------------------------------


@dataclass(frozen=True)
class _Slot:
    path: PathKey
    entity: EntityId
    options: tuple[Fact, ...]


class _Search:
    def __init__(self, kb: KnowledgeBase, query: Query, strategy: Strategy) -> None:
        for rule in query.extra_rules.rules():
            if rule.is_choice:
                raise EvaluationError("query hints must not contain choice rules")
        if query.k < 1:
            raise ValidationError(f"k must be >= 1 (got {query.k})")
        if query.caps.max_added_encodings < 0:
            raise ValidationError(f"max_added_encodings must be >= 0 (got {query.caps.max_added_encodings})")
        self.kb = kb
        self.query = query
        self.prune = strategy == "branch_and_bound"
        program = kb.check_program + query.extra_rules
        self.evaluator = _checker(kb, query.extra_rules)
        self.definitions = Evaluator(kb.program("definitions"))
        self.choices = [r for r in kb.program("generate").rules() if isinstance(r.head, ChoiceHead)]
        self.analysis = _SourceAnalysis(program, kb.program("hard"), kb.program("soft"))
        self.hard_names = kb.hard_names
        self.weights = kb.weights
        self.has_scales = ("scale", "channel") in kb.required
        self.has_encodings = ("encoding", "channel") in kb.required
        self.stats = SearchStats()
        self.best: list[tuple[tuple[int, int, str], CandidateModel]] = []

    # augmentation

    def configurations(self) -> Iterable[list[Fact]]:
        base = list(self.query.base)
        marks = [f.id for f in base if isinstance(f, EntityFact) and f.kind == "mark"]
        existing = Counter(f.parent for f in base if isinstance(f, EntityFact) and f.kind == "encoding")
        cap = self.query.caps.max_added_encodings
        ranges = []
        for mark in marks:
            if self.has_encodings and (self.query.caps.allow_new_entities or existing[mark] == 0):
                ranges.append(range(cap + 1))
            else:
                ranges.append(range(1))
        used = {f.id for f in base if isinstance(f, EntityFact)}
        for added in sorted(itertools.product(*ranges), key=lambda c: (sum(c), c)):
            facts = list(base)
            taken = set(used)
            for mark, n in zip(marks, added):
                for _ in range(n):
                    facts.append(EntityFact("encoding", mark, _fresh_id("e", taken)))
            yield facts

    def add_scales(self, facts: list[Fact]) -> list[Fact]:
        parent = {f.id: f.parent for f in facts if isinstance(f, EntityFact)}
        kind = {f.id: f.kind for f in facts if isinstance(f, EntityFact)}
        channels = {f.entity: f.value for f in facts if isinstance(f, AttributeFact) and f.path == ("encoding", "channel")}
        covered = {
            (parent[f.entity], f.value)
            for f in facts
            if isinstance(f, AttributeFact) and f.path == ("scale", "channel") and f.entity in parent
        }
        wanted: set[tuple[EntityId, Any]] = set()
        for encoding, channel in channels.items():
            mark = parent.get(encoding)
            view = parent.get(mark)
            if view is not None and kind.get(view) == "view" and (view, channel) not in covered:
                wanted.add((view, channel))
        if not wanted:
            return facts
        taken = set(kind)
        out = list(facts)
        for view, channel in sorted(wanted, key=lambda vc: (order_key(vc[0]), self._value_rank(("scale", "channel"), vc[1]))):
            scale = _fresh_id("s", taken)
            out.append(EntityFact("scale", view, scale))
            out.append(AttributeFact(("scale", "channel"), scale, channel))
        return out

    # slots

    def open_slots(self, facts: list[Fact]) -> list[_Slot]:
        atoms = facts_to_atoms(facts)
        derived = self.definitions.run(atoms).atoms
        existing = [a for a in atoms if a.predicate == "attribute"]
        position = {f.id: i for i, f in enumerate(facts) if isinstance(f, EntityFact)}
        slots: list[_Slot] = []
        seen: set[tuple[PathKey, EntityId]] = set()
        for rule in self.choices:
            for slot, options in ground_choices(rule, derived):
                if any(matches(slot, a) for a in existing):
                    continue
                key = _slot_key(slot)
                if key is None or key in seen:
                    continue
                seen.add(key)
                path, entity = key
                ordered = sorted(options, key=lambda a: self._value_rank(path, a.args[2]))
                slots.append(_Slot(path, entity, tuple(fact_from_atom(a) for a in ordered)))
        slots.sort(key=lambda s: (_property_rank(s.path), s.path, position.get(s.entity, -1)))
        return slots

    def _value_rank(self, path: PathKey, value: Any) -> tuple:
        domain = self.kb.domains.get(path, ())
        if value in domain:
            return (0, domain.index(value))
        return (1, order_key(value))

    def pending(self, slots: list[_Slot], scales_done: bool) -> frozenset:
        keys = {("attribute", s.path) for s in slots}
        if not scales_done:
            keys |= _SCALE_PENDING
        return frozenset(keys)

    # search

    def run(self) -> list[CandidateModel]:
        for facts in self.configurations():
            scales_done = not self.has_scales
            self.descend(facts, self.open_slots(facts), 0, scales_done)
        return [model for _, model in self.best]

    def descend(self, facts: list[Fact], slots: list[_Slot], idx: int, scales_done: bool) -> None:
        if not scales_done and (idx == len(slots) or _property_rank(slots[idx].path) > _SCALE_RANK):
            facts = self.add_scales(facts)
            self.descend(facts, self.open_slots(facts), 0, True)
            return
        self.stats.nodes += 1
        leaf = idx == len(slots)
        if leaf or self.prune:
            model = self.evaluator.run(facts_to_atoms(facts))
            pending = frozenset() if leaf else self.pending(slots[idx:], scales_done)
            if not self.feasible(model, pending):
                return
            if leaf:
                self.accept(facts, model)
                return
        slot = slots[idx]
        for option in slot.options:
            self.descend(facts + [option], slots, idx + 1, scales_done)

    def feasible(self, model, pending: frozenset) -> bool:
        hard, soft, constraints = self.analysis.stable(pending)
        counts = _violation_counts(model.atoms)
        if model.failed_constraints & constraints or any(counts[name] for name in hard):
            self.stats.pruned_hard += 1
            return False
        if pending and len(self.best) >= self.query.k:
            bound = sum(self.weights.get(name, 0) * counts[name] for name in soft)
            if bound > self.best[-1][1].cost:
                self.stats.pruned_bound += 1
                return False
        return True

    def accept(self, facts: list[Fact], model) -> None:
        self.stats.leaves += 1
        counts = _violation_counts(model.atoms)
        violations = {name: counts[name] for name in self.kb.soft_names if counts[name]}
        total = cost(self.weights, violations)
        final = tuple(canonicalize(strip_defaults(self.kb, facts)))
        n_entities = sum(1 for f in final if isinstance(f, EntityFact))
        key = (total, n_entities, print_facts(final))
        if len(self.best) >= self.query.k and key >= self.best[-1][0]:
            return
        candidate = CandidateModel(facts=final, violations=violations, cost=total)
        bisect.insort(self.best, (key, candidate), key=lambda entry: entry[0])
        del self.best[self.query.k :]


def _fresh_id(prefix: str, taken: set) -> Symbol:
    for n in itertools.count():
        candidate = Symbol(f"{prefix}{n}")
        if candidate not in taken:
            taken.add(candidate)
            return candidate
    raise AssertionError("unreachable")


def _slot_key(slot: Atom) -> tuple[PathKey, EntityId] | None:
    if slot.predicate != "attribute" or len(slot.args) != 3:
        return None
    path, entity, _ = slot.args
    if not isinstance(path, tuple) or not all(isinstance(p, Symbol) for p in path):
        return None
    if isinstance(entity, (Variable, Anonymous)):
        return None
    return tuple(p.name for p in path), entity


def _property_rank(path: PathKey) -> int:
    try:
        return PROPERTY_ORDER.index(path)
    except ValueError:
        return len(PROPERTY_ORDER)


def complete_spec_with_stats(
    kb: KnowledgeBase, query: Query, strategy: Strategy = "branch_and_bound"
) -> tuple[list[CandidateModel], SearchStats]:
    nest_facts(query.base)
    search = _Search(kb, query, strategy)
    models = search.run()
    stats = search.stats
    log.debug(
        "search done: nodes=%d leaves=%d pruned_hard=%d pruned_bound=%d models=%d",
        stats.nodes,
        stats.leaves,
        stats.pruned_hard,
        stats.pruned_bound,
        len(models),
    )
    if not models:
        log.info("no valid completion for the query")
    return models, stats


def complete_spec(kb: KnowledgeBase, query: Query, strategy: Strategy = "branch_and_bound") -> list[CandidateModel]:
    """The k cheapest hard-valid completions, ordered by (cost, entity count, fact text)."""
    return complete_spec_with_stats(kb, query, strategy)[0]
