"""Chart specifications as nested dicts and as flat entity/attribute facts.

A chart specification is a JSON-like dict: scalar values are attributes, lists of
dicts are child entities of the kind named by the key. The flat form is a list of

    entity(kind, parent, id).
    attribute((kind, attr), id, value).

with root-level attributes written `attribute((attr), root, value)`.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Iterable, Mapping, Union

from vizrec.aspmini import ParseError, parse_rules
from vizrec.terms import ROOT, SYMBOL_RE, Atom, Symbol, Value, format_atom, from_value, is_ground, to_value
from vizrec.validation import ValidationError

EntityId = Union[Symbol, int]

# Attributes that name a data column; always strings so any column name survives.
STRING_PATHS = frozenset({("field", "name"), ("encoding", "field"), ("facet", "field")})


class ModelError(ValidationError):
    """Raised for structurally invalid specs or fact lists."""


@dataclass(frozen=True)
class EntityFact:
    kind: str
    parent: EntityId
    id: EntityId

    def to_atom(self) -> Atom:
        return Atom("entity", (Symbol(self.kind), self.parent, self.id))


@dataclass(frozen=True)
class AttributeFact:
    path: tuple[str, ...]
    entity: EntityId
    value: Value

    @property
    def name(self) -> str:
        return self.path[-1]

    def to_atom(self) -> Atom:
        return Atom("attribute", (tuple(Symbol(p) for p in self.path), self.entity, self.value))


Fact = Union[EntityFact, AttributeFact]


def format_fact(fact: Fact) -> str:
    return format_atom(fact.to_atom()) + "."


def fact_from_atom(atom: Atom) -> Fact:
    """Convert a ground `entity/3` or `attribute/3` atom into a fact."""
    if atom.predicate == "entity" and len(atom.args) == 3:
        kind, parent, ident = atom.args
        if isinstance(kind, Symbol) and _is_entity_id(parent) and _is_entity_id(ident):
            return EntityFact(kind.name, parent, ident)
    if atom.predicate == "attribute" and len(atom.args) == 3:
        path, entity, value = atom.args
        if (
            isinstance(path, tuple)
            and 1 <= len(path) <= 2
            and all(isinstance(p, Symbol) for p in path)
            and _is_entity_id(entity)
            and isinstance(value, (Symbol, int, str))
        ):
            return AttributeFact(tuple(p.name for p in path), entity, value)
    raise ModelError(f"not an entity or attribute fact: {format_atom(atom)}")


def _is_entity_id(value: Any) -> bool:
    return isinstance(value, Symbol) or (isinstance(value, int) and not isinstance(value, bool))


class _IdAllocator:
    """Fresh ids `<initial><n>`; a kind whose initial is taken uses its full name."""

    def __init__(self) -> None:
        self.prefix: dict[str, str] = {}
        self.counter: dict[str, int] = {}

    def next(self, kind: str) -> Symbol:
        if kind not in self.prefix:
            initial = kind[0]
            taken = set(self.prefix.values())
            self.prefix[kind] = initial if initial not in taken else kind
        n = self.counter.get(kind, 0)
        self.counter[kind] = n + 1
        return Symbol(f"{self.prefix[kind]}{n}")


def flatten_spec(spec: Mapping[str, Any]) -> list[Fact]:
    """Depth-first flattening of a nested spec into facts with fresh ids."""
    facts: list[Fact] = []
    _flatten_node(spec, None, ROOT, facts, _IdAllocator())
    return facts


def _flatten_node(
    node: Mapping[str, Any],
    kind: str | None,
    node_id: EntityId,
    facts: list[Fact],
    ids: _IdAllocator,
) -> None:
    if not isinstance(node, Mapping):
        raise ModelError(f"expected an object for {kind or 'root'}, got {type(node).__name__}")
    children: list[tuple[str, list[Any]]] = []
    for name, raw in node.items():
        if not SYMBOL_RE.match(name):
            raise ModelError(f"invalid attribute or entity name '{name}'")
        if isinstance(raw, list):
            if not raw or not all(isinstance(child, Mapping) for child in raw):
                raise ModelError(f"'{name}' must be a non-empty list of objects")
            children.append((name, raw))
            continue
        path = (kind, name) if kind is not None else (name,)
        facts.append(AttributeFact(path, node_id, _spec_value(path, raw)))
    for child_kind, items in children:
        if child_kind == "root":
            raise ModelError("'root' is reserved")
        for child in items:
            child_id = ids.next(child_kind)
            facts.append(EntityFact(child_kind, node_id, child_id))
            _flatten_node(child, child_kind, child_id, facts, ids)


def _spec_value(path: tuple[str, ...], raw: Any) -> Value:
    if isinstance(raw, bool):
        raise ModelError(f"{'.'.join(path)}: booleans are not supported, write \"true\" or \"false\"")
    if isinstance(raw, float):
        raise ModelError(f"{'.'.join(path)}: floats are not supported, round to an integer")
    if path in STRING_PATHS:
        if not isinstance(raw, str):
            raise ModelError(f"{'.'.join(path)} must be a string (got {raw!r})")
        return raw
    try:
        return to_value(raw)
    except TypeError:
        raise ModelError(f"{'.'.join(path)}: unsupported value {raw!r}") from None


def nest_facts(facts: Iterable[Fact]) -> dict[str, Any]:
    """Rebuild the nested spec; entity ids are dropped."""
    facts = list(facts)
    root: dict[str, Any] = {}
    nodes: dict[EntityId, dict[str, Any]] = {ROOT: root}
    kinds: dict[EntityId, str | None] = {ROOT: None}
    for fact in facts:
        if not isinstance(fact, EntityFact):
            continue
        if fact.id == ROOT or fact.id in nodes:
            raise ModelError(f"entity id {fact.id} is reserved or already used")
        parent = nodes.get(fact.parent)
        if parent is None:
            raise ModelError(f"entity {fact.id} refers to unknown parent {fact.parent}")
        existing = parent.get(fact.kind)
        if existing is not None and not isinstance(existing, list):
            raise ModelError(f"'{fact.kind}' is both an attribute and an entity kind under {fact.parent}")
        node: dict[str, Any] = {}
        parent.setdefault(fact.kind, []).append(node)
        nodes[fact.id] = node
        kinds[fact.id] = fact.kind
    for fact in facts:
        if not isinstance(fact, AttributeFact):
            continue
        node = nodes.get(fact.entity)
        if node is None:
            raise ModelError(f"attribute {'.'.join(fact.path)} refers to unknown entity {fact.entity}")
        kind = kinds[fact.entity]
        expected = (kind, fact.name) if kind is not None else (fact.name,)
        if fact.path != expected:
            raise ModelError(f"attribute path {fact.path} does not match entity {fact.entity} of kind {kind or 'root'}")
        if fact.name in node:
            if isinstance(node[fact.name], list):
                raise ModelError(f"'{fact.name}' is both an attribute and an entity kind under {fact.entity}")
            raise ModelError(f"duplicate attribute {'.'.join(fact.path)} on {fact.entity}")
        node[fact.name] = from_value(fact.value)
    return _order_node(root)


def _order_node(node: dict[str, Any]) -> dict[str, Any]:
    """Attributes first, children after, matching flatten order."""
    attrs = {k: v for k, v in node.items() if not isinstance(v, list)}
    kids = {k: [_order_node(c) for c in v] for k, v in node.items() if isinstance(v, list)}
    return {**attrs, **kids}


def merge_facts(first: Iterable[Fact], second: Iterable[Fact]) -> list[Fact]:
    """Concatenate two fact lists; entity ids of `second` already used in `first` are renamed."""
    first, second = list(first), list(second)
    taken = {ROOT} | {f.id for f in first + second if isinstance(f, EntityFact)}
    used = {f.id for f in first if isinstance(f, EntityFact)}
    renames: dict[EntityId, EntityId] = {}
    for fact in second:
        if isinstance(fact, EntityFact) and fact.id in used and fact.id not in renames:
            n = 0
            while Symbol(f"{fact.kind}{n}") in taken:
                n += 1
            renames[fact.id] = Symbol(f"{fact.kind}{n}")
            taken.add(renames[fact.id])
    if not renames:
        return first + second
    merged = list(first)
    for fact in second:
        if isinstance(fact, EntityFact):
            merged.append(EntityFact(fact.kind, renames.get(fact.parent, fact.parent), renames.get(fact.id, fact.id)))
        else:
            merged.append(AttributeFact(fact.path, renames.get(fact.entity, fact.entity), fact.value))
    return merged


def canonicalize(facts: Iterable[Fact]) -> list[Fact]:
    """Facts in flatten order with canonical ids."""
    return flatten_spec(nest_facts(facts))


def parse_facts(text: str) -> list[Fact]:
    """Parse `.`-terminated fact statements."""
    out: list[Fact] = []
    for rule in parse_rules(text):
        if not rule.is_fact or not all(is_ground(a) for a in rule.head.args):
            raise ParseError(f"only ground facts are allowed here, got a rule for {rule.head!s}")
        out.append(fact_from_atom(rule.head))
    return out


def print_facts(facts: Iterable[Fact]) -> str:
    """One fact per line, no trailing newline."""
    return "\n".join(format_fact(f) for f in facts)


def facts_to_atoms(facts: Iterable[Fact]) -> list[Atom]:
    return [f.to_atom() for f in facts]


def entity_ids(facts: Iterable[Fact], kind: str | None = None) -> list[EntityId]:
    return [f.id for f in facts if isinstance(f, EntityFact) and (kind is None or f.kind == kind)]
