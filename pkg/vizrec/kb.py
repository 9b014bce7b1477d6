from __future__ import annotations

import functools
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Mapping

from vizrec.aspmini import (
    Block,
    ChoiceHead,
    Evaluator,
    ParseError,
    Program,
    StratificationError,
    expand_pools,
    format_block,
    parse_program,
    print_program,
    stratify,
)
from vizrec.config import default_kb_dir
from vizrec.terms import Atom, Symbol, Value
from vizrec.validation import ValidationError

log = logging.getLogger(__name__)

ROLES = ("definitions", "generate", "constraints", "hard", "soft")
WEIGHTS_FILE = "weights.json"
DECLARATION_PREDICATES = ("domain", "required", "default")

Path_ = tuple[str, ...]


class KBError(ValidationError):
    """Raised when a knowledge base bundle is missing pieces or breaks its invariants."""

    def __init__(self, problems: list[str]) -> None:
        super().__init__("; ".join(problems))
        self.problems = problems


@dataclass(frozen=True)
class BlockInfo:
    role: str
    name: str
    description: str
    weight: int | None = None


@dataclass(frozen=True)
class KnowledgeBase:
    programs: dict[str, Program] = field(default_factory=dict)
    weights: dict[str, int] = field(default_factory=dict)

    def program(self, role: str) -> Program:
        return self.programs.get(role, Program())

    @property
    def hard_names(self) -> list[str]:
        return self.program("hard").names

    @property
    def soft_names(self) -> list[str]:
        return self.program("soft").names

    @property
    def check_program(self) -> Program:
        """Everything that is evaluated on a candidate: definitions through soft."""
        return self.program("definitions") + self.program("constraints") + self.program("hard") + self.program("soft")

    @functools.cached_property
    def checker(self) -> Evaluator:
        """The compiled check program, built once per KB."""
        return Evaluator(self.check_program)

    @functools.cached_property
    def domains(self) -> dict[Path_, tuple[Value, ...]]:
        """Ground domain declarations; rule-derived domains are left to evaluation."""
        out: dict[Path_, list[Value]] = {}
        for atom in _ground_facts(self.program("definitions"), "domain"):
            path = _path_of(atom.args[0])
            if path is None:
                continue
            out.setdefault(path, []).append(atom.args[1])
        return {k: tuple(v) for k, v in out.items()}

    @functools.cached_property
    def required(self) -> list[Path_]:
        paths = [_path_of(a.args[0]) for a in _ground_facts(self.program("definitions"), "required")]
        return [p for p in paths if p is not None]

    @functools.cached_property
    def defaults(self) -> dict[Path_, Value]:
        out: dict[Path_, Value] = {}
        for atom in _ground_facts(self.program("definitions"), "default"):
            path = _path_of(atom.args[0])
            if path is not None and len(atom.args) == 2:
                out[path] = atom.args[1]
        return out


def _path_of(term: Any) -> Path_ | None:
    if isinstance(term, tuple) and term and all(isinstance(t, Symbol) for t in term):
        return tuple(t.name for t in term)
    return None


def _ground_facts(program: Program, predicate: str) -> list[Atom]:
    out: list[Atom] = []
    for rule in program.rules():
        if rule.is_fact and rule.head.predicate == predicate:
            out.extend(expand_pools(rule.head))
    return out


def load_kb(source: str | Path | Mapping[str, str] | None = None) -> KnowledgeBase:
    """Load a KB from a bundle directory (or a mapping of file name to text).

    Every problem found is reported in a single KBError.
    """
    if source is None:
        source = default_kb_dir()
    texts, problems = _read_bundle(source)
    programs: dict[str, Program] = {}
    for role in ROLES:
        text = texts.get(f"{role}.lp")
        if text is None:
            continue
        try:
            programs[role] = parse_program(text)
        except ParseError as exc:
            problems.append(f"{role}.lp: {exc}")
    weights: dict[str, int] = {}
    raw_weights = texts.get(WEIGHTS_FILE)
    if raw_weights is not None:
        try:
            weights = _parse_weights(json.loads(raw_weights) if raw_weights.strip() else {})
        except (ValueError, KBError) as exc:
            problems.append(f"{WEIGHTS_FILE}: {exc}")
    if problems:
        raise KBError(problems)
    kb = KnowledgeBase(programs=programs, weights=weights)
    validate_kb(kb)
    log.info(
        "loaded knowledge base: %d hard, %d soft blocks",
        len(kb.hard_names),
        len(kb.soft_names),
    )
    return kb


def load_default_kb() -> KnowledgeBase:
    """The KB named by `DRACO_KB` (or `VIZREC_KB`), or the bundled one; loaded once per directory."""
    return _load_cached(default_kb_dir().resolve())


@functools.cache
def _load_cached(directory: Path) -> KnowledgeBase:
    return load_kb(directory)


def _read_bundle(source: str | Path | Mapping[str, str]) -> tuple[dict[str, str], list[str]]:
    names = [f"{role}.lp" for role in ROLES] + [WEIGHTS_FILE]
    problems: list[str] = []
    texts: dict[str, str] = {}
    if isinstance(source, Mapping):
        for name in names:
            if name not in source:
                problems.append(f"Missing KB file: {name}")
            else:
                texts[name] = source[name]
        return texts, problems
    directory = Path(source)
    for name in names:
        path = directory / name
        if not path.exists():
            problems.append(f"Missing KB file: {path}")
            continue
        texts[name] = path.read_text(encoding="utf-8")
    return texts, problems


def _parse_weights(raw: Any) -> dict[str, int]:
    if not isinstance(raw, dict):
        raise KBError(["weights must be a JSON object of name -> integer"])
    out: dict[str, int] = {}
    bad: list[str] = []
    for name, value in raw.items():
        if isinstance(value, bool) or not isinstance(value, int) or value < 0:
            bad.append(f"weight {name} must be an integer >= 0 (got {value!r})")
            continue
        out[str(name)] = value
    if bad:
        raise KBError(bad)
    return out


def validate_kb(kb: KnowledgeBase) -> None:
    """Check the cross-file invariants of a KB; raise one KBError listing all problems."""
    problems: list[str] = []
    for role in ROLES:
        program = kb.program(role)
        for block in program.blocks:
            for rule in block.rules:
                head = rule.head
                if isinstance(head, ChoiceHead) and role != "generate":
                    problems.append(f"{role}/{block.name}: choice rules belong in generate")
                if isinstance(head, Atom) and head.predicate in DECLARATION_PREDICATES and role != "definitions":
                    problems.append(f"{role}/{block.name}: {head.predicate}/{len(head.args)} belongs in definitions")
                if role in ("hard", "soft"):
                    problems.extend(_check_violation_head(role, block, head))
    soft = set(kb.soft_names)
    hard = set(kb.hard_names)
    for name in kb.soft_names:
        if name not in kb.weights:
            problems.append(f"soft block {name} has no weight")
    for name in kb.weights:
        if name in hard:
            problems.append(f"hard block {name} must not have a weight")
        elif name not in soft:
            problems.append(f"weight {name} has no soft block")
    for name, value in kb.weights.items():
        if value < 0:
            problems.append(f"weight {name} must be >= 0 (got {value})")
    problems.extend(_check_declarations(kb))
    try:
        stratify(kb.check_program + kb.program("generate"))
    except StratificationError as exc:
        problems.append(str(exc))
    if problems:
        raise KBError(problems)


def _check_violation_head(role: str, block: Block, head: Any) -> list[str]:
    if not isinstance(head, Atom) or head.predicate != "violation":
        return [f"{role}/{block.name}: rules must derive violation/1..n"]
    if not head.args or head.args[0] != Symbol(block.name):
        return [f"{role}/{block.name}: violation name must equal the block name"]
    if role == "hard" and len(head.args) != 1:
        return [f"hard/{block.name}: hard blocks derive violation({block.name})"]
    if role == "soft" and len(head.args) < 2:
        return [f"soft/{block.name}: soft blocks derive violation({block.name}, witness...)"]
    return []


def _check_declarations(kb: KnowledgeBase) -> list[str]:
    problems: list[str] = []
    definitions = kb.program("definitions")
    derived_domain_paths = set()
    for rule in definitions.rules():
        if isinstance(rule.head, Atom) and rule.head.predicate == "domain" and rule.body:
            path = _path_of(rule.head.args[0])
            if path is not None:
                derived_domain_paths.add(path)
    for path, values in kb.domains.items():
        if len(set(values)) != len(values):
            problems.append(f"domain {'.'.join(path)} has duplicate values")
    for path in kb.required + list(kb.defaults):
        if path not in kb.domains and path not in derived_domain_paths:
            problems.append(f"property {'.'.join(path)} has no domain")
    for path, value in kb.defaults.items():
        if path in kb.domains and value not in kb.domains[path]:
            problems.append(f"default of {'.'.join(path)} is outside its domain")
    return problems


def filter_blocks(kb: KnowledgeBase, names: Iterable[str]) -> KnowledgeBase:
    """Keep only the named hard/soft blocks; the other roles stay whole."""
    wanted = list(names)
    known = set(kb.hard_names) | set(kb.soft_names)
    unknown = [n for n in wanted if n not in known]
    if unknown:
        raise KBError([f"unknown block {n}" for n in unknown])
    keep = set(wanted)
    programs = dict(kb.programs)
    for role in ("hard", "soft"):
        programs[role] = Program(tuple(b for b in kb.program(role).blocks if b.name in keep))
    weights = {n: w for n, w in kb.weights.items() if n in keep}
    return KnowledgeBase(programs=programs, weights=weights)


def set_weight(kb: KnowledgeBase, name: str, weight: int) -> KnowledgeBase:
    """Return a KB with one soft weight changed; `kb` is not modified."""
    if name not in kb.soft_names:
        raise KBError([f"unknown soft constraint {name}"])
    if isinstance(weight, bool) or not isinstance(weight, int) or weight < 0:
        raise KBError([f"weight {name} must be an integer >= 0 (got {weight!r})"])
    weights = dict(kb.weights)
    weights[name] = weight
    return replace(kb, weights=weights)


def with_weights(kb: KnowledgeBase, overrides: Mapping[str, int] | None) -> KnowledgeBase:
    for name, weight in (overrides or {}).items():
        kb = set_weight(kb, name, weight)
    return kb


def list_blocks(kb: KnowledgeBase) -> list[BlockInfo]:
    out: list[BlockInfo] = []
    for role in ROLES:
        for block in kb.program(role).blocks:
            weight = kb.weights.get(block.name) if role == "soft" else None
            out.append(BlockInfo(role=role, name=block.name, description=block.description, weight=weight))
    return out


def block_source(kb: KnowledgeBase, name: str) -> str:
    for role in ROLES:
        for block in kb.program(role).blocks:
            if block.name == name:
                return format_block(block)
    raise KBError([f"unknown block {name}"])


def dump_kb(kb: KnowledgeBase, directory: str | Path) -> None:
    """Write the KB as a bundle that load_kb reads back."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    for role in ROLES:
        (out / f"{role}.lp").write_text(print_program(kb.program(role)), encoding="utf-8")
    (out / WEIGHTS_FILE).write_text(json.dumps(kb.weights, indent=2, sort_keys=True) + "\n", encoding="utf-8")
