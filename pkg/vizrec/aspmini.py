"""Parser and stratified evaluator for the rule language used by the knowledge base.

Program text is split into blocks by `%% <name>` header lines; the `% ...` lines
that immediately follow a header are the block description. Rule statements are
parsed with a Lark LALR grammar and transformed into the frozen dataclasses below.

Evaluation covers the deterministic fragment: facts, normal rules with negation
and cardinality tests over lower strata, and integrity constraints. Choice rules
are parsed but only the solver's generator executes them.
"""
from __future__ import annotations

import functools
import itertools
import json
import re
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Iterable, Iterator, Union

import lark
import networkx as nx

from vizrec.terms import (
    ANON,
    Anonymous,
    Atom,
    Pool,
    Symbol,
    Variable,
    atom_variables,
    format_atom,
    format_term,
    has_anonymous,
    is_ground,
    order_key,
    term_variables,
)
from vizrec.validation import ValidationError

MAIN_BLOCK = "main"

GRAMMAR = r"""
    start: statement*

    statement: head "."                  -> fact
             | head ":-" body "."        -> rule
             | ":-" body "."             -> constraint

    ?head: atom
         | choice

    choice: "{" atom ":" atom "}" CMP SIGNED_INT

    body: literal ("," literal)*

    ?literal: atom                        -> positive
            | "not" atom                  -> negative
            | term CMP term               -> comparison
            | "{" atom "}" CMP SIGNED_INT -> cardinality

    atom: NAME
        | NAME "(" term ("," term)* ")"

    ?term: NAME                           -> symbol
         | VARIABLE                       -> variable
         | "_"                            -> anonymous
         | SIGNED_INT                     -> integer
         | ESCAPED_STRING                 -> string
         | "(" term ("," term)* ")"       -> tuple_term
         | "(" term (";" term)+ ")"       -> pool_term

    CMP: "!=" | "<=" | ">=" | "<" | ">" | "="
    NAME: /[a-z][a-z0-9_]*/
    VARIABLE: /[A-Z][A-Za-z0-9_]*/
    COMMENT: /%[^\n]*/

    %import common.SIGNED_INT
    %import common.ESCAPED_STRING
    %import common.WS
    %ignore WS
    %ignore COMMENT
"""

_HEADER_RE = re.compile(r"^%%\s*(\S+)\s*$")

COMPARISON_OPS = ("=", "!=", "<", "<=", ">", ">=")


class ParseError(ValidationError):
    """Raised for syntax errors, unsafe rules and malformed block files."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None) -> None:
        where = ""
        if line is not None:
            where = f" (line {line}" + (f", column {column}" if column is not None else "") + ")"
        super().__init__(message + where)
        self.line = line
        self.column = column


class StratificationError(ValidationError):
    def __init__(self, cycle: list[str]) -> None:
        super().__init__("program is not stratifiable: cycle through negation " + " -> ".join(cycle))
        self.cycle = cycle


class EvaluationError(ValidationError):
    pass


@dataclass(frozen=True)
class Positive:
    atom: Atom


@dataclass(frozen=True)
class Negative:
    atom: Atom


@dataclass(frozen=True)
class Comparison:
    op: str
    lhs: Any
    rhs: Any


@dataclass(frozen=True)
class Cardinality:
    atom: Atom
    op: str
    bound: int


BodyLiteral = Union[Positive, Negative, Comparison, Cardinality]


@dataclass(frozen=True)
class ChoiceHead:
    element: Atom
    condition: Atom
    bound: int = 1


@dataclass(frozen=True)
class Rule:
    head: Atom | ChoiceHead | None
    body: tuple[BodyLiteral, ...] = ()

    @property
    def is_fact(self) -> bool:
        return isinstance(self.head, Atom) and not self.body

    @property
    def is_constraint(self) -> bool:
        return self.head is None

    @property
    def is_choice(self) -> bool:
        return isinstance(self.head, ChoiceHead)


@dataclass(frozen=True)
class Block:
    name: str
    description: str = ""
    rules: tuple[Rule, ...] = ()


@dataclass(frozen=True)
class Program:
    blocks: tuple[Block, ...] = ()

    def rules(self) -> Iterator[Rule]:
        for block in self.blocks:
            yield from block.rules

    @property
    def names(self) -> list[str]:
        return [b.name for b in self.blocks]

    def block(self, name: str) -> Block:
        for b in self.blocks:
            if b.name == name:
                return b
        raise KeyError(name)

    def __add__(self, other: "Program") -> "Program":
        return Program(self.blocks + other.blocks)


@dataclass(frozen=True)
class DerivedModel:
    atoms: frozenset[Atom]
    inconsistent: bool = False
    # Indices (in program order) of the integrity constraints whose body holds.
    failed_constraints: frozenset[int] = frozenset()

    def by_predicate(self, predicate: str) -> list[Atom]:
        return sorted((a for a in self.atoms if a.predicate == predicate), key=lambda a: format_atom(a))


# --- parsing -----------------------------------------------------------------


@functools.cache
def _parser() -> lark.Lark:
    return lark.Lark(GRAMMAR, parser="lalr")


class _Transformer(lark.Transformer):
    def start(self, children):
        return list(children)

    def fact(self, children):
        return Rule(head=children[0])

    def rule(self, children):
        return Rule(head=children[0], body=tuple(children[1]))

    def constraint(self, children):
        return Rule(head=None, body=tuple(children[0]))

    def choice(self, children):
        element, condition, op, bound = children
        if str(op) != "=" or int(bound) != 1:
            raise ParseError(f"choice rules must be bounded by '= 1' (got '{op} {bound}')")
        return ChoiceHead(element=element, condition=condition, bound=1)

    def body(self, children):
        return list(children)

    def positive(self, children):
        return Positive(children[0])

    def negative(self, children):
        return Negative(children[0])

    def comparison(self, children):
        lhs, op, rhs = children
        return Comparison(str(op), lhs, rhs)

    def cardinality(self, children):
        atom, op, bound = children
        return Cardinality(atom, str(op), int(bound))

    def atom(self, children):
        return Atom(str(children[0]), tuple(children[1:]))

    def symbol(self, children):
        return Symbol(str(children[0]))

    def variable(self, children):
        return Variable(str(children[0]))

    def anonymous(self, children):
        return ANON

    def integer(self, children):
        return int(children[0])

    def string(self, children):
        return json.loads(str(children[0]))

    def tuple_term(self, children):
        return tuple(children)

    def pool_term(self, children):
        return Pool(tuple(children))


def parse_rules(text: str, line_offset: int = 0) -> list[Rule]:
    """Parse rule statements (no block headers) and check them for safety."""
    _reject_directives(text, line_offset)
    try:
        rules = _Transformer().transform(_parser().parse(text))
    except lark.exceptions.VisitError as exc:
        if isinstance(exc.orig_exc, ParseError):
            raise ParseError(str(exc.orig_exc), line=line_offset + 1) from exc
        raise
    except lark.exceptions.UnexpectedInput as exc:
        raise ParseError(f"syntax error: {_describe_unexpected(exc)}", line_offset + exc.line, exc.column) from exc
    for rule in rules:
        _check_rule(rule, line_offset)
    return rules


def parse_program(text: str) -> Program:
    """Parse block-structured program text.

    Rules before the first `%%` header land in a block named `main`.
    """
    chunks = _split_blocks(text)
    blocks: list[Block] = []
    seen: set[str] = set()
    for index, (name, description, body, start_line) in enumerate(chunks):
        rules = parse_rules(body, line_offset=start_line)
        if index == 0 and not rules:
            continue
        if name in seen:
            raise ParseError(f"duplicate block name '{name}'", start_line + 1)
        seen.add(name)
        blocks.append(Block(name=name, description=description, rules=tuple(rules)))
    return Program(tuple(blocks))


def _split_blocks(text: str) -> list[tuple[str, str, str, int]]:
    """Return (name, description, body text, zero-based start line) per block."""
    lines = text.splitlines()
    chunks: list[tuple[str, str, str, int]] = []
    name = MAIN_BLOCK
    start = 0
    desc: list[str] = []
    body: list[str] = []
    in_description = False

    def flush() -> None:
        chunks.append((name, "\n".join(desc), "\n".join(body), start))

    for idx, line in enumerate(lines):
        header = _HEADER_RE.match(line.strip())
        if header:
            flush()
            name = header.group(1)
            if not re.match(r"[a-z][a-z0-9_]*\Z", name):
                raise ParseError(f"invalid block name '{name}'", idx + 1)
            start = idx
            desc = []
            # Keep the header line so body line numbers stay aligned.
            body = [""]
            in_description = True
            continue
        stripped = line.strip()
        if in_description and stripped.startswith("%") and not stripped.startswith("%%"):
            desc.append(stripped[1:].strip())
            body.append("")
            continue
        in_description = False
        body.append(line)
    flush()
    return chunks


def _reject_directives(text: str, line_offset: int) -> None:
    for idx, line in enumerate(text.splitlines()):
        if line.lstrip().startswith("#"):
            directive = line.strip().split()[0]
            raise ParseError(f"unsupported directive '{directive}'", line_offset + idx + 1, line.index("#") + 1)


def _describe_unexpected(exc: lark.exceptions.UnexpectedInput) -> str:
    if isinstance(exc, lark.exceptions.UnexpectedToken):
        return f"unexpected token {exc.token!r}"
    if isinstance(exc, lark.exceptions.UnexpectedCharacters):
        return f"unexpected character {exc.char!r}"
    return "unexpected end of input"


def _check_rule(rule: Rule, line_offset: int) -> None:
    """Safety: every variable outside positive body atoms must be bound by one."""
    text = format_rule(rule)
    bound: set[str] = set()
    for lit in rule.body:
        if isinstance(lit, Positive):
            bound |= atom_variables(lit.atom)
        if isinstance(lit, (Positive, Negative, Cardinality)) and _has_pool(lit.atom):
            raise ParseError(f"pools are only allowed in facts: {text}", line_offset + 1)
    head = rule.head
    if isinstance(head, Atom):
        if any(has_anonymous(a) for a in head.args):
            raise ParseError(f"anonymous variable in rule head: {text}", line_offset + 1)
        if rule.body and _has_pool(head):
            raise ParseError(f"pools are only allowed in facts: {text}", line_offset + 1)
        free = atom_variables(head) - bound
    elif isinstance(head, ChoiceHead):
        if any(has_anonymous(a) for a in head.element.args):
            raise ParseError(f"anonymous variable in choice element: {text}", line_offset + 1)
        free = atom_variables(head.element) - bound - atom_variables(head.condition)
    else:
        free = set()
    for lit in rule.body:
        if isinstance(lit, Negative):
            free |= atom_variables(lit.atom) - bound
        elif isinstance(lit, Comparison):
            free |= (term_variables(lit.lhs) | term_variables(lit.rhs)) - bound
    if free:
        names = ", ".join(sorted(free))
        raise ParseError(f"unsafe rule, unbound variable(s) {names}: {text}", line_offset + 1)


def _has_pool(atom: Atom) -> bool:
    def walk(term: Any) -> bool:
        if isinstance(term, Pool):
            return True
        if isinstance(term, tuple):
            return any(walk(t) for t in term)
        return False

    return any(walk(a) for a in atom.args)


# --- printing ----------------------------------------------------------------


def format_literal(lit: BodyLiteral) -> str:
    if isinstance(lit, Positive):
        return format_atom(lit.atom)
    if isinstance(lit, Negative):
        return "not " + format_atom(lit.atom)
    if isinstance(lit, Comparison):
        return f"{format_term(lit.lhs)} {lit.op} {format_term(lit.rhs)}"
    return "{" + format_atom(lit.atom) + "} " + f"{lit.op} {lit.bound}"


def format_rule(rule: Rule) -> str:
    if isinstance(rule.head, ChoiceHead):
        head = f"{{ {format_atom(rule.head.element)}: {format_atom(rule.head.condition)} }} = {rule.head.bound}"
    elif isinstance(rule.head, Atom):
        head = format_atom(rule.head)
    else:
        head = ""
    if not rule.body:
        return head + "."
    body = ", ".join(format_literal(lit) for lit in rule.body)
    return f"{head} :- {body}." if head else f":- {body}."


def format_block(block: Block) -> str:
    lines = [f"%% {block.name}"]
    lines.extend(f"% {d}" if d else "%" for d in block.description.split("\n") if block.description)
    lines.extend(format_rule(r) for r in block.rules)
    return "\n".join(lines)


def print_program(program: Program) -> str:
    if not program.blocks:
        return ""
    return "\n\n".join(format_block(b) for b in program.blocks) + "\n"


# --- stratification ----------------------------------------------------------


def _head_predicates(rule: Rule) -> list[str]:
    if isinstance(rule.head, Atom):
        return [rule.head.predicate]
    if isinstance(rule.head, ChoiceHead):
        return [rule.head.element.predicate]
    return []


def dependency_graph(program: Program) -> nx.DiGraph:
    """Predicate graph with an edge body -> head; `negative` marks negation/cardinality."""
    graph = nx.DiGraph()
    for rule in program.rules():
        heads = _head_predicates(rule)
        graph.add_nodes_from(heads)
        deps: list[tuple[str, bool]] = []
        for lit in rule.body:
            if isinstance(lit, Positive):
                deps.append((lit.atom.predicate, False))
            elif isinstance(lit, (Negative, Cardinality)):
                deps.append((lit.atom.predicate, True))
        if isinstance(rule.head, ChoiceHead):
            deps.append((rule.head.condition.predicate, False))
        for pred, negative in deps:
            graph.add_node(pred)
            for head in heads:
                if graph.has_edge(pred, head):
                    graph[pred][head]["negative"] = graph[pred][head]["negative"] or negative
                else:
                    graph.add_edge(pred, head, negative=negative)
    return graph


def stratify(program: Program) -> list[frozenset[str]]:
    """Layer predicates so negation and cardinality only look at lower layers."""
    graph = dependency_graph(program)
    if graph.number_of_nodes() == 0:
        return []
    for component in nx.strongly_connected_components(graph):
        sub = graph.subgraph(component)
        for src, dst, negative in sub.edges(data="negative"):
            if negative:
                raise StratificationError(_cycle_through(sub, src, dst))
    condensed = nx.condensation(graph)
    members = condensed.graph["mapping"]
    level: dict[int, int] = {}
    for node in nx.topological_sort(condensed):
        level.setdefault(node, 0)
    for node in nx.topological_sort(condensed):
        for succ in condensed.successors(node):
            step = 0
            for pred in condensed.nodes[node]["members"]:
                for head in condensed.nodes[succ]["members"]:
                    if graph.has_edge(pred, head) and graph[pred][head]["negative"]:
                        step = 1
            level[succ] = max(level[succ], level[node] + step)
    strata: dict[int, set[str]] = defaultdict(set)
    for pred, comp in members.items():
        strata[level[comp]].add(pred)
    return [frozenset(strata[i]) for i in sorted(strata)]


def _cycle_through(sub: nx.DiGraph, src: str, dst: str) -> list[str]:
    if src == dst:
        return [src, src]
    path = nx.shortest_path(sub, dst, src)
    return [src] + path


# --- evaluation --------------------------------------------------------------


class _Database:
    """Atoms indexed by predicate and by (predicate, first argument)."""

    def __init__(self, atoms: Iterable[Atom] = ()) -> None:
        self.by_pred: dict[str, set[Atom]] = defaultdict(set)
        self.by_first: dict[tuple[str, Any], set[Atom]] = defaultdict(set)
        for atom in atoms:
            self.add(atom)

    def add(self, atom: Atom) -> bool:
        bucket = self.by_pred[atom.predicate]
        if atom in bucket:
            return False
        bucket.add(atom)
        if atom.args:
            self.by_first[(atom.predicate, atom.args[0])].add(atom)
        return True

    def __bool__(self) -> bool:
        return any(self.by_pred.values())

    def candidates(self, pattern: Atom, binding: dict[str, Any]) -> Iterable[Atom]:
        if pattern.args:
            first = _substitute_partial(pattern.args[0], binding)
            if first is not None and is_ground(first):
                return self.by_first.get((pattern.predicate, first), ())
        return self.by_pred.get(pattern.predicate, ())

    def atoms(self) -> frozenset[Atom]:
        return frozenset(itertools.chain.from_iterable(self.by_pred.values()))


_UNBOUND = object()


def _match(pattern: Any, value: Any, binding: dict[str, Any]) -> dict[str, Any] | None:
    if isinstance(pattern, Variable):
        current = binding.get(pattern.name, _UNBOUND)
        if current is _UNBOUND:
            extended = dict(binding)
            extended[pattern.name] = value
            return extended
        return binding if current == value else None
    if isinstance(pattern, Anonymous):
        return binding
    if isinstance(pattern, tuple):
        if not isinstance(value, tuple) or len(value) != len(pattern):
            return None
        for p, v in zip(pattern, value):
            binding = _match(p, v, binding)
            if binding is None:
                return None
        return binding
    if type(pattern) is not type(value):
        return None
    return binding if pattern == value else None


def _match_atom(pattern: Atom, atom: Atom, binding: dict[str, Any]) -> dict[str, Any] | None:
    if len(pattern.args) != len(atom.args):
        return None
    for p, v in zip(pattern.args, atom.args):
        binding = _match(p, v, binding)
        if binding is None:
            return None
    return binding


def _substitute(term: Any, binding: dict[str, Any]) -> Any:
    if isinstance(term, Variable):
        try:
            return binding[term.name]
        except KeyError:
            raise EvaluationError(f"unbound variable {term.name}") from None
    if isinstance(term, tuple):
        return tuple(_substitute(t, binding) for t in term)
    if isinstance(term, Anonymous):
        raise EvaluationError("anonymous variable cannot be instantiated")
    return term


def _substitute_partial(term: Any, binding: dict[str, Any]) -> Any:
    if isinstance(term, Variable):
        return binding.get(term.name, term)
    if isinstance(term, tuple):
        return tuple(_substitute_partial(t, binding) for t in term)
    return term


def compare(op: str, lhs: Any, rhs: Any) -> bool:
    if op == "=":
        return lhs == rhs
    if op == "!=":
        return lhs != rhs
    left, right = order_key(lhs), order_key(rhs)
    if op == "<":
        return left < right
    if op == "<=":
        return left <= right
    if op == ">":
        return left > right
    if op == ">=":
        return left >= right
    raise EvaluationError(f"unknown comparison operator {op}")


def expand_pools(atom: Atom) -> list[Atom]:
    """Expand `(a;b)` pools into one ground atom per combination."""

    def options(term: Any) -> list[Any]:
        if isinstance(term, Pool):
            out: list[Any] = []
            for t in term.options:
                out.extend(options(t))
            return out
        if isinstance(term, tuple):
            return [tuple(combo) for combo in itertools.product(*(options(t) for t in term))]
        return [term]

    return [Atom(atom.predicate, tuple(args)) for args in itertools.product(*(options(a) for a in atom.args))]


@dataclass
class _RulePlan:
    rule: Rule
    steps: list[BodyLiteral] = field(default_factory=list)
    recursive_steps: list[int] = field(default_factory=list)


def _plan(rule: Rule) -> _RulePlan:
    """Order body literals: positives as written, filters as soon as their variables are bound."""
    positives = [lit for lit in rule.body if isinstance(lit, Positive)]
    filters = [lit for lit in rule.body if not isinstance(lit, Positive)]
    positive_vars: set[str] = set()
    for lit in positives:
        positive_vars |= atom_variables(lit.atom)

    def needs(lit: BodyLiteral) -> set[str]:
        if isinstance(lit, Comparison):
            return term_variables(lit.lhs) | term_variables(lit.rhs)
        if isinstance(lit, Negative):
            return atom_variables(lit.atom)
        if isinstance(lit, Cardinality):
            return atom_variables(lit.atom) & positive_vars
        return set()

    steps: list[BodyLiteral] = []
    bound: set[str] = set()
    pending = list(filters)

    def drain() -> None:
        for lit in list(pending):
            if needs(lit) <= bound:
                steps.append(lit)
                pending.remove(lit)

    drain()
    for lit in positives:
        steps.append(lit)
        bound.update(atom_variables(lit.atom))
        drain()
    steps.extend(pending)
    return _RulePlan(rule=rule, steps=steps)


def _solve(
    steps: list[BodyLiteral],
    db: _Database,
    delta_step: int | None = None,
    delta: _Database | None = None,
) -> Iterator[dict[str, Any]]:
    def walk(idx: int, binding: dict[str, Any]) -> Iterator[dict[str, Any]]:
        if idx == len(steps):
            yield binding
            return
        lit = steps[idx]
        if isinstance(lit, Positive):
            source = delta if (idx == delta_step and delta is not None) else db
            for atom in source.candidates(lit.atom, binding):
                extended = _match_atom(lit.atom, atom, binding)
                if extended is not None:
                    yield from walk(idx + 1, extended)
        elif isinstance(lit, Negative):
            if not any(_match_atom(lit.atom, a, binding) is not None for a in db.candidates(lit.atom, binding)):
                yield from walk(idx + 1, binding)
        elif isinstance(lit, Comparison):
            lhs = _substitute_comparison(lit.lhs, binding)
            rhs = _substitute_comparison(lit.rhs, binding)
            if compare(lit.op, lhs, rhs):
                yield from walk(idx + 1, binding)
        else:
            count = sum(1 for a in db.candidates(lit.atom, binding) if _match_atom(lit.atom, a, binding) is not None)
            if compare(lit.op, count, lit.bound):
                yield from walk(idx + 1, binding)

    yield from walk(0, {})


def _substitute_comparison(term: Any, binding: dict[str, Any]) -> Any:
    value = _substitute_partial(term, binding)
    if not is_ground(value):
        raise EvaluationError(f"non-ground comparison operand {format_term(term)}")
    return value


class Evaluator:
    """A compiled program, reusable across many base fact sets."""

    def __init__(self, program: Program) -> None:
        rules = list(program.rules())
        for rule in rules:
            if rule.is_choice:
                raise EvaluationError(f"choice rule cannot be evaluated here: {format_rule(rule)}")
        self.program = program
        self.strata = stratify(program)
        level = {pred: i for i, layer in enumerate(self.strata) for pred in layer}
        self.facts: list[Atom] = []
        self.layers: list[list[_RulePlan]] = [[] for _ in self.strata]
        self.constraints: list[_RulePlan] = []
        for rule in rules:
            if rule.is_fact:
                self.facts.extend(expand_pools(rule.head))
            elif rule.is_constraint:
                self.constraints.append(_plan(rule))
            else:
                plan = _plan(rule)
                head_level = level[rule.head.predicate]
                plan.recursive_steps = [
                    i
                    for i, lit in enumerate(plan.steps)
                    if isinstance(lit, Positive) and level.get(lit.atom.predicate) == head_level
                ]
                self.layers[head_level].append(plan)

    def run(self, base_facts: Iterable[Atom]) -> DerivedModel:
        db = _Database(base_facts)
        for atom in self.facts:
            db.add(atom)
        for plans in self.layers:
            _fixpoint(plans, db)
        failed = frozenset(
            i for i, plan in enumerate(self.constraints) if next(_solve(plan.steps, db), None) is not None
        )
        return DerivedModel(atoms=db.atoms(), inconsistent=bool(failed), failed_constraints=failed)


def _fixpoint(plans: list[_RulePlan], db: _Database) -> None:
    delta = _Database()
    for plan in plans:
        for binding in list(_solve(plan.steps, db)):
            atom = Atom(plan.rule.head.predicate, tuple(_substitute(a, binding) for a in plan.rule.head.args))
            if db.add(atom):
                delta.add(atom)
    while delta:
        fresh = _Database()
        for plan in plans:
            for step in plan.recursive_steps:
                for binding in list(_solve(plan.steps, db, delta_step=step, delta=delta)):
                    atom = Atom(plan.rule.head.predicate, tuple(_substitute(a, binding) for a in plan.rule.head.args))
                    if db.add(atom):
                        fresh.add(atom)
        delta = fresh


def evaluate(program: Program, base_facts: Iterable[Atom]) -> DerivedModel:
    """Least model of a stratified program over `base_facts`."""
    return Evaluator(program).run(base_facts)


def count_derivations(model: DerivedModel, predicate: str, name: Any) -> int:
    """Distinct `predicate(name, ...)` atoms, `predicate(name)` included."""
    if isinstance(name, str) and not isinstance(name, Symbol):
        name = Symbol(name)
    return sum(1 for a in model.atoms if a.predicate == predicate and a.args and a.args[0] == name)


def ground_choices(rule: Rule, atoms: Iterable[Atom]) -> list[tuple[Atom, list[Atom]]]:
    """Instantiate a choice rule over `atoms`.

    Returns one (slot, options) pair per distinct body match. The slot is the
    element with its condition-only variables replaced by `_`; options are the
    ground elements allowed by the condition.
    """
    head = rule.head
    if not isinstance(head, ChoiceHead):
        raise EvaluationError(f"not a choice rule: {format_rule(rule)}")
    db = _Database(atoms)
    plan = _plan(Rule(head=None, body=rule.body))
    out: list[tuple[Atom, list[Atom]]] = []
    seen: set[Atom] = set()
    for binding in _solve(plan.steps, db):
        slot = Atom(head.element.predicate, tuple(_anonymize(_substitute_partial(a, binding)) for a in head.element.args))
        if slot in seen:
            continue
        seen.add(slot)
        options: list[Atom] = []
        for atom in db.candidates(head.condition, binding):
            extended = _match_atom(head.condition, atom, binding)
            if extended is None:
                continue
            element = Atom(head.element.predicate, tuple(_substitute(a, extended) for a in head.element.args))
            if element not in options:
                options.append(element)
        out.append((slot, options))
    return out


def _anonymize(term: Any) -> Any:
    if isinstance(term, Variable):
        return ANON
    if isinstance(term, tuple):
        return tuple(_anonymize(t) for t in term)
    return term


def matches(pattern: Atom, atom: Atom) -> bool:
    return _match_atom(pattern, atom, {}) is not None
