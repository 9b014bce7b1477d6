from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Any, Union

SYMBOL_RE = re.compile(r"[a-z][a-z0-9_]*\Z")


@dataclass(frozen=True, order=True)
class Symbol:
    """Lowercase constant such as `bar` or `root`."""

    name: str

    def __post_init__(self) -> None:
        if not SYMBOL_RE.match(self.name):
            raise ValueError(f"Invalid symbol: {self.name!r}")

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Variable:
    name: str


@dataclass(frozen=True)
class Anonymous:
    pass


@dataclass(frozen=True)
class Pool:
    """Ground alternatives `(a;b;c)`, only valid inside facts."""

    options: tuple[Any, ...]


ANON = Anonymous()
ROOT = Symbol("root")
NONE = Symbol("none")

Value = Union[Symbol, int, str]
Term = Union[Symbol, int, str, tuple, Variable, Anonymous, Pool]


@dataclass(frozen=True)
class Atom:
    predicate: str
    args: tuple[Any, ...] = ()

    def __str__(self) -> str:
        return format_atom(self)


def format_term(term: Any) -> str:
    """Render a term in rule-language text form."""
    if isinstance(term, bool):
        raise TypeError("booleans are written as the symbols true/false")
    if isinstance(term, Symbol):
        return term.name
    if isinstance(term, int):
        return str(term)
    if isinstance(term, str):
        return json.dumps(term, ensure_ascii=False)
    if isinstance(term, tuple):
        return "(" + ",".join(format_term(t) for t in term) + ")"
    if isinstance(term, Variable):
        return term.name
    if isinstance(term, Anonymous):
        return "_"
    if isinstance(term, Pool):
        return "(" + ";".join(format_term(t) for t in term.options) + ")"
    raise TypeError(f"Unknown term: {term!r}")


def format_atom(atom: Atom) -> str:
    if not atom.args:
        return atom.predicate
    return f"{atom.predicate}(" + ",".join(format_term(a) for a in atom.args) + ")"


def is_ground(term: Any) -> bool:
    if isinstance(term, (Variable, Anonymous)):
        return False
    if isinstance(term, tuple):
        return all(is_ground(t) for t in term)
    if isinstance(term, Pool):
        return all(is_ground(t) for t in term.options)
    return True


def term_variables(term: Any) -> set[str]:
    if isinstance(term, Variable):
        return {term.name}
    if isinstance(term, tuple):
        out: set[str] = set()
        for t in term:
            out |= term_variables(t)
        return out
    if isinstance(term, Pool):
        out = set()
        for t in term.options:
            out |= term_variables(t)
        return out
    return set()


def atom_variables(atom: Atom) -> set[str]:
    out: set[str] = set()
    for arg in atom.args:
        out |= term_variables(arg)
    return out


def has_anonymous(term: Any) -> bool:
    if isinstance(term, Anonymous):
        return True
    if isinstance(term, tuple):
        return any(has_anonymous(t) for t in term)
    return False


def order_key(term: Any) -> tuple:
    """Total order on ground terms: integers < symbols < strings < tuples."""
    if isinstance(term, int) and not isinstance(term, bool):
        return (0, term)
    if isinstance(term, Symbol):
        return (1, term.name)
    if isinstance(term, str):
        return (2, term)
    if isinstance(term, tuple):
        return (3, len(term), tuple(order_key(t) for t in term))
    raise TypeError(f"Cannot order term: {term!r}")


def to_value(raw: Any) -> Value:
    """Coerce a plain Python scalar into a Value (symbols when they look like one)."""
    if isinstance(raw, bool):
        return Symbol("true" if raw else "false")
    if isinstance(raw, (Symbol, int)):
        return raw
    if isinstance(raw, str):
        return Symbol(raw) if SYMBOL_RE.match(raw) else raw
    raise TypeError(f"Not a value: {raw!r}")


def from_value(value: Value) -> int | str:
    if isinstance(value, Symbol):
        return value.name
    return value
