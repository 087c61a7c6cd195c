"""Term representation shared by the parser and the evaluator.

Ground terms are plain Python values: ``int`` for integers, ``str`` for
symbols and ``tuple`` ``(functor, *args)`` for compound terms. An atom is a
compound term whose functor is the predicate name, so ``p(1, f(a))`` is
``("p", 1, ("f", "a"))``. Non-ground terms use :class:`Var` and the
arithmetic node classes below.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Union

INT64_MIN = -(2**63)
INT64_MAX = 2**63 - 1


class EngineError(Exception):
    """Base class for rule-engine errors."""


class ArithmeticOverflow(EngineError):
    pass


class ResourceLimitExceeded(EngineError):
    pass


@dataclass(frozen=True, slots=True)
class Var:
    name: str

    @property
    def anonymous(self) -> bool:
        return self.name.startswith("_")

    def __str__(self) -> str:
        return "_" if self.anonymous else self.name


@dataclass(frozen=True, slots=True)
class BinOp:
    op: str  # one of + - *
    left: Any
    right: Any

    def __str__(self) -> str:
        return f"({format_term(self.left)} {self.op} {format_term(self.right)})"


@dataclass(frozen=True, slots=True)
class Pow:
    base: Any
    exponent: int

    def __str__(self) -> str:
        return f"{format_term(self.base)}^{self.exponent}"


@dataclass(frozen=True, slots=True)
class Abs:
    arg: Any

    def __str__(self) -> str:
        return f"|{format_term(self.arg)}|"


@dataclass(frozen=True, slots=True)
class Neg:
    arg: Any

    def __str__(self) -> str:
        return f"-{format_term(self.arg)}"


Expr = Union[BinOp, Pow, Abs, Neg]
ARITH = (BinOp, Pow, Abs, Neg)


def is_ground(term) -> bool:
    if isinstance(term, Var) or isinstance(term, ARITH):
        return False
    if isinstance(term, tuple):
        return all(is_ground(a) for a in term[1:])
    return True


def term_vars(term, out: set | None = None) -> set:
    if out is None:
        out = set()
    if isinstance(term, Var):
        out.add(term)
    elif isinstance(term, tuple):
        for a in term[1:]:
            term_vars(a, out)
    elif isinstance(term, BinOp):
        term_vars(term.left, out)
        term_vars(term.right, out)
    elif isinstance(term, (Pow, Abs, Neg)):
        term_vars(term.base if isinstance(term, Pow) else term.arg, out)
    return out


def check_int(value: int) -> int:
    if value < INT64_MIN or value > INT64_MAX:
        raise ArithmeticOverflow(f"integer overflow: {value} does not fit in 64 bits")
    return value


def evaluate_term(term, subst: dict):
    """Instantiate ``term`` under ``subst``, computing arithmetic exactly.

    Raises KeyError for an unbound variable and ArithmeticOverflow when an
    intermediate result leaves the signed 64-bit range.
    """
    if isinstance(term, Var):
        return subst[term]
    if isinstance(term, tuple):
        return (term[0],) + tuple(evaluate_term(a, subst) for a in term[1:])
    if isinstance(term, BinOp):
        left = evaluate_term(term.left, subst)
        right = evaluate_term(term.right, subst)
        if not (isinstance(left, int) and isinstance(right, int)):
            raise TypeError(f"arithmetic on non-integer terms in {term}")
        if term.op == "+":
            return check_int(left + right)
        if term.op == "-":
            return check_int(left - right)
        return check_int(left * right)
    if isinstance(term, Pow):
        base = evaluate_term(term.base, subst)
        if not isinstance(base, int):
            raise TypeError(f"arithmetic on non-integer term in {term}")
        return check_int(base**term.exponent)
    if isinstance(term, Abs):
        v = evaluate_term(term.arg, subst)
        if not isinstance(v, int):
            raise TypeError(f"arithmetic on non-integer term in {term}")
        return check_int(abs(v))
    if isinstance(term, Neg):
        v = evaluate_term(term.arg, subst)
        if not isinstance(v, int):
            raise TypeError(f"arithmetic on non-integer term in {term}")
        return check_int(-v)
    return term


def order_key(term):
    """Total order on ground terms: integers < symbols < compound terms."""
    if isinstance(term, bool):
        raise TypeError("booleans are not terms")
    if isinstance(term, int):
        return (0, term)
    if isinstance(term, str):
        return (1, term)
    return (2, len(term) - 1, term[0], tuple(order_key(a) for a in term[1:]))


def format_term(term) -> str:
    if isinstance(term, tuple):
        if len(term) == 1:
            return term[0]
        return f"{term[0]}({','.join(format_term(a) for a in term[1:])})"
    return str(term)


def format_atom(atom) -> str:
    return format_term(atom)


def predicate_of(atom) -> tuple[str, int]:
    return atom[0], len(atom) - 1
