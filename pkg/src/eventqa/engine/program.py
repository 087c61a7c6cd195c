"""Rules, programs and the textual rule-language parser."""
from __future__ import annotations

import re
from dataclasses import dataclass, field

from .terms import (
    ARITH,
    Abs,
    BinOp,
    EngineError,
    Neg,
    Pow,
    Var,
    format_term,
    is_ground,
    predicate_of,
    term_vars,
)

COMPARISON_OPS = ("=", "!=", "<", "<=", ">", ">=")


class ParseError(EngineError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} at line {line}, column {column}")
        self.line = line
        self.column = column


class UnsafeRuleError(EngineError):
    def __init__(self, rule: "Rule", variable: Var):
        super().__init__(f"unsafe variable {variable.name} in rule: {rule}")
        self.variable = variable


@dataclass(frozen=True)
class Comparison:
    op: str
    left: object
    right: object

    def __str__(self) -> str:
        return f"{format_term(self.left)} {self.op} {format_term(self.right)}"


@dataclass(frozen=True)
class Rule:
    head: tuple
    body_pos: tuple = ()
    body_neg: tuple = ()
    constraints: tuple = ()

    def __str__(self) -> str:
        parts = [format_term(a) for a in self.body_pos]
        parts += [f"not {format_term(a)}" for a in self.body_neg]
        parts += [str(c) for c in self.constraints]
        if not parts:
            return f"{format_term(self.head)}."
        return f"{format_term(self.head)} :- {', '.join(parts)}."

    def variables(self) -> set:
        out = term_vars(self.head)
        for a in self.body_pos + self.body_neg:
            term_vars(a, out)
        for c in self.constraints:
            term_vars(c.left, out)
            term_vars(c.right, out)
        return out


@dataclass
class Program:
    rules: list = field(default_factory=list)
    facts: list = field(default_factory=list)

    def predicates(self) -> set:
        preds = {predicate_of(f) for f in self.facts}
        for r in self.rules:
            preds.add(predicate_of(r.head))
            preds.update(predicate_of(a) for a in r.body_pos + r.body_neg)
        return preds

    def __add__(self, other: "Program") -> "Program":
        return Program(self.rules + other.rules, self.facts + other.facts)

    def __str__(self) -> str:
        lines = [f"{format_term(f)}." for f in self.facts]
        lines += [str(r) for r in self.rules]
        return "\n".join(lines) + "\n"


def bound_by_positive(rule: Rule, prebound: frozenset = frozenset()) -> set:
    """Variables bound by positive atoms, plus those fixed by ``X = expr``."""
    bound = set(prebound)
    for a in rule.body_pos:
        for arg in a[1:]:
            if not isinstance(arg, ARITH):
                term_vars(arg, bound)
    changed = True
    while changed:
        changed = False
        for c in rule.constraints:
            if c.op != "=":
                continue
            for target, source in ((c.left, c.right), (c.right, c.left)):
                if isinstance(target, Var) and target not in bound and term_vars(source) <= bound:
                    bound.add(target)
                    changed = True
    return bound


def check_safety(rule: Rule) -> None:
    bound = bound_by_positive(rule)
    needed = term_vars(rule.head)
    for c in rule.constraints:
        term_vars(c.left, needed)
        term_vars(c.right, needed)
    for a in rule.body_pos:
        for arg in a[1:]:
            if isinstance(arg, ARITH):
                term_vars(arg, needed)
    for a in rule.body_neg:
        needed |= {v for v in term_vars(a) if not v.anonymous}
    for v in sorted(needed - bound, key=lambda v: v.name):
        raise UnsafeRuleError(rule, v)


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>%[^\n]*)
  | (?P<directive>\#[a-z]+)
  | (?P<int>\d+)
  | (?P<var>[A-Z_][A-Za-z0-9_]*)
  | (?P<ident>[a-z][A-Za-z0-9_]*)
  | (?P<op>:-|!=|<=|>=|[=<>+\-*^|(),.])
    """,
    re.VERBOSE,
)


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind not in ("ws", "comment"):
            toks.append(_Tok(kind, m.group(), line, pos - line_start + 1))
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0
        self.consts: dict[str, object] = {}
        self.anon = 0
        self.in_abs = 0

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def error(self, message: str):
        raise ParseError(message, self.tok.line, self.tok.col)

    def accept(self, text: str) -> bool:
        if self.tok.kind in ("op", "ident") and self.tok.text == text:
            self.i += 1
            return True
        return False

    def expect(self, text: str):
        if not self.accept(text):
            self.error(f"expected {text!r}, found {self.tok.text or 'end of input'!r}")

    def program(self) -> Program:
        # constants are program-wide, wherever the directive appears
        for k, tok in enumerate(self.toks):
            if tok.kind == "directive":
                self.i = k
                self.directive()
        self.i = 0
        prog = Program()
        while self.tok.kind != "eof":
            if self.tok.kind == "directive":
                self.directive()
                continue
            head = self.atom()
            body = []
            if self.accept(":-"):
                body.append(self.literal())
                while self.accept(","):
                    body.append(self.literal())
            self.expect(".")
            pos = tuple(a for kind, a in body if kind == "pos")
            neg = tuple(a for kind, a in body if kind == "neg")
            cmp = tuple(a for kind, a in body if kind == "cmp")
            if not body and is_ground(head):
                prog.facts.append(head)
                continue
            rule = Rule(head, pos, neg, cmp)
            try:
                check_safety(rule)
            except UnsafeRuleError as exc:
                raise UnsafeRuleError(rule, exc.variable) from None
            prog.rules.append(rule)
        return prog

    def directive(self):
        if self.tok.text != "#const":
            self.error(f"unknown directive {self.tok.text}")
        self.i += 1
        if self.tok.kind != "ident":
            self.error("expected constant name")
        name = self.tok.text
        self.i += 1
        self.expect("=")
        value = self.expr()
        if not is_ground(value):
            self.error("constant value must be ground")
        self.expect(".")
        self.consts[name] = value

    def literal(self):
        if self.tok.kind == "ident" and self.tok.text == "not":
            self.i += 1
            return "neg", self.atom()
        left = self.expr()
        if self.tok.kind == "op" and self.tok.text in COMPARISON_OPS:
            op = self.tok.text
            self.i += 1
            return "cmp", Comparison(op, left, self.expr())
        if isinstance(left, tuple):
            return "pos", left
        if isinstance(left, str):
            return "pos", (left,)
        self.error("expected atom or comparison")

    def atom(self) -> tuple:
        if self.tok.kind != "ident":
            self.error(f"expected predicate name, found {self.tok.text or 'end of input'!r}")
        name = self.tok.text
        self.i += 1
        if name in self.consts:
            self.error(f"constant {name} used as predicate")
        if self.accept("("):
            args = self.args()
            return (name, *args)
        return (name,)

    def args(self) -> list:
        args = [self.expr()]
        while self.accept(","):
            args.append(self.expr())
        self.expect(")")
        return args

    def expr(self):
        left = self.product()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.tok.text
            self.i += 1
            left = _fold(BinOp(op, left, self.product()))
        return left

    def product(self):
        left = self.power()
        while self.tok.kind == "op" and self.tok.text == "*":
            self.i += 1
            left = _fold(BinOp("*", left, self.power()))
        return left

    def power(self):
        base = self.unary()
        if self.accept("^"):
            if self.tok.kind != "int":
                self.error("exponent must be a non-negative integer literal")
            exp = int(self.tok.text)
            self.i += 1
            return _fold(Pow(base, exp))
        return base

    def unary(self):
        if self.accept("-"):
            return _fold(Neg(self.unary()))
        return self.primary()

    def primary(self):
        tok = self.tok
        if tok.kind == "int":
            self.i += 1
            return int(tok.text)
        if tok.kind == "var":
            self.i += 1
            if tok.text == "_":
                self.anon += 1
                return Var(f"_{self.anon}")
            return Var(tok.text)
        if tok.kind == "ident":
            if tok.text == "not":
                self.error("unexpected 'not'")
            self.i += 1
            if self.accept("("):
                return (tok.text, *self.args())
            return self.consts.get(tok.text, tok.text)
        if self.accept("("):
            inner = self.expr()
            self.expect(")")
            return inner
        if self.tok.kind == "op" and self.tok.text == "|" and not self.in_abs:
            self.i += 1
            self.in_abs += 1
            inner = self.expr()
            self.in_abs -= 1
            self.expect("|")
            return _fold(Abs(inner))
        self.error(f"unexpected token {tok.text or 'end of input'!r}")


def _fold(node):
    """Evaluate arithmetic nodes whose operands are all integer literals."""
    from .terms import evaluate_term

    if not term_vars(node) and all(
        isinstance(x, int) for x in _operands(node)
    ):
        return evaluate_term(node, {})
    return node


def _operands(node):
    if isinstance(node, BinOp):
        return [node.left, node.right]
    if isinstance(node, Pow):
        return [node.base]
    return [node.arg]


def parse_program(text: str) -> Program:
    """Parse rule-language text into a :class:`Program`.

    Raises ParseError (with line and column) on malformed input and
    UnsafeRuleError naming the first unbound variable of an unsafe rule.
    """
    return _Parser(text).program()
