"""Compile question ASTs to goal programs and read answers off the model.

Each question becomes rules with head ``answer(q, X)``. Count goals bind X
to the subject object, exist goals derive ``answer(q, yes)``, and
query_attribute goals bind X to the asked attribute value. Multiple-choice
goals derive ``answer(q, k)`` for every option index k that holds.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product

from .engine import Program, evaluate, parse_program, stratify
from .facts import reconstruct
from .physics import Thresholds
from .pipeline import Reasoning, reason
from .question import DESCRIPTIVE, EventRef, ObjectFilter, Presence, QuestionAST
from .scene import DEFAULT_VOCABULARY, Vocabulary
from .sim import AmbiguousReferent, SimConfig, resimulate_without, simulate

PRELUDE = """\
has_next(T) :- next_time(T, T2).
end_time(T) :- time(T), not has_next(T).
"""


class CompileError(ValueError):
    pass


class UnsupportedQuestion(ValueError):
    pass


@dataclass(frozen=True)
class Goal:
    qid: int
    ast: QuestionAST
    text: str


def _filter(var: str, flt: ObjectFilter, vocab: Vocabulary) -> list:
    out = []
    for name, value in flt.constraints():
        allowed = {"color": vocab.colors, "shape": vocab.shapes, "material": vocab.materials}[name]
        if value not in allowed:
            raise CompileError(f"{name} {value!r} is not in the vocabulary")
        out.append(f"{name}({var}, {value})")
    return out


def _event_term(ref: EventRef, names: tuple, vocab: Vocabulary) -> list:
    """(term, literals) alternatives for an event phrase; collisions match either order."""
    if ref.kind == "collision":
        a, b = names
        fa, fb = ref.objects
        body = _filter(a, fa, vocab) + _filter(b, fb, vocab)
        return [(f"collision({a}, {b})", body), (f"collision({b}, {a})", body)]
    (a,) = names[:1]
    return [(f"{ref.kind}({a})", _filter(a, ref.objects[0], vocab))]


def _descriptive_bodies(ast: QuestionAST, vocab: Vocabulary) -> list:
    base = ["object(X)"] + _filter("X", ast.subject, vocab)
    if ast.state is not None:
        when = ["T0 = 0"] if ast.temporal.relation == "begin" else ["end_time(T0)"]
        state = {
            "present": ["on_camera(X, T0)"],
            "moving": ["on_camera(X, T0)", "holdsAt(moving(X), T0)"],
            "stationary": ["on_camera(X, T0)", "not holdsAt(moving(X), T0)"],
        }[ast.state]
        return [base + when + state]
    pattern = ast.event
    if pattern.kind == "collision":
        partner = _filter("Y", pattern.partner, vocab) if pattern.partner is not None else []
        subject = [["happens(collision(X, Y), T)"] + partner, ["happens(collision(Y, X), T)"] + partner]
    else:
        subject = [[f"happens({pattern.kind}(X), T)"]]
    if ast.temporal is None:
        return [base + s for s in subject]
    op = "<" if ast.temporal.relation == "before" else ">"
    refs = [
        [f"happens({term}, T2)"] + lits + [f"T {op} T2"]
        for term, lits in _event_term(ast.temporal.event, ("R1", "R2"), vocab)
    ]
    return [base + s + r for s, r in product(subject, refs)]


def _node(opt, names: tuple, vocab: Vocabulary) -> list:
    if isinstance(opt, Presence):
        return [(f"object({names[0]})", _filter(names[0], opt.obj, vocab))]
    return [(f"event({term})", lits) for term, lits in _event_term(opt, names, vocab)]


def compile_question(ast: QuestionAST, qid: int = 0, *, since: int = 0, vocab: Vocabulary = DEFAULT_VOCABULARY) -> Goal:
    """Goal program for one question; ``since`` bounds predictive options from below."""
    rules = []
    if ast.qtype in DESCRIPTIVE:
        head = f"answer({qid}, X)"
        extra = []
        if ast.qtype == "exist":
            head = f"answer({qid}, yes)"
        elif ast.qtype == "query_attribute":
            head = f"answer({qid}, C)"
            extra = [f"{ast.target_attribute}(X, C)"]
        for body in _descriptive_bodies(ast, vocab):
            rules.append(f"{head} :- {', '.join(body + extra)}.")
    elif ast.qtype == "explanatory":
        targets = _node(ast.target_event, ("E1", "E2"), vocab)
        for k, opt in enumerate(ast.options):
            for (src, src_lits), (dst, dst_lits) in product(_node(opt, ("O1", "O2"), vocab), targets):
                body = [f"cause({src}, {dst})"] + src_lits + dst_lits
                rules.append(f"answer({qid}, {k}) :- {', '.join(body)}.")
    else:
        # counterfactual goals run over the re-simulated world, so every frame counts
        bound = [f"T >= {since}"] if ast.qtype == "predictive" else []
        for k, opt in enumerate(ast.options):
            for term, lits in _event_term(opt, ("O1", "O2"), vocab):
                body = [f"happens({term}, T)"] + lits + bound
                rules.append(f"answer({qid}, {k}) :- {', '.join(body)}.")
    return Goal(qid, ast, "\n".join(rules) + "\n")


def goal_program(goals) -> Program:
    return parse_program(PRELUDE + "".join(g.text for g in goals))


def _bindings(model, qid) -> set:
    return {atom[2] for atom in model.by_predicate("answer", 2) if atom[1] == qid}


def answer(goal: Goal, model):
    """Read one question's answer from a model that includes its goal rules."""
    values = _bindings(model, goal.qid)
    ast = goal.ast
    if ast.qtype == "count":
        return len(values)
    if ast.qtype == "exist":
        return "yes" if values else "no"
    if ast.qtype == "query_attribute":
        if len(values) != 1:
            raise AmbiguousReferent(f"query matches {len(values)} distinct {ast.target_attribute} values")
        return next(iter(values))
    return ["yes" if k in values else "no" for k in range(len(ast.options))]


@dataclass
class QuestionSet:
    """Questions compiled once into a single goal program, reusable across scenes and thresholds."""

    asts: list
    goals: list
    errors: dict
    program: Program
    plan: object = None

    def answer(self, atoms) -> list:
        if isinstance(atoms, Reasoning):
            atoms = atoms.atoms()
        results: list = [self.errors.get(i) for i in range(len(self.asts))]
        if not self.goals:
            return results
        model = evaluate(self.program, atoms, plan=self.plan)
        for goal in self.goals:
            try:
                results[goal.qid] = answer(goal, model)
            except AmbiguousReferent as exc:
                results[goal.qid] = exc
        return results


def prepare(asts, *, since: int = 0) -> QuestionSet:
    goals, errors = [], {}
    for i, ast in enumerate(asts):
        try:
            goals.append(compile_question(ast, i, since=since))
        except CompileError as exc:
            errors[i] = exc
    program = goal_program(goals)
    return QuestionSet(list(asts), goals, errors, program, stratify(program))


def answer_all(asts, atoms, *, since: int = 0) -> list:
    """Answer many questions in one engine run; failures are returned as exceptions."""
    return prepare(asts, since=since).answer(atoms)


def answer_whatif(
    ast: QuestionAST,
    config: SimConfig | None,
    th: Thresholds,
    variant: str = "H2",
    *,
    observed: int | None = None,
    factual: Reasoning | None = None,
):
    """Answer a predictive or counterfactual question by re-simulating the scene.

    Predictive options are tested on frames from ``observed`` onward of the
    simulation extended to the configured length. Counterfactual options are
    tested on the world re-simulated without the named object.
    """
    if config is None:
        raise UnsupportedQuestion(f"{ast.qtype} questions need the scene's simulator configuration")
    if ast.qtype == "predictive":
        trace, _ = simulate(config)
        world = reason(reconstruct(trace), th, variant)
        since = config.frame_count if observed is None else observed
        return answer_all([ast], world, since=since)[0]
    if ast.qtype != "counterfactual":
        raise UnsupportedQuestion(f"{ast.qtype} questions are answered from the observed scene")
    if factual is None:
        trace, _ = simulate(config)
        factual = reason(reconstruct(trace), th, variant)
    matches = [v for v in sorted(factual.fb.attributes) if ast.removed.matches(factual.fb.attributes[v])]
    if len(matches) != 1:
        raise AmbiguousReferent(f"removed object phrase matches {len(matches)} objects")
    trace, _ = resimulate_without(config, matches[0])
    world = reason(reconstruct(trace), th, variant)
    return answer_all([ast], world)[0]


def format_answer(value) -> str:
    if isinstance(value, Exception):
        return f"error: {value}"
    if isinstance(value, list):
        return ",".join(value)
    return str(value)


def parse_answer(text: str):
    text = text.strip()
    if "," in text:
        return text.split(",")
    if text.isdigit():
        return int(text)
    return text


def write_answers(items) -> str:
    return "".join(f"{qid}\t{format_answer(value)}\n" for qid, value in items)


def read_answers(text: str) -> list:
    out = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        if "\t" not in line:
            raise ValueError(f"line {lineno}: expected id<TAB>answer")
        qid, value = line.split("\t", 1)
        out.append((qid, value.strip()))
    return out
