"""Bottom-up evaluation of stratified programs (perfect-model semantics)."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable

from .program import Program, Rule
from .stratify import StrataPlan, Stratum, stratify, time_spec
from .terms import (
    ARITH,
    EngineError,
    ResourceLimitExceeded,
    Var,
    evaluate_term,
    format_term,
    order_key,
    predicate_of,
    term_vars,
)

DEFAULT_MAX_ATOMS = 5_000_000
MAX_FRAMES = 1_000_000


class UnknownPredicate(EngineError):
    pass


class Relation:
    __slots__ = ("atoms", "rows", "indexes")

    def __init__(self):
        self.atoms = set()
        self.rows = []
        self.indexes = {}

    def add(self, atom) -> bool:
        if atom in self.atoms:
            return False
        self.atoms.add(atom)
        self.rows.append(atom)
        for positions, index in self.indexes.items():
            key = tuple(atom[p] for p in positions)
            index.setdefault(key, []).append(atom)
        return True

    def lookup(self, positions: tuple, key: tuple) -> list:
        if not positions:
            return self.rows
        index = self.indexes.get(positions)
        if index is None:
            index = {}
            for atom in self.rows:
                index.setdefault(tuple(atom[p] for p in positions), []).append(atom)
            self.indexes[positions] = index
        return index.get(key, ())


class Database:
    def __init__(self, max_atoms: int = DEFAULT_MAX_ATOMS):
        self.relations: dict = {}
        self.size = 0
        self.max_atoms = max_atoms

    def relation(self, pred) -> Relation:
        rel = self.relations.get(pred)
        if rel is None:
            rel = self.relations[pred] = Relation()
        return rel

    def add(self, atom) -> bool:
        added = self.relation(predicate_of(atom)).add(atom)
        if added:
            self.size += 1
            if self.size > self.max_atoms:
                raise ResourceLimitExceeded(f"model exceeds {self.max_atoms} atoms")
        return added

    def __contains__(self, atom) -> bool:
        rel = self.relations.get(predicate_of(atom))
        return rel is not None and atom in rel.atoms


def _match(pattern, value, subst: dict) -> bool:
    """One-way unification of a (possibly non-ground) pattern with a ground term."""
    if isinstance(pattern, Var):
        bound = subst.get(pattern, _MISSING)
        if bound is _MISSING:
            subst[pattern] = value
            return True
        return bound == value
    if isinstance(pattern, tuple):
        if not isinstance(value, tuple) or len(value) != len(pattern) or value[0] != pattern[0]:
            return False
        for p, v in zip(pattern[1:], value[1:]):
            if not _match(p, v, subst):
                return False
        return True
    if isinstance(pattern, ARITH):
        return evaluate_term(pattern, subst) == value
    return pattern == value


_MISSING = object()


def _compare(op: str, left, right) -> bool:
    if op == "=":
        return left == right
    if op == "!=":
        return left != right
    if not (isinstance(left, int) and isinstance(right, int)):
        left, right = order_key(left), order_key(right)
    if op == "<":
        return left < right
    if op == "<=":
        return left <= right
    if op == ">":
        return left > right
    return left >= right


@dataclass
class _Step:
    kind: str  # atom | neg | test | assign
    payload: object
    key_positions: tuple = ()
    key_terms: tuple = ()
    delta: bool = False
    target: Var | None = None


def _selectivity(atom, keyable, k):
    arity = max(len(atom) - 1, 1)
    bound = sum(keyable(a) for a in atom[1:])
    return (bound / arity, bound, -k)


def _plan(rule: Rule, prebound: frozenset, delta_index: int | None) -> list:
    """Order body literals greedily: most-bound positive atom first."""
    bound = set(prebound)
    steps = []
    pending_atoms = list(range(len(rule.body_pos)))
    pending_neg = list(rule.body_neg)
    pending_cmp = list(rule.constraints)

    def flush():
        progress = True
        while progress:
            progress = False
            for c in list(pending_cmp):
                lv, rv = term_vars(c.left), term_vars(c.right)
                if lv <= bound and rv <= bound:
                    steps.append(_Step("test", c))
                    pending_cmp.remove(c)
                    progress = True
                elif c.op == "=" and isinstance(c.left, Var) and c.left not in bound and rv <= bound:
                    steps.append(_Step("assign", c.right, target=c.left))
                    bound.add(c.left)
                    pending_cmp.remove(c)
                    progress = True
                elif c.op == "=" and isinstance(c.right, Var) and c.right not in bound and lv <= bound:
                    steps.append(_Step("assign", c.left, target=c.right))
                    bound.add(c.right)
                    pending_cmp.remove(c)
                    progress = True
        for a in list(pending_neg):
            if {v for v in term_vars(a) if not v.anonymous} <= bound:
                steps.append(_Step("neg", a))
                pending_neg.remove(a)

    def keyable(arg) -> bool:
        return term_vars(arg) <= bound

    flush()
    if delta_index is not None:
        pending_atoms.remove(delta_index)
        order = [delta_index]
    else:
        order = []
    while order or pending_atoms:
        if order:
            j = order.pop()
        else:
            j = max(
                pending_atoms,
                key=lambda k: _selectivity(rule.body_pos[k], keyable, k),
            )
            pending_atoms.remove(j)
        atom = rule.body_pos[j]
        positions = tuple(i for i, a in enumerate(atom) if i > 0 and keyable(a))
        steps.append(
            _Step("atom", atom, positions, tuple(atom[i] for i in positions), delta=(j == delta_index))
        )
        for a in atom[1:]:
            if not isinstance(a, ARITH):
                term_vars(a, bound)
        flush()
    if pending_cmp or pending_neg:
        raise EngineError(f"cannot order body of rule {rule}")
    return steps


# plans depend only on the rule and the binding pattern, so they are shared across runs
_cached_plan = lru_cache(maxsize=1 << 16)(_plan)


class _Evaluator:
    def __init__(self, db: Database, naive: bool):
        self.db = db
        self.naive = naive
        self.plans: dict = {}
        self.provenance: dict = {}

    def plan(self, rule_id, rule, prebound, delta_index):
        key = (rule_id, prebound, delta_index)
        p = self.plans.get(key)
        if p is None:
            p = self.plans[key] = _cached_plan(rule, prebound, delta_index)
        return p

    def fire(self, rule_id, rule: Rule, subst: dict, delta_rel=None, delta_index=None):
        """Yield (head atom, substitution) for every body match."""
        steps = self.plan(rule_id, rule, frozenset(subst), delta_index)
        db = self.db
        head = rule.head
        n = len(steps)

        def run(i, s):
            while i < n:
                st = steps[i]
                kind = st.kind
                if kind == "atom":
                    rel = delta_rel if st.delta else db.relations.get(predicate_of(st.payload))
                    if rel is None:
                        return
                    key = tuple(evaluate_term(t, s) for t in st.key_terms)
                    pattern = st.payload
                    for atom in rel.lookup(st.key_positions, key):
                        s2 = dict(s)
                        ok = True
                        for p, v in zip(pattern[1:], atom[1:]):
                            if not _match(p, v, s2):
                                ok = False
                                break
                        if ok:
                            yield from run(i + 1, s2)
                    return
                if kind == "test":
                    c = st.payload
                    if not _compare(c.op, evaluate_term(c.left, s), evaluate_term(c.right, s)):
                        return
                elif kind == "assign":
                    s = dict(s)
                    s[st.target] = evaluate_term(st.payload, s)
                else:  # neg
                    pattern = st.payload
                    if any(v.anonymous for v in term_vars(pattern)):
                        rel = db.relations.get(predicate_of(pattern))
                        if rel is not None and any(_match(pattern, a, dict(s)) for a in rel.rows):
                            return
                    elif evaluate_term(pattern, s) in db:
                        return
                i += 1
            yield evaluate_term(head, s), s

        yield from run(0, dict(subst))

    def record(self, atom, rule_id, subst) -> None:
        if atom not in self.provenance:
            self.provenance[atom] = (rule_id, tuple(sorted((v.name, x) for v, x in subst.items() if not v.anonymous)))

    def run_stratum(self, stratum: Stratum, offset: int) -> None:
        if stratum.temporal:
            self.run_temporal(stratum, offset)
        elif self.naive:
            self.run_naive(stratum.rules, offset)
        else:
            self.run_seminaive(stratum, offset)

    def run_naive(self, rules, offset, prebind=None) -> bool:
        any_new = False
        while True:
            new = []
            for i, r in enumerate(rules):
                subst = prebind(i) if prebind else {}
                if subst is None:
                    continue
                for atom, s in self.fire(offset + i, r, subst):
                    if atom not in self.db:
                        new.append((atom, offset + i, s))
            added = False
            for atom, rid, s in new:
                if self.db.add(atom):
                    self.record(atom, rid, s)
                    added = True
            if not added:
                return any_new
            any_new = True

    def run_seminaive(self, stratum: Stratum, offset: int) -> None:
        preds = stratum.predicates
        rules = stratum.rules
        delta: dict = {}
        for i, r in enumerate(rules):
            for atom, s in self.fire(offset + i, r, {}):
                if self.db.add(atom):
                    self.record(atom, offset + i, s)
                    delta.setdefault(predicate_of(atom), Relation()).add(atom)
        recursive = [
            (i, r, [j for j, a in enumerate(r.body_pos) if predicate_of(a) in preds])
            for i, r in enumerate(rules)
        ]
        recursive = [x for x in recursive if x[2]]
        while delta:
            new = []
            for i, r, js in recursive:
                for j in js:
                    drel = delta.get(predicate_of(r.body_pos[j]))
                    if drel is None:
                        continue
                    for atom, s in self.fire(offset + i, r, {}, drel, j):
                        if atom not in self.db:
                            new.append((atom, offset + i, s))
            delta = {}
            for atom, rid, s in new:
                if self.db.add(atom):
                    self.record(atom, rid, s)
                    delta.setdefault(predicate_of(atom), Relation()).add(atom)

    def frame_range(self, stratum: Stratum) -> tuple[int, int] | None:
        times = []
        ks = []
        for n, r in enumerate(stratum.rules):
            hs = stratum.head_times[n]
            if hs.var is None:
                times.append(hs.offset)
                continue
            ks.append(hs.offset)
            for a in r.body_pos:
                p = predicate_of(a)
                if p in stratum.predicates:
                    continue
                rel = self.db.relations.get(p)
                if rel is None:
                    continue
                times.extend(x[-1] for x in rel.rows if isinstance(x[-1], int))
        if not times:
            return None
        lo, hi = min(times), max(times)
        if ks:
            lo += min(0, min(ks))
            hi += max(0, max(ks))
        return lo, hi

    def run_temporal(self, stratum: Stratum, offset: int) -> None:
        bounds = self.frame_range(stratum)
        if bounds is None:
            return
        lo, hi = bounds
        by_pred: dict = {}
        for n, r in enumerate(stratum.rules):
            by_pred.setdefault(predicate_of(r.head), []).append(n)
        max_lag = 1
        for n, r in enumerate(stratum.rules):
            hs = stratum.head_times[n]
            for a in r.body_pos + r.body_neg:
                if predicate_of(a) in stratum.predicates:
                    bs = time_spec(a[-1])
                    max_lag = max(max_lag, hs.offset - bs.offset)
        t = lo
        idle = 0
        while True:
            produced = False
            for preds, recursive in stratum.frame_order:
                idx = [n for p in preds for n in by_pred.get(p, [])]
                rules = [stratum.rules[n] for n in idx]

                def prebind(k, t=t, idx=idx):
                    hs = stratum.head_times[idx[k]]
                    if hs.var is None:
                        return {} if hs.offset == t else None
                    return {hs.var: t - hs.offset}

                if recursive:
                    if self.run_naive_indexed(rules, idx, offset, prebind):
                        produced = True
                else:
                    for k, r in enumerate(rules):
                        subst = prebind(k)
                        if subst is None:
                            continue
                        found = list(self.fire(offset + idx[k], r, subst))
                        for atom, s in found:
                            if self.db.add(atom):
                                self.record(atom, offset + idx[k], s)
                                produced = True
            t += 1
            idle = 0 if produced else idle + 1
            if t > hi and idle > max_lag:
                break
            if t - lo > MAX_FRAMES:
                raise ResourceLimitExceeded("temporal evaluation exceeded the frame limit")

    def run_naive_indexed(self, rules, idx, offset, prebind) -> bool:
        any_new = False
        while True:
            new = []
            for k, r in enumerate(rules):
                subst = prebind(k)
                if subst is None:
                    continue
                for atom, s in self.fire(offset + idx[k], r, subst):
                    if atom not in self.db:
                        new.append((atom, offset + idx[k], s))
            added = False
            for atom, rid, s in new:
                if self.db.add(atom):
                    self.record(atom, rid, s)
                    added = True
            if not added:
                return any_new
            any_new = True


@dataclass
class Model:
    """The perfect model of a program over a fact base.

    ``provenance`` maps each derived atom to ``(rule, bindings)``: one rule
    instantiation whose body holds in the model.
    """

    atoms: frozenset
    provenance: dict = field(default_factory=dict)
    rules: list = field(default_factory=list)
    predicates: frozenset = frozenset()
    _by_pred: dict = field(default_factory=dict, repr=False)

    def __contains__(self, atom) -> bool:
        return atom in self.atoms

    def __len__(self) -> int:
        return len(self.atoms)

    def by_predicate(self, name: str, arity: int) -> list:
        key = (name, arity)
        if key not in self._by_pred:
            self._by_pred[key] = [a for a in self.atoms if predicate_of(a) == key]
        return self._by_pred[key]

    def explain(self, atom):
        """Return the recorded rule instantiation for ``atom`` (None for facts)."""
        entry = self.provenance.get(atom)
        if entry is None:
            return None
        rule_id, bindings = entry
        return self.rules[rule_id], dict(bindings)

    def dump(self) -> str:
        return "".join(f"{line}.\n" for line in sorted(format_term(a) for a in self.atoms))


def _atoms_of(fb) -> Iterable:
    if fb is None:
        return ()
    return getattr(fb, "atoms", fb)


def evaluate(
    program: Program,
    fb=None,
    *,
    plan: StrataPlan | None = None,
    naive: bool = False,
    max_atoms: int = DEFAULT_MAX_ATOMS,
) -> Model:
    """Compute the perfect model of ``program`` extended with the atoms of ``fb``.

    ``fb`` may be a FactBase, a Model, or any iterable of ground atoms.
    """
    if plan is None:
        plan = stratify(program)
    db = Database(max_atoms)
    for atom in program.facts:
        db.add(atom)
    for atom in _atoms_of(fb):
        db.add(atom)
    ev = _Evaluator(db, naive)
    all_rules = []
    for stratum in plan.strata:
        ev.run_stratum(stratum, len(all_rules))
        all_rules.extend(stratum.rules)
    atoms = frozenset(a for rel in db.relations.values() for a in rel.atoms)
    preds = frozenset(program.predicates()) | frozenset(db.relations)
    return Model(atoms, ev.provenance, all_rules, preds)


def query(model: Model, goal) -> list[dict]:
    """All substitutions grounding ``goal`` to a model atom, in a fixed order.

    Results map variable names to values and are sorted by the term order of
    the bound values (variables taken alphabetically).
    """
    pred = predicate_of(goal)
    if pred not in model.predicates:
        raise UnknownPredicate(f"unknown predicate {pred[0]}/{pred[1]}")
    names = sorted({v for v in term_vars(goal) if not v.anonymous}, key=lambda v: v.name)
    out = {}
    for atom in model.by_predicate(*pred):
        s: dict = {}
        if _match(goal, atom, s):
            key = tuple(s[v] for v in names)
            out[key] = {v.name: s[v] for v in names}
    return [out[k] for k in sorted(out, key=lambda k: tuple(order_key(x) for x in k))]
