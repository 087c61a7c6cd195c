"""Stratification, including local (time-indexed) stratification.

A strongly connected component of the predicate dependency graph that
contains negation is still evaluable when every rule in it advances time
monotonically: the time argument (by convention the last argument) of each
body literal from the component is the head's time minus a non-negative
offset, and the literals with offset zero form a stratifiable graph on their
own. Such a component is evaluated frame by frame.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import networkx as nx

from .program import Program
from .terms import BinOp, EngineError, Var, predicate_of


class UnstratifiableError(EngineError):
    def __init__(self, cycle: list):
        names = " -> ".join(f"{p}/{n}" for p, n in cycle)
        super().__init__(f"program is not stratifiable; negative cycle: {names}")
        self.cycle = cycle


@dataclass(frozen=True)
class TimeSpec:
    """A time argument ``var + offset``, or the constant ``offset`` if var is None."""

    var: Var | None
    offset: int


@dataclass
class Stratum:
    predicates: frozenset
    rules: list
    temporal: bool = False
    recursive: bool = False
    # temporal strata only
    head_times: dict = field(default_factory=dict)  # rule index -> TimeSpec
    frame_order: list = field(default_factory=list)  # [(preds, recursive)] evaluated per frame


@dataclass
class StrataPlan:
    strata: list

    @property
    def temporal(self) -> dict:
        flags = {}
        for s in self.strata:
            for p in s.predicates:
                flags[p] = s.temporal
        return flags

    def __len__(self) -> int:
        return len(self.strata)


def time_spec(term) -> TimeSpec | None:
    if isinstance(term, int):
        return TimeSpec(None, term)
    if isinstance(term, Var):
        return TimeSpec(term, 0)
    if isinstance(term, BinOp) and term.op in "+-" and isinstance(term.left, Var) and isinstance(term.right, int):
        return TimeSpec(term.left, term.right if term.op == "+" else -term.right)
    return None


def dependency_graph(rules: list) -> nx.MultiDiGraph:
    """Edges point from body predicate to head predicate."""
    g = nx.MultiDiGraph()
    for i, r in enumerate(rules):
        h = predicate_of(r.head)
        g.add_node(h)
        for a in r.body_pos:
            g.add_edge(predicate_of(a), h, negative=False, rule=i)
        for a in r.body_neg:
            g.add_edge(predicate_of(a), h, negative=True, rule=i)
    return g


def _negative_cycle(g: nx.MultiDiGraph, scc: set) -> list:
    for u, v, data in g.edges(data=True):
        if data["negative"] and u in scc and v in scc:
            back = nx.shortest_path(g.subgraph(scc), v, u)
            return [u] + back
    return list(scc)


def _temporal_frames(rules: list, idx: list, scc: set):
    """Return (head_times, frame_order) or None if time does not discharge the cycle."""
    if any(arity < 1 for _, arity in scc):
        return None
    head_times = {}
    frame_graph = nx.MultiDiGraph()
    frame_graph.add_nodes_from(scc)
    for i in idx:
        r = rules[i]
        hs = time_spec(r.head[-1])
        if hs is None:
            return None
        head_times[i] = hs
        h = predicate_of(r.head)
        for lits, negative in ((r.body_pos, False), (r.body_neg, True)):
            for a in lits:
                p = predicate_of(a)
                if p not in scc:
                    continue
                bs = time_spec(a[-1])
                if bs is None or bs.var is None or hs.var is None or bs.var != hs.var:
                    return None
                lag = hs.offset - bs.offset
                if lag < 0:
                    return None
                if lag == 0:
                    frame_graph.add_edge(p, h, negative=negative)
    order = []
    cond = nx.condensation(frame_graph)
    for c in nx.topological_sort(cond):
        members = set(cond.nodes[c]["members"])
        sub = frame_graph.subgraph(members)
        if any(d["negative"] for _, _, d in sub.edges(data=True)):
            return None
        order.append((frozenset(members), sub.number_of_edges() > 0))
    return head_times, order


def stratify(program: Program) -> StrataPlan:
    """Compute an evaluation plan or raise UnstratifiableError."""
    rules = program.rules
    g = dependency_graph(rules)
    for f in program.facts:
        g.add_node(predicate_of(f))
    cond = nx.condensation(g)
    members = {c: set(cond.nodes[c]["members"]) for c in cond.nodes}
    rules_of = {}
    for i, r in enumerate(rules):
        rules_of.setdefault(predicate_of(r.head), []).append(i)

    info = {}
    for c in nx.topological_sort(cond):
        scc = members[c]
        sub = g.subgraph(scc)
        internal_neg = any(d["negative"] for _, _, d in sub.edges(data=True))
        idx = sorted(i for p in scc for i in rules_of.get(p, []))
        temporal = None
        if internal_neg:
            temporal = _temporal_frames(rules, idx, scc)
            if temporal is None:
                raise UnstratifiableError(_negative_cycle(g, scc))
        level = 0
        for p in scc:
            for u, _, d in g.in_edges(p, data=True):
                if u in scc:
                    continue
                du = info[u]
                bump = 1 if (d["negative"] or temporal is not None or du[1]) else 0
                level = max(level, du[0] + bump)
        for p in scc:
            info[p] = (level, temporal is not None, c)
        info[("__scc__", c)] = (level, temporal, idx, sub.number_of_edges() > 0)

    groups: dict = {}
    for key, val in info.items():
        if not (isinstance(key, tuple) and key[0] == "__scc__"):
            continue
        level, temporal, idx, recursive = val
        c = key[1]
        if temporal is not None:
            head_times, order = temporal
            groups.setdefault(level, []).append(
                Stratum(frozenset(members[c]), [rules[i] for i in idx], True, True, 
                        {n: head_times[i] for n, i in enumerate(idx)}, order)
            )
        else:
            bucket = groups.setdefault(level, [])
            plain = next((s for s in bucket if not s.temporal), None)
            if plain is None:
                plain = Stratum(frozenset(), [], False, False)
                bucket.insert(0, plain)
            plain.predicates = plain.predicates | frozenset(members[c])
            plain.rules.extend(rules[i] for i in idx)
            plain.recursive = plain.recursive or recursive
    strata = []
    for level in sorted(groups):
        strata.extend(s for s in groups[level] if s.predicates)
    return StrataPlan(strata)
