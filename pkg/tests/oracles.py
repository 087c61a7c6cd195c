"""Independent reference implementations used only by the tests.

Nothing here imports the code under test beyond plain data types.
"""
from __future__ import annotations

from collections import deque
from functools import lru_cache
from itertools import product

import numpy as np

# event kind -> (initiated, terminated) fluent kinds, written out by hand
EFFECTS = {
    "entry": (("present", "moving"), ()),
    "exit": ((), ("moving", "present")),
    "move": (("moving",), ()),
    "stop": ((), ("moving",)),
    "collision": (("collided",), ()),
}


def effects(term):
    kind, args = term[0], term[1:]
    init, term_ = EFFECTS[kind]
    if kind == "collision":
        return {("collided", *args)}, set()
    return {(k, *args) for k in init}, {(k, *args) for k in term_}


@lru_cache(maxsize=None)
def supported_timeline(n: int, initially: bool, init_mask: tuple, term_mask: tuple) -> tuple:
    """The unique timeline over [0, n) satisfying the completion of the four axioms.

    Every one of the 2^n candidate timelines is checked; the one whose every
    frame is supported (and only that one) is returned.
    """
    cands = np.array(list(product((False, True), repeat=n)), dtype=bool).reshape(-1, n)
    ok = cands[:, 0] == initially
    for t in range(n - 1):
        clipped = term_mask[t]
        derived = (init_mask[t] and not clipped) | (cands[:, t] & (not clipped))
        ok &= cands[:, t + 1] == derived
    rows = cands[ok]
    assert len(rows) == 1, "the axioms must have exactly one supported model"
    return tuple(bool(x) for x in rows[0])


def brute_force_fluents(n: int, events, initially: set, fluents) -> dict:
    """fluent -> tuple of truth values over [0, n), by exhaustive enumeration."""
    out = {}
    for f in fluents:
        init = [False] * n
        term = [False] * n
        for t, ev in events:
            i, k = effects(ev)
            if f in i:
                init[t] = True
            if f in k:
                term[t] = True
        out[f] = supported_timeline(n, f in initially, tuple(init), tuple(term))
    return out


def bfs_causes(events, kinds=("entry", "exit", "collision")) -> set:
    """Responsibility edges by breadth-first search from every node.

    ``events`` is an iterable of (t, term). One step: an object to each event
    it takes part in; an event to a related event (shared participant) whose
    latest occurrence is after the first one's earliest occurrence.
    """
    occ: dict = {}
    for t, term in events:
        if term[0] in kinds:
            occ.setdefault(term, []).append(t)
    nodes = [("event", e) for e in occ] + [("object", v) for v in sorted({v for e in occ for v in e[1:]})]

    def step(node):
        if node[0] == "object":
            return [("event", e) for e in occ if node[1] in e[1:]]
        a = node[1]
        return [
            ("event", b)
            for b in occ
            if b != a and set(a[1:]) & set(b[1:]) and min(occ[a]) < max(occ[b])
        ]

    edges = set()
    for src in nodes:
        seen = set()
        queue = deque(step(src))
        while queue:
            node = queue.popleft()
            if node in seen:
                continue
            seen.add(node)
            queue.extend(step(node))
        edges |= {(src, dst) for dst in seen}
    return edges


def naive_fixpoint(rules, facts, rank=None):
    """Plain bottom-up evaluation over tuples, one stratum at a time.

    ``rules`` are (head, positive body, negative body) with variables as
    strings starting with an uppercase letter. ``rank`` maps predicates to
    strata; negated predicates must sit in strictly lower strata.
    """
    model = set(facts)
    rank = rank or {}

    def is_var(x):
        return isinstance(x, str) and x[:1].isupper()

    def match(pattern, atom, s):
        if len(pattern) != len(atom) or pattern[0] != atom[0]:
            return None
        s = dict(s)
        for p, a in zip(pattern[1:], atom[1:]):
            if is_var(p):
                if s.setdefault(p, a) != a:
                    return None
            elif p != a:
                return None
        return s

    def ground(lit, s):
        return tuple(s.get(x, x) if is_var(x) else x for x in lit)

    for level in sorted({rank.get(h[0], 0) for h, _, _ in rules}):
        layer = [r for r in rules if rank.get(r[0][0], 0) == level]
        changed = True
        while changed:
            changed = False
            for head, pos, neg in layer:
                substs = [{}]
                for lit in pos:
                    substs = [s2 for s in substs for a in model if (s2 := match(lit, a, s)) is not None]
                for s in substs:
                    if any(ground(lit, s) in model for lit in neg):
                        continue
                    new = ground(head, s)
                    if new not in model:
                        model.add(new)
                        changed = True
    return model
