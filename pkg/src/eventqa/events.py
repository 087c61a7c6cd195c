"""Event detection, Event Calculus fluent timelines and causal closure."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from itertools import combinations

from .facts import FactBase
from .physics import KinematicTable, Thresholds

logger = logging.getLogger(__name__)

EVENT_KINDS = ("entry", "exit", "move", "stop", "collision")
VARIANTS = ("H0", "H1", "H2")
# events that take part in responsibility (cause) reasoning
CAUSAL_KINDS = ("entry", "exit", "collision")


@dataclass(frozen=True, order=True)
class Event:
    t: int
    kind: str
    participants: tuple

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {self.kind!r}")
        if self.kind == "collision":
            a, b = self.participants
            if not a < b:
                raise ValueError("collision participants must be distinct and ordered")
        elif len(self.participants) != 1:
            raise ValueError(f"{self.kind} takes exactly one participant")

    @property
    def term(self) -> tuple:
        return (self.kind, *self.participants)

    def atom(self) -> tuple:
        return ("happens", self.term, self.t)


def collision(a, b, t: int) -> Event:
    return Event(t, "collision", (min(a, b), max(a, b)))


# Table of effects: event kind -> (initiated fluent kinds, terminated fluent kinds)
def initiates(event_term: tuple) -> tuple:
    kind, args = event_term[0], event_term[1:]
    if kind == "collision":
        return (("collided", *args),)
    if kind == "entry":
        return (("present", *args), ("moving", *args))
    if kind == "move":
        return (("moving", *args),)
    return ()


def terminates(event_term: tuple) -> tuple:
    kind, args = event_term[0], event_term[1:]
    if kind == "stop":
        return (("moving", *args),)
    if kind == "exit":
        return (("moving", *args), ("present", *args))
    return ()


@dataclass(frozen=True)
class EventLog:
    events: tuple
    horizon: int
    initially: frozenset = frozenset()

    def __iter__(self):
        return iter(self.events)

    def __len__(self) -> int:
        return len(self.events)

    def of_kind(self, kind: str) -> list:
        return [e for e in self.events if e.kind == kind]

    def atoms(self) -> set:
        return {e.atom() for e in self.events}

    def dump(self) -> str:
        from .engine.terms import format_term

        return "".join(f"happens({format_term(e.term)},{e.t}).\n" for e in sorted(self.events))


@dataclass(frozen=True)
class FluentTimeline:
    horizon: int
    values: dict = field(default_factory=dict)  # fluent term -> tuple of bools

    def holds(self, fluent: tuple, t: int) -> bool:
        row = self.values.get(fluent)
        return bool(row and 0 <= t < self.horizon and row[t])

    def true_at(self, t: int) -> set:
        return {f for f, row in self.values.items() if row[t]}

    def atoms(self) -> set:
        return {("holdsAt", f, t) for f, row in self.values.items() for t, v in enumerate(row) if v}


def step_fluents(holding: set, happening: list, t: int | None = None) -> set:
    """Apply the effects of the events at one time point.

    A fluent holds at t+1 if it was initiated at t, or held at t, and was not
    clipped (terminated) at t. Termination wins over simultaneous initiation.
    """
    started = set()
    clipped = set()
    for term in happening:
        started.update(initiates(term))
        clipped.update(terminates(term))
    both = started & clipped
    if both:
        logger.warning("fluents initiated and terminated together at t=%s: %s", t, sorted(both))
    return (holding | started) - clipped


def entry_windows(variant: str, th: Thresholds) -> tuple[int, int]:
    """Frames of presence required after an entry, and of motion for a move."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    w = th.persistence_window
    entry = w if variant in ("H1", "H2") else 1
    move = w if variant == "H2" else 1
    return entry, move


def detect_events(
    fb: FactBase,
    th: Thresholds,
    variant: str = "H2",
    table: KinematicTable | None = None,
    kinds: tuple = EVENT_KINDS,
) -> EventLog:
    """Detect entry, exit, move, stop and collision events frame by frame.

    ``kinds`` restricts detection to a subset of event kinds; fluents that
    only the excluded kinds affect are then not tracked.
    """
    if table is None:
        table = KinematicTable(fb)
    entry_w, move_w = entry_windows(variant, th)
    n = fb.time_horizon
    present = fb.positions
    moving_pairs = table.moving_pairs(th) if "move" in kinds or "entry" in kinds else set()
    still = table.still_pairs(th) if "stop" in kinds else set()
    vel = table.velocity_changes(th) if "collision" in kinds else set()
    close_by_t: dict = {}
    if "collision" in kinds:
        for a, b, t in table.close_pairs(th):
            if (a, t) in vel and (b, t) in vel:
                close_by_t.setdefault(t, []).append((a, b))
    objects = sorted(fb.presence)

    initially = set()
    for v in objects:
        if (v, 0) in present:
            initially.add(("present", v))
            if (v, 0) in moving_pairs:
                initially.add(("moving", v))
    holding = set(initially)
    events = []
    for t in range(n):
        now = []
        for v in objects:
            if "entry" in kinds and (v, t) not in present and t + entry_w < n and all(
                (v, t + i) in present for i in range(1, entry_w + 1)
            ):
                now.append(("entry", v))
            if "exit" in kinds and (v, t) in present and t + 1 < n and (v, t + 1) not in present:
                now.append(("exit", v))
            is_moving = ("moving", v) in holding
            if (
                "move" in kinds
                and not is_moving
                and t + move_w < n
                and all((v, t + i) in moving_pairs for i in range(move_w))
            ):
                now.append(("move", v))
            if "stop" in kinds and is_moving and (v, t) in still:
                now.append(("stop", v))
        for a, b in sorted(close_by_t.get(t, ())):
            if ("collided", a, b) not in holding:
                now.append(("collision", a, b))
        events.extend(Event(t, term[0], term[1:]) for term in now)
        holding = step_fluents(holding, now, t)
    return EventLog(tuple(sorted(events)), n, frozenset(initially))


def compute_fluents(events: EventLog, fb: FactBase | None = None) -> FluentTimeline:
    """Fluent truth values over [0, N) from the initial fluents and the event log."""
    n = events.horizon if fb is None else fb.time_horizon
    by_t: dict = {}
    for e in events:
        by_t.setdefault(e.t, []).append(e.term)
    fluents = set(events.initially)
    if fb is not None:
        for v in fb.presence:
            fluents.add(("present", v))
            fluents.add(("moving", v))
    for e in events:
        fluents.update(initiates(e.term))
        fluents.update(terminates(e.term))
    rows = {f: [False] * n for f in fluents}
    holding = set(events.initially)
    for t in range(n):
        for f in holding:
            rows[f][t] = True
        holding = step_fluents(holding, by_t.get(t, []), t)
    return FluentTimeline(n, {f: tuple(r) for f, r in rows.items()})


@dataclass(frozen=True)
class CauseRelation:
    """Transitively closed responsibility edges between object and event nodes.

    Nodes are ``("object", v)`` and ``("event", term)``.
    """

    edges: frozenset
    times: dict = field(default_factory=dict, compare=False)

    def __contains__(self, edge) -> bool:
        return edge in self.edges

    def causes(self, src, dst) -> bool:
        return (src, dst) in self.edges

    def atoms(self) -> set:
        return {("cause", a, b) for a, b in self.edges}


def participants(term: tuple) -> tuple:
    return term[1:]


def causal_graph(events: EventLog, kinds: tuple = CAUSAL_KINDS) -> CauseRelation:
    """Responsibility edges closed under transitivity.

    An object causes every event it takes part in; an event causes any later
    event sharing a participant with it. Indirect causes follow by chaining.
    """
    occurrences: dict = {}
    for e in events:
        if e.kind in kinds:
            occurrences.setdefault(e.term, []).append(e.t)
    by_object: dict = {}
    for term in occurrences:
        for v in participants(term):
            by_object.setdefault(v, set()).add(term)
    step = set()
    for v, terms in by_object.items():
        for term in terms:
            step.add((("object", v), ("event", term)))
        for e1, e2 in combinations(sorted(terms), 2):
            for a, b in ((e1, e2), (e2, e1)):
                if min(occurrences[a]) < max(occurrences[b]):
                    step.add((("event", a), ("event", b)))
    # semi-naive closure: extend only paths discovered in the last round
    succ: dict = {}
    for a, b in step:
        succ.setdefault(a, set()).add(b)
    closure = set(step)
    frontier = set(step)
    while frontier:
        new = set()
        for a, b in frontier:
            for c in succ.get(b, ()):
                if (a, c) not in closure:
                    new.add((a, c))
        closure |= new
        frontier = new
    return CauseRelation(frozenset(closure), {t: tuple(ts) for t, ts in occurrences.items()})
