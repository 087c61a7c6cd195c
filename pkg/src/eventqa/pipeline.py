"""End-to-end reasoning over one scene: facts, kinematics, events, fluents, causes.

Two routes produce the same atoms. ``reason`` runs the dedicated Python
implementation; ``engine_model`` evaluates the rule files with the logic
engine. The dedicated route is the fast one used for answering questions.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .engine import Model, evaluate, parse_program
from .events import CauseRelation, EventLog, FluentTimeline, causal_graph, compute_fluents, detect_events
from .facts import FactBase, reconstruct
from .physics import KinematicTable, Thresholds
from .rules import program_text
from .scene import SceneTrace

# predicates both routes derive; holdsAt is compared below the horizon only
DERIVED = ("disp_greater", "disp_smaller", "euc_distance", "velocity_change", "happens", "holdsAt", "cause")


@dataclass
class Reasoning:
    fb: FactBase
    thresholds: Thresholds
    variant: str
    table: KinematicTable
    events: EventLog
    timeline: FluentTimeline
    causes: CauseRelation
    _atoms: frozenset | None = field(default=None, repr=False)

    def atoms(self) -> frozenset:
        """Scene facts plus happens, holdsAt and cause atoms."""
        if self._atoms is None:
            self._atoms = frozenset(self.fb.atoms) | self.events.atoms() | self.timeline.atoms() | self.causes.atoms()
        return self._atoms

    def derived_atoms(self) -> set:
        return (
            self.table.atoms(self.thresholds)
            | self.events.atoms()
            | self.timeline.atoms()
            | self.causes.atoms()
        )


def reason(fb: FactBase, th: Thresholds, variant: str = "H2", table: KinematicTable | None = None) -> Reasoning:
    if table is None:
        table = KinematicTable(fb)
    events = detect_events(fb, th, variant, table)
    timeline = compute_fluents(events, fb)
    return Reasoning(fb, th, variant, table, events, timeline, causal_graph(events))


def reason_trace(trace: SceneTrace, th: Thresholds, variant: str = "H2") -> Reasoning:
    return reason(reconstruct(trace), th, variant)


def engine_model(fb: FactBase, th: Thresholds, variant: str = "H2") -> Model:
    """Evaluate the transcribed rule files over the fact base."""
    dims = fb.dims
    return evaluate(parse_program(program_text(th, variant, dims)), fb)


# threshold each kinematic predicate is consumed with by the event rules
_THRESHOLD_OF = {"disp_greater": "d_move", "disp_smaller": "d_stop", "euc_distance": "d_prox", "velocity_change": "d_vel"}


def engine_derived_atoms(model: Model, th: Thresholds, horizon: int) -> set:
    """Engine atoms comparable with ``Reasoning.derived_atoms``.

    The rules derive kinematic atoms for every declared threshold; only the
    ones at the threshold the event rules consume are kept.
    """
    out = set()
    for atom in model.atoms:
        name = atom[0]
        if name not in DERIVED:
            continue
        if name == "holdsAt" and not atom[2] < horizon:
            continue
        if name in _THRESHOLD_OF and atom[1] != getattr(th, _THRESHOLD_OF[name]):
            continue
        out.add(atom)
    return out
