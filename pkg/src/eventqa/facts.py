"""Ground fact bases reconstructed from quantized scene traces."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

from .engine.terms import format_term, predicate_of
from .scene import SceneTrace

# index of the time argument for predicates that carry one
TIME_ARGUMENT = {"on_camera": 2, "position": -1, "time": 1, "next_time": 1}
ATTRIBUTES = ("color", "shape", "material")


class AttributeConflict(ValueError):
    def __init__(self, object_id: int, attribute: str, counts: Counter):
        super().__init__(
            f"object {object_id}: no strict majority for {attribute} among {dict(counts)}"
        )
        self.object_id = object_id


class UnknownPredicateError(KeyError):
    pass


@dataclass(frozen=True)
class FactBase:
    atoms: frozenset
    time_horizon: int
    dims: int = 3
    positions: dict = field(default_factory=dict, compare=False, repr=False)
    presence: dict = field(default_factory=dict, compare=False, repr=False)
    attributes: dict = field(default_factory=dict, compare=False, repr=False)
    _by_pred: dict = field(default_factory=dict, compare=False, repr=False)
    _by_time: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        for a in self.atoms:
            self._by_pred.setdefault(a[0], set()).add(a)
            pos = TIME_ARGUMENT.get(a[0])
            if pos is not None:
                self._by_time.setdefault((a[0], a[pos]), set()).add(a)

    def __iter__(self):
        return iter(self.atoms)

    def __len__(self) -> int:
        return len(self.atoms)

    def __contains__(self, atom) -> bool:
        return atom in self.atoms

    def by_predicate(self, predicate: str) -> frozenset:
        return frozenset(self._by_pred.get(predicate, ()))

    @property
    def objects(self) -> list:
        return sorted(self.attributes)

    def position(self, v, t):
        return self.positions.get((v, t))

    def on_camera(self, v, t) -> bool:
        return (v, t) in self.positions

    def dump(self) -> str:
        return "".join(f"{s}.\n" for s in sorted(format_term(a) for a in self.atoms))


def reconstruct(trace: SceneTrace) -> FactBase:
    """Build the scene's ground facts from a quantized trace.

    Emits object/1, on_camera/2, position/5 (position/4 for 2D traces),
    color/2, shape/2, material/2, time/1 and next_time/2. Attributes are
    resolved by strict majority over an object's detections.
    """
    atoms = set()
    positions = {}
    presence: dict = {}
    votes: dict = {}
    for f in trace.frames:
        for d in f.detections:
            v = d.object_id
            coords = tuple(d.position)
            if not all(isinstance(c, int) for c in coords):
                raise ValueError("reconstruct expects a quantized trace with integer positions")
            positions[(v, f.t)] = coords
            presence.setdefault(v, []).append(f.t)
            atoms.add(("on_camera", v, f.t))
            atoms.add(("position", v, *coords, f.t))
            for name, value in zip(ATTRIBUTES, d.attributes):
                votes.setdefault((v, name), Counter())[value] += 1
    attributes = {}
    for v in presence:
        atoms.add(("object", v))
        attrs = {}
        for name in ATTRIBUTES:
            counts = votes[(v, name)]
            (value, n), *rest = counts.most_common()
            if 2 * n <= sum(counts.values()):
                raise AttributeConflict(v, name, counts)
            attrs[name] = value
            atoms.add((name, v, value))
        attributes[v] = attrs
    n = trace.frame_count
    atoms.update(("time", t) for t in range(n))
    atoms.update(("next_time", t, t + 1) for t in range(n - 1))
    return FactBase(frozenset(atoms), n, trace.dims, positions, presence, attributes)


def facts_at(fb: FactBase, predicate: str, t: int) -> frozenset:
    """Ground atoms of a time-indexed predicate whose time argument equals ``t``."""
    if predicate not in TIME_ARGUMENT:
        raise UnknownPredicateError(f"{predicate} has no time argument")
    return frozenset(fb._by_time.get((predicate, t), ()))


def fact_base_from_atoms(atoms, time_horizon: int, dims: int = 3) -> FactBase:
    """Wrap an arbitrary atom set, rebuilding the scene accessors it supports."""
    atoms = frozenset(atoms)
    positions = {}
    presence: dict = {}
    attributes: dict = {}
    for a in atoms:
        if a[0] == "position":
            positions[(a[1], a[-1])] = tuple(a[2:-1])
        elif a[0] == "on_camera":
            presence.setdefault(a[1], []).append(a[2])
        elif a[0] in ATTRIBUTES:
            attributes.setdefault(a[1], {})[a[0]] = a[2]
        elif a[0] == "object":
            attributes.setdefault(a[1], {})
    for v in presence:
        presence[v].sort()
    return FactBase(atoms, time_horizon, dims, positions, presence, attributes)


__all__ = [
    "ATTRIBUTES",
    "AttributeConflict",
    "FactBase",
    "UnknownPredicateError",
    "fact_base_from_atoms",
    "facts_at",
    "predicate_of",
    "reconstruct",
]
