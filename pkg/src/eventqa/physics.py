"""Finite-difference kinematics over a fact base.

Every quantity is an exact integer: distances and displacements stay
squared, and velocity change compares consecutive squared displacements.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, fields
from functools import lru_cache
from itertools import combinations

from .facts import FactBase

logger = logging.getLogger(__name__)


@lru_cache(maxsize=None)
def _warn_hysteresis(d_stop: int, d_move: int) -> None:
    # once per pair: grid searches construct the same thresholds many times
    logger.warning("d_stop=%d < d_move=%d: moving/stationary detection has a hysteresis band", d_stop, d_move)


class MissingPosition(LookupError):
    pass


@dataclass(frozen=True)
class Thresholds:
    d_move: int = 400
    d_stop: int = 400
    d_prox: int = 100_000
    d_vel: int = 100
    persistence_window: int = 2

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not isinstance(value, int) or value < 0:
                raise ValueError(f"threshold {f.name} must be a nonnegative integer, got {value!r}")
        if self.persistence_window not in (1, 2):
            raise ValueError("persistence_window must be 1 or 2")
        if self.d_stop < self.d_move:
            _warn_hysteresis(self.d_stop, self.d_move)

    def dumps(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in asdict(self).items())


def load_thresholds(path) -> Thresholds:
    with open(path, encoding="utf-8") as fh:
        return parse_thresholds(fh.read())


def parse_thresholds(text: str) -> Thresholds:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    known = {f.name for f in fields(Thresholds)}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ValueError(f"line {lineno}: unknown threshold {key!r}")
        values[key] = int(value)
    return Thresholds(**values)


def squared_distance(p, q) -> int:
    return sum((a - b) ** 2 for a, b in zip(p, q))


def displacement(fb: FactBase, v, t1: int, t2: int) -> int:
    """Squared displacement of ``v`` between consecutive frames ``t1`` and ``t2``."""
    if t2 != t1 + 1 or not (0 <= t1 and t2 < fb.time_horizon):
        raise ValueError(f"frames {t1} and {t2} are not consecutive frames of the scene")
    p, q = fb.position(v, t1), fb.position(v, t2)
    if p is None or q is None:
        missing = t1 if p is None else t2
        raise MissingPosition(f"object {v} is not on camera at frame {missing}")
    return squared_distance(p, q)


class KinematicTable:
    """Threshold-independent kinematic quantities of one fact base.

    ``disp[(v, t)]`` is the squared displacement from t to t+1,
    ``dist2[(v1, v2, t)]`` (v1 < v2) the squared distance at t, and
    ``vchange[(v, t)]`` is ``|disp(t-1, t) - disp(t, t+1)|``.
    """

    def __init__(self, fb: FactBase):
        self.fb = fb
        pos = fb.positions
        self.disp = {}
        for (v, t), p in pos.items():
            q = pos.get((v, t + 1))
            if q is not None:
                self.disp[(v, t)] = squared_distance(p, q)
        self.vchange = {}
        for (v, t), d2 in self.disp.items():
            d1 = self.disp.get((v, t - 1))
            if d1 is not None:
                self.vchange[(v, t)] = abs(d1 - d2)
        self.dist2 = {}
        by_time: dict = {}
        for (v, t) in pos:
            by_time.setdefault(t, []).append(v)
        for t, vs in by_time.items():
            for a, b in combinations(sorted(vs), 2):
                self.dist2[(a, b, t)] = squared_distance(pos[(a, t)], pos[(b, t)])

    def moving_pairs(self, th: Thresholds) -> set:
        return {k for k, d in self.disp.items() if d > th.d_move}

    def still_pairs(self, th: Thresholds) -> set:
        return {k for k, d in self.disp.items() if d <= th.d_stop}

    def close_pairs(self, th: Thresholds) -> set:
        return {k for k, d in self.dist2.items() if d <= th.d_prox}

    def velocity_changes(self, th: Thresholds) -> set:
        return {k for k, d in self.vchange.items() if d >= th.d_vel}

    def atoms(self, th: Thresholds) -> set:
        out = set()
        for v, t in self.moving_pairs(th):
            out.add(("disp_greater", th.d_move, v, t, t + 1))
        for v, t in self.still_pairs(th):
            out.add(("disp_smaller", th.d_stop, v, t, t + 1))
        for a, b, t in self.close_pairs(th):
            out.add(("euc_distance", th.d_prox, a, b, t))
            out.add(("euc_distance", th.d_prox, b, a, t))
        for v, t in self.velocity_changes(th):
            out.add(("velocity_change", th.d_vel, v, t))
        return out


def materialize_kinematics(fb: FactBase, th: Thresholds, table: KinematicTable | None = None) -> set:
    """Ground disp_greater, disp_smaller, euc_distance and velocity_change atoms.

    A change in squared displacement counts as a velocity change when it is
    at least ``d_vel``; proximity includes the boundary ``d_prox``.
    """
    if table is None:
        table = KinematicTable(fb)
    return table.atoms(th)
