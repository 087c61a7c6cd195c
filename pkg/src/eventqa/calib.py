"""Threshold calibration by grid search, and collision analysis tables.

Accuracy counts one unit per descriptive question and one per explanatory
option. Grid points are compared on exact correct counts.

Caching: questions about moving/stationary objects depend only on
(d_move, d_stop); every other question depends only on (d_prox, d_vel),
because entries and exits ignore thresholds and collisions ignore motion
thresholds. A 4x4x4x4 grid therefore needs 16 + 16 evaluations per scene
rather than 256.
"""
from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import product

from .facts import FactBase, reconstruct
from .physics import KinematicTable, Thresholds
from .pipeline import reason
from .query import prepare
from .question import QuestionAST

MOTION_STATES = ("moving", "stationary")


@dataclass(frozen=True)
class Grid:
    d_move: tuple = (100, 400, 1600, 6400)
    d_stop: tuple = (100, 400, 1600, 6400)
    d_prox: tuple = (90_000, 100_000, 120_000, 160_000)
    d_vel: tuple = (50, 100, 200, 400)
    persistence_window: int = 2

    def __post_init__(self):
        for name in ("d_move", "d_stop", "d_prox", "d_vel"):
            values = getattr(self, name)
            if not values:
                raise ValueError(f"grid dimension {name} is empty")
            object.__setattr__(self, name, tuple(values))

    def points(self) -> list:
        return [
            Thresholds(m, s, p, v, self.persistence_window)
            for m, s, p, v in product(self.d_move, self.d_stop, self.d_prox, self.d_vel)
        ]

    def __len__(self) -> int:
        return len(self.d_move) * len(self.d_stop) * len(self.d_prox) * len(self.d_vel)


@dataclass
class CalibScene:
    fb: FactBase
    questions: list
    oracle: list
    table: KinematicTable | None = field(default=None, repr=False)
    prepared: dict = field(default_factory=dict, repr=False)

    def kinematics(self) -> KinematicTable:
        if self.table is None:
            self.table = KinematicTable(self.fb)
        return self.table


def is_motion(ast: QuestionAST) -> bool:
    return ast.state in MOTION_STATES


def units(ast: QuestionAST) -> int:
    return len(ast.options) if ast.qtype == "explanatory" else 1


def score(ast: QuestionAST, predicted, oracle) -> int:
    """Correct units: 1 for a right descriptive answer, 1 per right option."""
    if isinstance(predicted, Exception):
        return 0
    if ast.qtype == "explanatory":
        return sum(p == o for p, o in zip(predicted, oracle))
    return int(predicted == oracle)


def _correct(scene: CalibScene, th: Thresholds, variant: str, idx: list) -> int:
    if not idx:
        return 0
    key = tuple(idx)
    prepared = scene.prepared.get(key)
    if prepared is None:
        prepared = scene.prepared[key] = prepare([scene.questions[i] for i in idx])
    preds = prepared.answer(reason(scene.fb, th, variant, scene.kinematics()))
    return sum(score(q, p, scene.oracle[i]) for q, p, i in zip(prepared.asts, preds, idx))


def _scene_counts(args) -> dict:
    scene, grid, variant, cached = args
    out = {}
    if not cached:
        every = list(range(len(scene.questions)))
        for th in grid.points():
            out[th] = _correct(scene, th, variant, every)
        return out
    motion = [i for i, q in enumerate(scene.questions) if is_motion(q)]
    rest = [i for i, q in enumerate(scene.questions) if not is_motion(q)]
    w = grid.persistence_window
    by_motion = {
        (m, s): _correct(scene, Thresholds(m, s, grid.d_prox[0], grid.d_vel[0], w), variant, motion)
        for m, s in product(grid.d_move, grid.d_stop)
    }
    by_collision = {
        (p, v): _correct(scene, Thresholds(grid.d_move[0], grid.d_stop[0], p, v, w), variant, rest)
        for p, v in product(grid.d_prox, grid.d_vel)
    }
    for th in grid.points():
        out[th] = by_motion[(th.d_move, th.d_stop)] + by_collision[(th.d_prox, th.d_vel)]
    return out


@dataclass
class GridResult:
    best: Thresholds
    table: list  # (Thresholds, correct, total) in grid order

    def accuracy(self, th: Thresholds) -> float:
        for point, correct, total in self.table:
            if point == th:
                return correct / total if total else 0.0
        raise KeyError(th)

    @property
    def best_accuracy(self) -> float:
        return self.accuracy(self.best)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["d_move", "d_stop", "d_prox", "d_vel", "correct", "total", "accuracy"])
        for th, correct, total in self.table:
            w.writerow([th.d_move, th.d_stop, th.d_prox, th.d_vel, correct, total, f"{correct / total:.6f}" if total else ""])
        return buf.getvalue()


def grid_search(scenes, grid: Grid, variant: str = "H2", *, jobs: int = 1, cached: bool = True) -> GridResult:
    """Exhaustive search; ties go to the smallest d_prox, then the smallest d_vel."""
    if not scenes:
        raise ValueError("grid search needs at least one scene")
    total = sum(units(q) for s in scenes for q in s.questions)
    tasks = [(s, grid, variant, cached) for s in scenes]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            per_scene = list(pool.map(_scene_counts, tasks))
    else:
        per_scene = [_scene_counts(t) for t in tasks]
    table = []
    for th in grid.points():
        table.append((th, sum(c[th] for c in per_scene), total))
    order = {th: i for i, th in enumerate(grid.points())}
    best = min(table, key=lambda row: (-row[1], row[0].d_prox, row[0].d_vel, order[row[0]]))[0]
    return GridResult(best, table)


def calib_scenes_from_sim(configs, questions_per_scene: int = 50, seed: int = 0, noise=None) -> list:
    """Calibration scenes drawn from simulator configs with generated questions."""
    import numpy as np

    from .sim import emit, generate_questions, oracle_answer, simulate

    out = []
    for k, config in enumerate(configs):
        trace, gt = simulate(config)
        if noise is not None:
            trace = emit(config, gt, noise)
        qs = generate_questions(gt, np.random.default_rng([seed, k]), questions_per_scene)
        out.append(CalibScene(reconstruct(trace), qs, [oracle_answer(q, gt) for q in qs]))
    return out


# --- collision analysis ----------------------------------------------------

OFFSETS = (-2, -1, 0, 1)


@dataclass
class CollisionAnalysis:
    distances: list  # (pair_id, frame, dx, dy, dz, colliding)
    velocity_changes: list  # (offset, object, velocity_change); offset "control" for non-colliders

    def distances_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["pair_id", "frame", "dx", "dy", "dz", "colliding"])
        for row in self.distances:
            w.writerow(["" if x is None else (int(x) if isinstance(x, bool) else x) for x in row])
        return buf.getvalue()

    def velocity_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["offset", "object", "velocity_change"])
        w.writerows(self.velocity_changes)
        return buf.getvalue()

    def bucket(self, offset) -> list:
        return [v for o, _, v in self.velocity_changes if o == offset]

    def recall(self, d_prox: int) -> float:
        """Fraction of colliding pair-frames within squared distance ``d_prox``."""
        hits = [dx * dx + dy * dy + (dz or 0) ** 2 <= d_prox for _, _, dx, dy, dz, c in self.distances if c]
        return sum(hits) / len(hits) if hits else 1.0


def analyze_collisions(scenes) -> CollisionAnalysis:
    """Tables for pairwise distances and velocity changes around true collisions.

    ``scenes`` yields (video_id, fact base, ground truth) triples.
    """
    distances, changes = [], []
    for video, fb, gt in scenes:
        table = KinematicTable(fb)
        hits = {}
        colliders = set()
        for e in gt.of_kind("collision"):
            hits.setdefault(e.participants, set()).add(e.t)
            colliders.update(e.participants)
        pos = fb.positions
        for a, b, t in sorted(table.dist2):
            p, q = pos[(a, t)], pos[(b, t)]
            dz = abs(p[2] - q[2]) if len(p) == 3 else None
            distances.append((f"{video}:{a}-{b}", t, abs(p[0] - q[0]), abs(p[1] - q[1]), dz, t in hits.get((a, b), ())))
        for e in gt.of_kind("collision"):
            for v in e.participants:
                for off in OFFSETS:
                    value = table.vchange.get((v, e.t + off))
                    if value is not None:
                        changes.append((off, f"{video}:{v}", value))
        for (v, t), value in sorted(table.vchange.items()):
            if v not in colliders:
                changes.append(("control", f"{video}:{v}", value))
    return CollisionAnalysis(distances, changes)
