"""Deterministic kinematic scene simulator, ground truth, and an engine-free QA oracle.

Objects are equal-mass discs (spheres resting on the floor in 3D) moving on
the x-y plane. Each step advances positions by one frame of velocity, removes
objects whose centre left the arena, spawns scheduled objects, resolves
contacts with an impulse along the contact normal, then applies friction.
Positions stay raw floats internally and are quantized when the trace is
emitted.
"""
from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import asdict, dataclass, field, replace
from itertools import combinations

import numpy as np

from .events import Event, collision
from .question import (
    ATTRIBUTE_NAMES,
    DESCRIPTIVE,
    EventPattern,
    EventRef,
    ObjectFilter,
    Presence,
    QuestionAST,
    STATES,
    Temporal,
)
from .scene import COLORS, MATERIALS, SHAPES, Detection, Frame, NoiseSpec, QuantSpec, SceneTrace, perturb, quantize


class SimError(ValueError):
    pass


class SpawnOverlap(SimError):
    def __init__(self, object_id, other, t):
        super().__init__(f"object {object_id} overlaps object {other} when it spawns at frame {t}")
        self.object_id, self.other, self.t = object_id, other, t


class UnknownObject(SimError, KeyError):
    def __str__(self):
        return self.args[0]


class AmbiguousReferent(ValueError):
    """A phrase that must pick out one object or event matches zero or several."""


@dataclass(frozen=True)
class ObjectSpec:
    object_id: int
    color: str
    shape: str
    material: str
    spawn_frame: int
    position: tuple  # x, y
    velocity: tuple = (0.0, 0.0)

    @property
    def attributes(self) -> dict:
        return {"color": self.color, "shape": self.shape, "material": self.material}


@dataclass(frozen=True)
class SimConfig:
    objects: tuple
    frame_count: int = 128
    dims: int = 3
    half_width: float = 30.0
    radius: float = 1.5
    friction: float = 0.01
    restitution: float = 1.0
    stop_speed: float = 0.3
    scale: int = 100
    seed: int = 0
    video_id: str = "sim"

    def __post_init__(self):
        if self.dims not in (2, 3):
            raise SimError("dims must be 2 or 3")
        if self.frame_count < 1:
            raise SimError("frame_count must be positive")
        if not 0.0 <= self.restitution <= 1.0 or not 0.0 <= self.friction < 1.0:
            raise SimError("restitution must lie in [0, 1] and friction in [0, 1)")
        ids = [o.object_id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise SimError("duplicate object ids")
        tuples = [(o.color, o.shape, o.material) for o in self.objects]
        if len(set(tuples)) != len(tuples):
            raise SimError("attribute tuples must be unique within a scene")
        for o in self.objects:
            if not 0 <= o.spawn_frame < self.frame_count:
                raise SimError(f"object {o.object_id} spawns outside [0, {self.frame_count})")

    def spec(self, object_id) -> ObjectSpec:
        for o in self.objects:
            if o.object_id == object_id:
                return o
        raise UnknownObject(f"unknown object {object_id}")


@dataclass
class GroundTruth:
    """Exact events, fluents and raw trajectories of one simulation.

    ``positions[v][t]`` and ``velocities[v][t]`` are defined for the frames
    ``v`` is on camera; ``velocities[v][t]`` carries ``v`` from t to t+1.
    """

    frame_count: int
    events: list
    attributes: dict
    positions: dict
    velocities: dict
    moving: dict = field(default_factory=dict)

    def present(self, v, t) -> bool:
        return t in self.positions.get(v, {})

    def objects(self) -> list:
        return sorted(self.attributes)

    def of_kind(self, kind) -> list:
        return [e for e in self.events if e.kind == kind]


def _ground_moving(gt: GroundTruth) -> dict:
    """Object is moving at t if it travelled into t (or, at its first frame, out of it)."""
    out = {}
    for v, vel in gt.velocities.items():
        frames = sorted(vel)
        first = frames[0]
        for t in frames:
            if t == first:
                out[(v, t)] = first > 0 or vel[t] != (0.0, 0.0)
            else:
                out[(v, t)] = vel[t - 1] != (0.0, 0.0)
    return out


def _overlap(p, q, r) -> bool:
    return (p[0] - q[0]) ** 2 + (p[1] - q[1]) ** 2 < (2 * r) ** 2


def simulate(config: SimConfig, *, without=()) -> tuple[SceneTrace, GroundTruth]:
    """Integrate the scene and return the quantized trace and its ground truth."""
    specs = [o for o in config.objects if o.object_id not in set(without)]
    r, half = config.radius, config.half_width
    pending = sorted(specs, key=lambda o: (o.spawn_frame, o.object_id))
    pos: dict = {}
    vel: dict = {}
    positions = {o.object_id: {} for o in specs}
    velocities = {o.object_id: {} for o in specs}
    events = []
    collided = set()
    n = config.frame_count

    def spawn(t):
        while pending and pending[0].spawn_frame == t:
            o = pending.pop(0)
            p = tuple(map(float, o.position))
            for other, q in pos.items():
                if _overlap(p, q, r):
                    raise SpawnOverlap(o.object_id, other, t)
            pos[o.object_id] = p
            vel[o.object_id] = tuple(map(float, o.velocity))
            if t > 0:
                events.append(Event(t - 1, "entry", (o.object_id,)))

    spawn(0)
    for t in range(n):
        for v in pos:
            positions[v][t] = pos[v]
        if t == n - 1:
            for v in pos:
                velocities[v][t] = vel[v]
            break
        for v in pos:
            velocities[v][t] = vel[v]
            pos[v] = (pos[v][0] + vel[v][0], pos[v][1] + vel[v][1])
        for v in sorted(pos):
            x, y = pos[v]
            if abs(x) > half or abs(y) > half:
                del pos[v], vel[v]
                events.append(Event(t, "exit", (v,)))
        fresh = {o.object_id for o in pending if o.spawn_frame == t + 1}
        spawn(t + 1)
        for a, b in combinations(sorted(pos), 2):
            (ax, ay), (bx, by) = pos[a], pos[b]
            dx, dy = bx - ax, by - ay
            d = math.hypot(dx, dy)
            if d >= 2 * r or d == 0.0:
                continue
            nx, ny = dx / d, dy / d
            rel = (vel[a][0] - vel[b][0]) * nx + (vel[a][1] - vel[b][1]) * ny
            if rel <= 0:
                continue
            j = (1 + config.restitution) / 2 * rel
            vel[a] = (vel[a][0] - j * nx, vel[a][1] - j * ny)
            vel[b] = (vel[b][0] + j * nx, vel[b][1] + j * ny)
            if (a, b) not in collided:
                collided.add((a, b))
                events.append(collision(a, b, t + 1))
        keep = 1.0 - config.friction
        for v in pos:
            if v in fresh:
                continue
            vx, vy = vel[v][0] * keep, vel[v][1] * keep
            if math.hypot(vx, vy) < config.stop_speed:
                vx, vy = 0.0, 0.0
            vel[v] = (vx, vy)

    attrs = {o.object_id: o.attributes for o in specs}
    gt = GroundTruth(n, sorted(events), attrs, positions, velocities)
    gt.moving = _ground_moving(gt)
    return emit(config, gt), gt


def resimulate_without(config: SimConfig, object_id) -> tuple[SceneTrace, GroundTruth]:
    """Same configuration and integration with one object removed."""
    config.spec(object_id)
    return simulate(config, without=(object_id,))


def raw_trace(config: SimConfig, gt: GroundTruth) -> SceneTrace:
    z = (config.radius,) if config.dims == 3 else ()
    frames = []
    for t in range(gt.frame_count):
        dets = []
        for v in gt.objects():
            p = gt.positions[v].get(t)
            if p is not None:
                a = gt.attributes[v]
                dets.append(Detection(v, a["color"], a["shape"], a["material"], tuple(p) + z))
        frames.append(Frame(t, tuple(dets)))
    return SceneTrace(config.video_id, config.dims, gt.frame_count, tuple(frames))


def emit(config: SimConfig, gt: GroundTruth, noise: NoiseSpec | None = None) -> SceneTrace:
    """Quantized trace of a simulation; ``noise`` (raw units) is applied before quantizing."""
    trace = raw_trace(config, gt)
    if noise is not None:
        trace = perturb(trace, noise)
    return quantize(trace, QuantSpec(config.scale))


# --- serialization ---------------------------------------------------------


def config_to_dict(config: SimConfig) -> dict:
    doc = asdict(config)
    doc["objects"] = [asdict(o) for o in config.objects]
    return doc


def config_from_dict(doc: dict) -> SimConfig:
    doc = dict(doc)
    objs = tuple(
        ObjectSpec(**{**o, "position": tuple(o["position"]), "velocity": tuple(o.get("velocity", (0.0, 0.0)))})
        for o in doc.pop("objects")
    )
    return SimConfig(objects=objs, **doc)


def dumps_config(config: SimConfig) -> str:
    return json.dumps(config_to_dict(config), sort_keys=True, separators=(",", ":")) + "\n"


def loads_config(text: str) -> SimConfig:
    return config_from_dict(json.loads(text))


def truth_to_dict(config: SimConfig, gt: GroundTruth) -> dict:
    return {
        "config": config_to_dict(config),
        "events": [{"t": e.t, "kind": e.kind, "participants": list(e.participants)} for e in gt.events],
        "moving": {str(v): [t for t in sorted(gt.positions[v]) if gt.moving[(v, t)]] for v in gt.objects()},
        "present": {str(v): sorted(gt.positions[v]) for v in gt.objects()},
    }


def dumps_truth(config: SimConfig, gt: GroundTruth) -> str:
    return json.dumps(truth_to_dict(config, gt), sort_keys=True, separators=(",", ":")) + "\n"


def loads_truth(text: str) -> tuple[SimConfig, GroundTruth]:
    """Rebuild config and ground truth from a sidecar; trajectories are re-simulated."""
    doc = json.loads(text)
    config = config_from_dict(doc["config"])
    _, gt = simulate(config)
    events = [Event(e["t"], e["kind"], tuple(e["participants"])) for e in doc["events"]]
    if events != gt.events:
        raise SimError("ground-truth sidecar does not match its configuration")
    return config, gt


# --- scene generation ------------------------------------------------------


def _unit(rng) -> tuple:
    a = rng.uniform(0, 2 * math.pi)
    return math.cos(a), math.sin(a)


def _aim(src, dst, speed, offset) -> tuple:
    """Velocity from ``src`` passing ``dst`` at perpendicular distance ``offset``."""
    dx, dy = dst[0] - src[0], dst[1] - src[1]
    d = math.hypot(dx, dy)
    ux, uy = dx / d, dy / d
    # rotate so the path clears dst by ``offset``: sin(a) = offset / d
    a = math.asin(max(-1.0, min(1.0, offset / d)))
    ca, sa = math.cos(a), math.sin(a)
    return speed * (ux * ca - uy * sa), speed * (ux * sa + uy * ca)


def random_config(
    seed: int,
    n_objects: tuple = (3, 6),
    frame_count: int = 128,
    dims: int = 3,
    *,
    entry_fraction: float = 0.3,
    still_fraction: float = 0.45,
    max_offset: float = 0.8,
    max_tries: int = 100,
    **overrides,
) -> SimConfig:
    """Draw a scene in which moving objects are aimed at resting ones.

    Movers pass their target within ``max_offset`` radii of its centre, so
    most contacts are firm rather than grazing.
    """
    rng = np.random.default_rng(seed)
    base = SimConfig(objects=(), frame_count=frame_count, dims=dims, seed=seed, video_id=f"sim{seed}", **overrides)
    half, r = base.half_width, base.radius
    palette = [(c, s, m) for c in COLORS for s in SHAPES for m in MATERIALS]
    for _ in range(max_tries):
        k = int(rng.integers(n_objects[0], n_objects[1] + 1))
        picks = rng.choice(len(palette), size=k, replace=False)
        roles = ["still"] + [
            "enter" if frame_count > 8 and rng.random() < entry_fraction else
            ("still" if rng.random() < still_fraction else "move")
            for _ in range(k - 1)
        ]
        placed = []
        for role in roles:
            if role == "enter":
                placed.append(None)
            else:
                placed.append(tuple(float(x) for x in rng.uniform(-0.7 * half, 0.7 * half, size=2)))
        targets = [p for p, role in zip(placed, roles) if role == "still"]
        objs = []
        for i, (p, role) in enumerate(zip(picks, roles)):
            color, shape, material = palette[p]
            speed = float(rng.uniform(1.0, 2.0))
            offset = float(rng.uniform(-max_offset, max_offset)) * r
            spawn, velocity = 0, (0.0, 0.0)
            position = placed[i]
            if role == "enter":
                spawn = int(rng.integers(1, max(2, int(frame_count * 0.6))))
                s = float(rng.uniform(-0.6 * half, 0.6 * half))
                edge = half - 1.0
                position = [(edge, s), (-edge, s), (s, edge), (s, -edge)][int(rng.integers(4))]
            if role in ("enter", "move"):
                target = targets[int(rng.integers(len(targets)))]
                if math.dist(position, target) > 2 * r:
                    velocity = _aim(position, target, speed, offset)
                else:
                    u = _unit(rng)
                    velocity = (speed * u[0], speed * u[1])
            objs.append(ObjectSpec(i + 1, color, shape, material, spawn, position, velocity))
        config = replace(base, objects=tuple(objs))
        try:
            simulate(config)
        except SpawnOverlap:
            continue
        return config
    raise SimError(f"could not place objects without overlap after {max_tries} attempts")


# --- oracle ----------------------------------------------------------------


def _matching(flt: ObjectFilter, gt: GroundTruth) -> set:
    return {v for v, attrs in gt.attributes.items() if flt.matches(attrs)}


def _ref_events(ref: EventRef, gt: GroundTruth) -> list:
    if ref.kind == "collision":
        fa, fb = ref.objects
        out = []
        for e in gt.of_kind("collision"):
            a, b = e.participants
            attrs_a, attrs_b = gt.attributes[a], gt.attributes[b]
            if (fa.matches(attrs_a) and fb.matches(attrs_b)) or (fa.matches(attrs_b) and fb.matches(attrs_a)):
                out.append(e)
        return out
    return [e for e in gt.of_kind(ref.kind) if ref.objects[0].matches(gt.attributes[e.participants[0]])]


def _subject_events(pattern: EventPattern, gt: GroundTruth, v) -> list:
    out = []
    for e in gt.of_kind(pattern.kind):
        if v not in e.participants:
            continue
        if pattern.kind == "collision" and pattern.partner is not None:
            other = e.participants[1] if e.participants[0] == v else e.participants[0]
            if not pattern.partner.matches(gt.attributes[other]):
                continue
        out.append(e)
    return out


def _state_holds(state: str, gt: GroundTruth, v, t) -> bool:
    if not gt.present(v, t):
        return False
    if state == "present":
        return True
    return gt.moving[(v, t)] == (state == "moving")


def _descriptive_subjects(ast: QuestionAST, gt: GroundTruth) -> set:
    out = set()
    for v in _matching(ast.subject, gt):
        if ast.state is not None:
            t = 0 if ast.temporal.relation == "begin" else gt.frame_count - 1
            if _state_holds(ast.state, gt, v, t):
                out.add(v)
            continue
        times = [e.t for e in _subject_events(ast.event, gt, v)]
        if ast.temporal is not None:
            ref_times = [e.t for e in _ref_events(ast.temporal.event, gt)]
            if ast.temporal.relation == "before":
                times = [t for t in times if any(t < u for u in ref_times)]
            else:
                times = [t for t in times if any(t > u for u in ref_times)]
        if times:
            out.add(v)
    return out


def reachable_causes(gt: GroundTruth) -> set:
    """Responsibility edges by breadth-first search over the one-step relation."""
    kinds = ("entry", "exit", "collision")
    occ: dict = {}
    for e in gt.events:
        if e.kind in kinds:
            occ.setdefault(e.term, []).append(e.t)
    succ: dict = {}
    for v in gt.attributes:
        succ[("object", v)] = {("event", term) for term in occ if v in term[1:]}
    for a in occ:
        succ[("event", a)] = {
            ("event", b)
            for b in occ
            if a != b and set(a[1:]) & set(b[1:]) and min(occ[a]) < max(occ[b])
        }
    edges = set()
    for src in succ:
        seen, queue = set(), deque(succ[src])
        while queue:
            node = queue.popleft()
            if node in seen:
                continue
            seen.add(node)
            queue.extend(succ.get(node, ()))
        edges.update((src, dst) for dst in seen)
    return edges


def _option_nodes(opt, gt: GroundTruth) -> set:
    if isinstance(opt, Presence):
        return {("object", v) for v in _matching(opt.obj, gt)}
    return {("event", e.term) for e in _ref_events(opt, gt)}


def oracle_answer(ast: QuestionAST, gt: GroundTruth, *, causes: set | None = None, since: int = 0):
    """Answer by direct enumeration over the ground truth.

    Descriptive questions return ``"yes"``/``"no"``, an int or an attribute
    value; multiple-choice questions return a list of ``"yes"``/``"no"``.
    For predictive questions ``since`` is the first unobserved frame.
    """
    if ast.qtype in DESCRIPTIVE:
        subjects = _descriptive_subjects(ast, gt)
        if ast.qtype == "count":
            return len(subjects)
        if ast.qtype == "exist":
            return "yes" if subjects else "no"
        values = {gt.attributes[v][ast.target_attribute] for v in subjects}
        if len(values) != 1:
            raise AmbiguousReferent(f"query matches {len(values)} distinct {ast.target_attribute} values")
        return values.pop()
    if ast.qtype == "explanatory":
        if causes is None:
            causes = reachable_causes(gt)
        targets = _option_nodes(ast.target_event, gt)
        return [
            "yes" if any((s, d) in causes for s in _option_nodes(opt, gt) for d in targets) else "no"
            for opt in ast.options
        ]
    # predictive and counterfactual: does the event happen in the (possibly re-simulated) world
    return ["yes" if any(e.t >= since for e in _ref_events(opt, gt)) else "no" for opt in ast.options]


def oracle_whatif(ast: QuestionAST, config: SimConfig, observed: int | None = None):
    """Ground-truth answers for predictive and counterfactual questions."""
    if ast.qtype == "predictive":
        _, gt = simulate(config)
        return oracle_answer(ast, gt, since=observed if observed is not None else config.frame_count)
    if ast.qtype == "counterfactual":
        _, gt = simulate(config)
        victims = _matching(ast.removed, gt)
        if len(victims) != 1:
            raise AmbiguousReferent(f"removed object phrase matches {len(victims)} objects")
        _, world = resimulate_without(config, victims.pop())
        return oracle_answer(ast, world)
    raise ValueError(f"{ast.qtype} questions are answered by oracle_answer")


# --- question generation ---------------------------------------------------


def describe(v, gt: GroundTruth, rng, unique: bool = True) -> ObjectFilter:
    """A random filter that picks out ``v`` (uniquely among scene objects if ``unique``)."""
    attrs = gt.attributes[v]
    names = list(ATTRIBUTE_NAMES)
    for size in range(0, 4):
        subsets = [s for s in combinations(names, size)]
        order = rng.permutation(len(subsets))
        for i in order:
            sub = subsets[i]
            flt = ObjectFilter(
                attrs["color"] if "color" in sub else None,
                attrs["material"] if "material" in sub else None,
                attrs["shape"] if "shape" in sub else None,
            )
            if not unique or _matching(flt, gt) == {v}:
                if rng.random() < 0.5 or size == 3:
                    return flt
    return ObjectFilter(attrs["color"], attrs["material"], attrs["shape"])


def _event_ref(e: Event, gt: GroundTruth, rng) -> EventRef:
    return EventRef(e.kind, tuple(describe(v, gt, rng) for v in e.participants))


def _random_subject(gt: GroundTruth, rng) -> ObjectFilter:
    v = gt.objects()[rng.integers(len(gt.objects()))]
    return describe(v, gt, rng, unique=rng.random() < 0.5)


def generate_questions(gt: GroundTruth, rng, count: int = 50, kinds=("descriptive", "explanatory")) -> list:
    """Scene-grounded questions with well-defined oracle answers."""
    causal = [e for e in gt.events if e.kind in ("entry", "exit", "collision")]
    out, attempts = [], 0
    while len(out) < count and attempts < count * 50:
        attempts += 1
        if "explanatory" in kinds and causal and ("descriptive" not in kinds or rng.random() < 0.3):
            target = causal[rng.integers(len(causal))]
            opts = []
            for _ in range(int(rng.integers(2, 5))):
                if rng.random() < 0.4:
                    opts.append(Presence(describe(gt.objects()[rng.integers(len(gt.objects()))], gt, rng)))
                else:
                    opts.append(_event_ref(causal[rng.integers(len(causal))], gt, rng))
            ast = QuestionAST("explanatory", target_event=_event_ref(target, gt, rng), options=tuple(opts))
        elif "descriptive" in kinds:
            qtype = ("count", "exist", "query_attribute")[rng.integers(3)]
            attr = ATTRIBUTE_NAMES[rng.integers(3)] if qtype == "query_attribute" else None
            subject = _random_subject(gt, rng)
            if rng.random() < 0.5 or not gt.events:
                state = STATES[rng.integers(3)]
                temporal = Temporal(("begin", "end")[rng.integers(2)])
                ast = QuestionAST(qtype, subject=subject, state=state, temporal=temporal, target_attribute=attr)
            else:
                kind = ("entry", "exit", "collision")[rng.integers(3)]
                partner = None
                if kind == "collision" and rng.random() < 0.5:
                    partner = _random_subject(gt, rng)
                temporal = None
                if causal and rng.random() < 0.4:
                    ref = causal[rng.integers(len(causal))]
                    temporal = Temporal(("before", "after")[rng.integers(2)], _event_ref(ref, gt, rng))
                ast = QuestionAST(
                    qtype, subject=subject, event=EventPattern(kind, partner), temporal=temporal, target_attribute=attr
                )
        else:
            break
        try:
            oracle_answer(ast, gt)
        except AmbiguousReferent:
            continue
        out.append(ast)
    return out


def generate_whatif_questions(config: SimConfig, gt: GroundTruth, rng, count: int, qtype: str, observed: int = 0):
    """Predictive or counterfactual questions whose options mix real and absent events."""
    out = []
    candidates = [e for e in gt.events if e.kind in ("entry", "exit", "collision")]
    objects = gt.objects()
    for _ in range(count * 20):
        if len(out) >= count:
            break
        opts = []
        for _ in range(int(rng.integers(2, 5))):
            if candidates and rng.random() < 0.6:
                opts.append(_event_ref(candidates[rng.integers(len(candidates))], gt, rng))
            else:
                kind = ("entry", "exit", "collision")[rng.integers(3)]
                if kind == "collision" and len(objects) >= 2:
                    a, b = rng.choice(len(objects), size=2, replace=False)
                    vs = (objects[a], objects[b])
                else:
                    kind = "exit" if kind == "collision" else kind
                    vs = (objects[rng.integers(len(objects))],)
                opts.append(EventRef(kind, tuple(describe(v, gt, rng) for v in vs)))
        if qtype == "predictive":
            ast = QuestionAST("predictive", options=tuple(opts))
        else:
            removed = describe(objects[rng.integers(len(objects))], gt, rng)
            ast = QuestionAST("counterfactual", removed=removed, options=tuple(opts))
        out.append(ast)
    return out


def kinetic_energy(velocities) -> float:
    return sum(vx * vx + vy * vy for vx, vy in velocities)


def energy_steps(config: SimConfig, gt: GroundTruth) -> list:
    """(before, after) kinetic energy for each step over the objects on camera after it.

    ``before`` uses the velocity an object carried into the step, or its
    initial velocity when it spawns during the step.
    """
    out = []
    spawn = {o.object_id: o for o in config.objects if o.object_id in gt.attributes}
    for t in range(gt.frame_count - 1):
        after_ids = [v for v in gt.objects() if gt.present(v, t + 1)]
        before = []
        for v in after_ids:
            if gt.present(v, t):
                before.append(gt.velocities[v][t])
            else:
                before.append(tuple(spawn[v].velocity))
        after = [gt.velocities[v][t + 1] for v in after_ids]
        out.append((kinetic_energy(before), kinetic_energy(after)))
    return out
