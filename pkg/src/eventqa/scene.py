"""Symbolic scene traces: the per-frame object detections a video parser emits."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import IO, Union

import numpy as np

INT64_MAX = 2**63 - 1

COLORS = ("gray", "red", "blue", "green", "brown", "purple", "cyan", "yellow")
SHAPES = ("cube", "sphere", "cylinder")
MATERIALS = ("rubber", "metal")


class TraceFormatError(ValueError):
    def __init__(self, message: str, position: int | None = None):
        if position is not None:
            message = f"{message} (at byte {position})"
        super().__init__(message)
        self.position = position


class QuantizationOverflow(ValueError):
    pass


@dataclass(frozen=True)
class Vocabulary:
    colors: tuple = COLORS
    shapes: tuple = SHAPES
    materials: tuple = MATERIALS

    def check(self, det: "Detection") -> None:
        for name, value, allowed in (
            ("color", det.color, self.colors),
            ("shape", det.shape, self.shapes),
            ("material", det.material, self.materials),
        ):
            if value not in allowed:
                raise TraceFormatError(f"unknown {name} {value!r} for object {det.object_id}")


DEFAULT_VOCABULARY = Vocabulary()


@dataclass(frozen=True)
class Detection:
    object_id: int
    color: str
    shape: str
    material: str
    position: tuple
    score: float = 1.0

    @property
    def attributes(self) -> tuple:
        return (self.color, self.shape, self.material)


@dataclass(frozen=True)
class Frame:
    t: int
    detections: tuple = ()

    def ids(self) -> set:
        return {d.object_id for d in self.detections}


@dataclass(frozen=True)
class SceneTrace:
    video_id: str
    dims: int
    frame_count: int
    frames: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.dims not in (2, 3):
            raise TraceFormatError(f"dims must be 2 or 3, got {self.dims}")
        if self.frame_count < 1:
            raise TraceFormatError("frame_count must be positive")
        if [f.t for f in self.frames] != list(range(self.frame_count)):
            raise TraceFormatError("non-contiguous frames")
        for f in self.frames:
            seen = set()
            for d in f.detections:
                if d.object_id in seen:
                    raise TraceFormatError(f"duplicate object id {d.object_id} in frame {f.t}")
                seen.add(d.object_id)
                if len(d.position) != self.dims:
                    raise TraceFormatError(
                        f"object {d.object_id} in frame {f.t} has {len(d.position)} coordinates, expected {self.dims}"
                    )
                if not 0.0 <= d.score <= 1.0:
                    raise TraceFormatError(f"score out of range for object {d.object_id} in frame {f.t}")

    def object_ids(self) -> list:
        return sorted({d.object_id for f in self.frames for d in f.detections})

    def presence(self) -> dict:
        """Map object id to the sorted list of frames it is detected in."""
        out: dict = {}
        for f in self.frames:
            for d in f.detections:
                out.setdefault(d.object_id, []).append(f.t)
        return out


@dataclass(frozen=True)
class QuantSpec:
    scale: int = 100

    def __post_init__(self):
        if not isinstance(self.scale, int) or self.scale < 1:
            raise ValueError("scale must be an integer >= 1")


@dataclass(frozen=True)
class NoiseSpec:
    position_sigma: float = 0.0
    flicker_prob: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.position_sigma < 0:
            raise ValueError("position_sigma must be nonnegative")
        if not 0.0 <= self.flicker_prob <= 1.0:
            raise ValueError("flicker_prob must lie in [0, 1]")


def _fmt_num(x):
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return int(x)
    r = round(float(x), 6)
    return 0.0 if r == 0 else r


def trace_to_dict(trace: SceneTrace) -> dict:
    return {
        "video_id": trace.video_id,
        "dims": trace.dims,
        "frame_count": trace.frame_count,
        "frames": [
            {
                "t": f.t,
                "detections": [
                    {
                        "id": d.object_id,
                        "color": d.color,
                        "shape": d.shape,
                        "material": d.material,
                        "pos": [_fmt_num(c) for c in d.position],
                        "score": _fmt_num(float(d.score)),
                    }
                    for d in sorted(f.detections, key=lambda d: d.object_id)
                ],
            }
            for f in sorted(trace.frames, key=lambda f: f.t)
        ],
    }


def dumps_trace(trace: SceneTrace) -> str:
    """Canonical serialization: fixed key order, sorted frames and detections."""
    return json.dumps(trace_to_dict(trace), separators=(",", ":")) + "\n"


def save_trace(trace: SceneTrace, dest: Union[str, IO]) -> None:
    text = dumps_trace(trace)
    if hasattr(dest, "write"):
        dest.write(text)
    else:
        with open(dest, "w", encoding="utf-8") as fh:
            fh.write(text)


def trace_from_dict(
    doc: dict,
    score_floor: float = 0.5,
    vocabulary: Vocabulary = DEFAULT_VOCABULARY,
    stride: int = 1,
) -> SceneTrace:
    try:
        dims = int(doc["dims"])
        frames_doc = sorted(doc["frames"], key=lambda f: f["t"])
        ts = [int(f["t"]) for f in frames_doc]
        if ts != list(range(len(ts))):
            raise TraceFormatError("non-contiguous frames")
        if len(ts) != int(doc["frame_count"]):
            raise TraceFormatError("frame_count does not match the number of frames")
        frames = []
        for f in frames_doc:
            dets = []
            for d in f["detections"]:
                det = Detection(
                    int(d["id"]),
                    str(d["color"]),
                    str(d["shape"]),
                    str(d["material"]),
                    tuple(d["pos"]),
                    float(d.get("score", 1.0)),
                )
                if det.score < score_floor:
                    continue
                vocabulary.check(det)
                dets.append(det)
            frames.append(Frame(int(f["t"]), tuple(sorted(dets, key=lambda d: d.object_id))))
        trace = SceneTrace(str(doc["video_id"]), dims, len(frames), tuple(frames))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, TraceFormatError):
            raise
        raise TraceFormatError(f"malformed trace document: {exc!r}") from None
    if stride != 1:
        trace = subsample(trace, stride)
    return trace


def load_trace(
    source: Union[str, bytes, IO],
    score_floor: float = 0.5,
    vocabulary: Vocabulary = DEFAULT_VOCABULARY,
    stride: int = 1,
) -> SceneTrace:
    """Parse a trace document from a path, raw bytes/str, or a readable stream."""
    if hasattr(source, "read"):
        raw = source.read()
    elif isinstance(source, bytes):
        raw = source
    else:
        with open(source, "rb") as fh:
            raw = fh.read()
    if isinstance(raw, bytes):
        try:
            raw = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise TraceFormatError("trace is not valid UTF-8", exc.start) from None
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise TraceFormatError(f"malformed trace document: {exc.msg}", exc.pos) from None
    if not isinstance(doc, dict):
        raise TraceFormatError("trace document must be a JSON object", 0)
    return trace_from_dict(doc, score_floor, vocabulary, stride)


def subsample(trace: SceneTrace, stride: int) -> SceneTrace:
    """Keep every ``stride``-th frame, renumbering frames contiguously."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    kept = trace.frames[::stride]
    frames = tuple(Frame(i, f.detections) for i, f in enumerate(kept))
    return SceneTrace(trace.video_id, trace.dims, len(frames), frames)


def _round_half_away(x: float) -> int:
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def quantize(trace: SceneTrace, spec: QuantSpec = QuantSpec()) -> SceneTrace:
    """Scale coordinates and round them half away from zero to integers."""
    frames = []
    for f in trace.frames:
        dets = []
        for d in f.detections:
            coords = []
            for c in d.position:
                if isinstance(c, int):
                    q = c * spec.scale
                else:
                    scaled = float(c) * spec.scale
                    if not math.isfinite(scaled):
                        raise QuantizationOverflow(f"non-finite coordinate for object {d.object_id}")
                    q = _round_half_away(scaled)
                if abs(q) > INT64_MAX:
                    raise QuantizationOverflow(
                        f"coordinate {c} of object {d.object_id} overflows 64 bits at scale {spec.scale}"
                    )
                coords.append(q)
            dets.append(replace(d, position=tuple(coords)))
        frames.append(Frame(f.t, tuple(dets)))
    return replace(trace, frames=tuple(frames))


def perturb(trace: SceneTrace, noise: NoiseSpec) -> SceneTrace:
    """Jitter positions and drop isolated single-frame detections.

    An object is never dropped in two consecutive frames, nor in the first or
    last frame it appears in. Random draws happen in a fixed order, so the
    result depends only on the trace and the seed.
    """
    if noise.position_sigma == 0 and noise.flicker_prob == 0:
        return trace
    rng = np.random.default_rng(noise.seed)
    dropped = set()
    presence = trace.presence()
    for oid in sorted(presence):
        frames = presence[oid]
        draws = rng.random(len(frames))
        prev_dropped = False
        for i, t in enumerate(frames):
            if i == 0 or i == len(frames) - 1:
                prev_dropped = False
                continue
            # only drop frames whose neighbours are both present
            neighbours_present = frames[i - 1] == t - 1 and frames[i + 1] == t + 1
            if not prev_dropped and neighbours_present and draws[i] < noise.flicker_prob:
                dropped.add((oid, t))
                prev_dropped = True
            else:
                prev_dropped = False
    out = []
    for f in trace.frames:
        dets = []
        for d in f.detections:
            jitter = rng.normal(0.0, noise.position_sigma, trace.dims) if noise.position_sigma > 0 else None
            if (d.object_id, f.t) in dropped:
                continue
            if jitter is not None:
                d = replace(d, position=tuple(float(c) + float(j) for c, j in zip(d.position, jitter)))
            dets.append(d)
        out.append(Frame(f.t, tuple(dets)))
    return replace(trace, frames=tuple(out))
