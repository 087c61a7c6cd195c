import io
import json

import numpy as np
import pytest

from eventqa.scene import (
    Detection,
    Frame,
    NoiseSpec,
    QuantizationOverflow,
    QuantSpec,
    SceneTrace,
    TraceFormatError,
    Vocabulary,
    dumps_trace,
    load_trace,
    perturb,
    quantize,
    save_trace,
    subsample,
)
from eventqa.sim import random_config, raw_trace, simulate


def _doc(frames, n=None, dims=3):
    return {"video_id": "v", "dims": dims, "frame_count": len(frames) if n is None else n, "frames": frames}


def _det(i=0, pos=(1.0, 2.0, 3.0), score=0.9, color="red"):
    return {"id": i, "color": color, "shape": "cube", "material": "metal", "pos": list(pos), "score": score}


def test_minimal_document():
    trace = load_trace(json.dumps(_doc([{"t": 0, "detections": [_det()]}])).encode())
    assert trace.frame_count == 1
    assert len(trace.frames[0].detections) == 1


def test_non_contiguous_frames():
    doc = _doc([{"t": 0, "detections": []}, {"t": 2, "detections": []}], n=2)
    with pytest.raises(TraceFormatError, match="non-contiguous frames"):
        load_trace(json.dumps(doc).encode())


def test_duplicate_id():
    doc = _doc([{"t": 0, "detections": [_det(0), _det(0)]}])
    with pytest.raises(TraceFormatError, match="duplicate object id"):
        load_trace(json.dumps(doc).encode())


def test_malformed_reports_byte_position():
    with pytest.raises(TraceFormatError) as err:
        load_trace(b'{"video_id": "v", "dims": 3,, }')
    assert err.value.position == 28


def test_score_floor_and_vocabulary():
    doc = _doc([{"t": 0, "detections": [_det(0, score=0.4), _det(1, score=0.6)]}])
    trace = load_trace(json.dumps(doc).encode())
    assert trace.object_ids() == [1]
    assert load_trace(json.dumps(doc).encode(), score_floor=0.0).object_ids() == [0, 1]
    pink = _doc([{"t": 0, "detections": [_det(color="pink")]}])
    with pytest.raises(TraceFormatError, match="unknown color"):
        load_trace(json.dumps(pink).encode())
    assert load_trace(json.dumps(pink).encode(), vocabulary=Vocabulary(colors=("pink",))).object_ids() == [0]


def test_dims_mismatch():
    doc = _doc([{"t": 0, "detections": [_det(pos=(1, 2))]}])
    with pytest.raises(TraceFormatError, match="coordinates"):
        load_trace(json.dumps(doc).encode())


def test_round_trip_simulator_output():
    config = random_config(5, n_objects=(5, 5))
    trace = raw_trace(config, simulate(config)[1])
    text = dumps_trace(trace)
    again = load_trace(text.encode())
    assert dumps_trace(again) == text
    assert again.frame_count == 128 and len(again.object_ids()) == 5
    buf = io.StringIO()
    save_trace(again, buf)
    assert buf.getvalue() == text


def test_quantize_examples():
    trace = SceneTrace("v", 2, 1, (Frame(0, (Detection(0, "red", "cube", "metal", (1.234, -0.5)),)),))
    q = quantize(trace, QuantSpec(100))
    assert q.frames[0].detections[0].position == (123, -50)
    assert quantize(q, QuantSpec(1)) == q
    ints = SceneTrace("v", 2, 1, (Frame(0, (Detection(0, "red", "cube", "metal", (3, -4)),)),))
    assert quantize(ints, QuantSpec(1)) == ints


def test_quantize_half_away_from_zero():
    trace = SceneTrace("v", 2, 1, (Frame(0, (Detection(0, "red", "cube", "metal", (0.005, -0.005)),)),))
    assert quantize(trace).frames[0].detections[0].position == (1, -1)


def test_quantize_overflow():
    trace = SceneTrace("v", 2, 1, (Frame(0, (Detection(0, "red", "cube", "metal", (1e17, 0.0)),)),))
    with pytest.raises(QuantizationOverflow):
        quantize(trace)


def test_quant_spec_validation():
    with pytest.raises(ValueError):
        QuantSpec(0)


def test_perturb_identity_and_determinism():
    trace, _ = simulate(random_config(9))
    assert perturb(trace, NoiseSpec()) == trace
    noise = NoiseSpec(0.5, 0.1, 42)
    assert perturb(trace, noise) == perturb(trace, noise)
    assert perturb(trace, noise) != perturb(trace, NoiseSpec(0.5, 0.1, 43))


def test_perturb_keeps_first_and_last_frames():
    trace, _ = simulate(random_config(4))
    before = trace.presence()
    for seed in range(50):
        after = perturb(trace, NoiseSpec(0.0, 0.5, seed)).presence()
        for v, frames in before.items():
            assert after[v][0] == frames[0] and after[v][-1] == frames[-1]
            assert not any(b - a > 2 for a, b in zip(after[v], after[v][1:]))


def _expected_drops(presence, p):
    # exact expectation of the isolated-drop process: a frame is eligible when it
    # is interior to the run and the previous frame was not dropped
    total = 0.0
    for frames in presence.values():
        prev = 0.0
        for i in range(len(frames)):
            d = 0.0 if i in (0, len(frames) - 1) else p * (1 - prev)
            total += d
            prev = d
    return total


def test_flicker_rate_over_seeds():
    trace, _ = simulate(random_config(3, n_objects=(5, 5)))
    presence = trace.presence()
    n = sum(len(v) for v in presence.values())
    p = 0.05
    counts = np.array(
        [n - sum(len(f.detections) for f in perturb(trace, NoiseSpec(0.0, p, s)).frames) for s in range(1000)]
    )
    sigma = np.sqrt(n * p * (1 - p))
    # every seed inside the 3-sigma binomial band around p * presence
    assert np.all(np.abs(counts - p * n) <= 3 * sigma)
    # the mean agrees with the exact expectation of the constrained process
    se = counts.std(ddof=1) / np.sqrt(len(counts))
    assert abs(counts.mean() - _expected_drops(presence, p)) <= 3 * se


def test_subsample():
    trace, _ = simulate(random_config(2))
    half = subsample(trace, 2)
    assert half.frame_count == 64
    assert half.frames[1].detections == trace.frames[2].detections
