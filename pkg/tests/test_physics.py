import logging

import pytest

from eventqa.facts import reconstruct
from eventqa.physics import (
    KinematicTable,
    MissingPosition,
    Thresholds,
    displacement,
    materialize_kinematics,
    parse_thresholds,
)
from eventqa.scene import Detection, Frame, SceneTrace
from eventqa.sim import ObjectSpec, SimConfig, random_config, simulate


def _trace(*frames, dims=3):
    """Each frame is a dict id -> position."""
    out = []
    for t, frame in enumerate(frames):
        dets = tuple(Detection(v, "red" if v == 0 else "blue", "cube", "metal", p) for v, p in sorted(frame.items()))
        out.append(Frame(t, dets))
    return SceneTrace("v", dims, len(out), tuple(out))


def test_displacement_examples():
    fb = reconstruct(_trace({0: (0, 0, 0)}, {0: (3, 4, 0)}, {0: (3, 4, 0)}))
    assert displacement(fb, 0, 0, 1) == 25
    assert displacement(fb, 0, 1, 2) == 0


def test_displacement_missing_is_not_zero():
    fb = reconstruct(_trace({0: (0, 0, 0)}, {}, {0: (0, 0, 0)}))
    with pytest.raises(MissingPosition):
        displacement(fb, 0, 0, 1)
    with pytest.raises(ValueError):
        displacement(fb, 0, 0, 2)


def test_displacement_2d():
    fb = reconstruct(_trace({0: (0, 0)}, {0: (6, 8)}, dims=2))
    assert displacement(fb, 0, 0, 1) == 100


def test_constant_velocity_against_simulator():
    vx, vy = 1.3, -0.7
    config = SimConfig((ObjectSpec(0, "red", "cube", "metal", 0, (-20.0, 10.0), (vx, vy)),), frame_count=20, friction=0.0)
    trace, _ = simulate(config)
    fb = reconstruct(trace)
    s = config.scale
    exact = (vx * vx + vy * vy) * s * s
    # each quantized coordinate difference is off by at most 1 unit
    slack = (2 * abs(vx) * s + 1) + (2 * abs(vy) * s + 1)
    for t in range(19):
        assert abs(displacement(fb, 0, t, t + 1) - exact) <= slack


def test_static_object():
    fb = reconstruct(_trace(*[{0: (5, 5, 5)}] * 4))
    atoms = materialize_kinematics(fb, Thresholds())
    assert not any(a[0] == "disp_greater" for a in atoms)
    assert {a for a in atoms if a[0] == "disp_smaller"} == {("disp_smaller", 400, 0, t, t + 1) for t in range(3)}


def test_proximity_boundary_and_symmetry():
    th = Thresholds(d_prox=25)
    fb = reconstruct(_trace({0: (0, 0, 0), 1: (3, 4, 0)}))
    atoms = materialize_kinematics(fb, th)
    assert ("euc_distance", 25, 0, 1, 0) in atoms and ("euc_distance", 25, 1, 0, 0) in atoms
    assert not materialize_kinematics(fb, Thresholds(d_prox=24)) & {("euc_distance", 24, 0, 1, 0)}


def test_velocity_change_direction():
    # displacement 0 then 100: change 100 meets a threshold of 100, not 101
    fb = reconstruct(_trace({0: (0, 0, 0)}, {0: (0, 0, 0)}, {0: (10, 0, 0)}))
    assert ("velocity_change", 100, 0, 1) in materialize_kinematics(fb, Thresholds(d_vel=100))
    assert ("velocity_change", 101, 0, 1) not in materialize_kinematics(fb, Thresholds(d_vel=101))


def _nested_loop(fb, th):
    """Direct recomputation over every object pair and frame."""
    out = set()
    objs = sorted(fb.presence)
    n = fb.time_horizon
    pos = fb.positions
    sq = lambda p, q: sum((a - b) ** 2 for a, b in zip(p, q))
    for v in objs:
        for t in range(n - 1):
            if (v, t) in pos and (v, t + 1) in pos:
                d = sq(pos[(v, t)], pos[(v, t + 1)])
                if d > th.d_move:
                    out.add(("disp_greater", th.d_move, v, t, t + 1))
                if d <= th.d_stop:
                    out.add(("disp_smaller", th.d_stop, v, t, t + 1))
                if t >= 1 and (v, t - 1) in pos:
                    d0 = sq(pos[(v, t - 1)], pos[(v, t)])
                    if abs(d0 - d) >= th.d_vel:
                        out.add(("velocity_change", th.d_vel, v, t))
        for w in objs:
            for t in range(n):
                if v != w and (v, t) in pos and (w, t) in pos and sq(pos[(v, t)], pos[(w, t)]) <= th.d_prox:
                    out.add(("euc_distance", th.d_prox, v, w, t))
    return out


def test_against_nested_loop_oracle():
    th = Thresholds()
    for seed in range(5):
        fb = reconstruct(simulate(random_config(seed, n_objects=(3, 3)))[0])
        assert materialize_kinematics(fb, th) == _nested_loop(fb, th)


def test_disp_predicates_exclusive_at_equal_threshold():
    th = Thresholds(d_move=400, d_stop=400)
    fb = reconstruct(simulate(random_config(8))[0])
    table = KinematicTable(fb)
    assert not table.moving_pairs(th) & table.still_pairs(th)
    assert table.moving_pairs(th) | table.still_pairs(th) == set(table.disp)


def test_thresholds_validation_and_warning(caplog):
    with pytest.raises(ValueError):
        Thresholds(d_move=-1)
    with pytest.raises(ValueError):
        Thresholds(persistence_window=3)
    with caplog.at_level(logging.WARNING, logger="eventqa.physics"):
        Thresholds(d_move=777, d_stop=123)
    assert "hysteresis" in caplog.text


def test_thresholds_file_round_trip():
    th = Thresholds(1, 2, 3, 4, 1)
    assert parse_thresholds(th.dumps()) == th
    assert parse_thresholds("# calibrated\nd_prox = 5\n").d_prox == 5
    with pytest.raises(ValueError, match="unknown threshold"):
        parse_thresholds("d_speed = 3\n")
