import numpy as np
import pytest

from eventqa.calib import Grid, analyze_collisions, calib_scenes_from_sim, grid_search
from eventqa.facts import reconstruct
from eventqa.physics import Thresholds
from eventqa.sim import ObjectSpec, SimConfig, random_config, simulate

SMALL = Grid(d_move=(100, 6400), d_stop=(400,), d_prox=(1_000, 100_000), d_vel=(100, 400))


@pytest.fixture(scope="module")
def scenes():
    return calib_scenes_from_sim([random_config(500 + k) for k in range(6)], 30, seed=1)


def test_single_point(scenes):
    grid = Grid((400,), (400,), (100_000,), (100,))
    result = grid_search(scenes, grid)
    assert result.best == Thresholds(400, 400, 100_000, 100)
    assert len(result.table) == 1 and 0 < result.best_accuracy <= 1


def test_cached_equals_uncached(scenes):
    cached = grid_search(scenes, SMALL, cached=True)
    plain = grid_search(scenes, SMALL, cached=False)
    assert cached.table == plain.table
    assert cached.best == plain.best


def test_argmax_consistency(scenes):
    result = grid_search(scenes, SMALL)
    best = result.best_accuracy
    assert result.best in SMALL.points()
    assert all(correct / total <= best for _, correct, total in result.table)
    # repeated evaluation of a point is identical
    assert grid_search(scenes, SMALL).table == result.table


def test_worse_point_keeps_argmax(scenes):
    base = grid_search(scenes, Grid((400,), (400,), (100_000,), (100, 400)))
    # a proximity bound no contact can meet only loses collision answers
    wider = grid_search(scenes, Grid((400,), (400,), (100_000, 1), (100, 400)))
    assert wider.accuracy(Thresholds(400, 400, 1, 100)) < wider.best_accuracy
    assert wider.best == base.best


def test_tie_breaking(scenes):
    # thresholds that no collision question can distinguish tie; the smallest d_prox wins
    grid = Grid((400,), (400,), (200_000_000, 100_000_000), (10**9,))
    result = grid_search(scenes, grid)
    assert result.best.d_prox == 100_000_000


def test_empty_grid_dimension():
    with pytest.raises(ValueError):
        Grid(d_move=())


def test_csv_header(scenes):
    text = grid_search(scenes, Grid((400,), (400,), (100_000,), (100,))).to_csv()
    assert text.splitlines()[0] == "d_move,d_stop,d_prox,d_vel,correct,total,accuracy"


def test_no_collision_scene():
    a = ObjectSpec(0, "red", "cube", "metal", 0, (-10.0, -10.0), (1.0, 0.0))
    b = ObjectSpec(1, "blue", "sphere", "rubber", 0, (-10.0, 10.0))
    config = SimConfig((a, b), frame_count=30)
    trace, gt = simulate(config)
    tables = analyze_collisions([("v", reconstruct(trace), gt)])
    assert tables.distances and not any(row[-1] for row in tables.distances)
    assert {row[0] for row in tables.velocity_changes} == {"control"}
    assert tables.distances_csv().splitlines()[0] == "pair_id,frame,dx,dy,dz,colliding"
    assert tables.velocity_csv().splitlines()[0] == "offset,object,velocity_change"


@pytest.mark.slow
def test_analysis_on_simulated_scenes():
    rows = []
    for seed in range(200):
        trace, gt = simulate(random_config(3000 + seed))
        rows.append((f"s{seed}", reconstruct(trace), gt))
    tables = analyze_collisions(rows)
    control = np.array(tables.bucket("control"))
    assert np.median(control) == 0
    # the collision frame carries far larger changes than the control bucket
    assert np.median(tables.bucket(0)) > 100 * max(1, np.median(control))
    assert tables.recall(Thresholds().d_prox) >= 0.95
