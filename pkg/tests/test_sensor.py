import math

import numpy as np
import pytest

from gridmapper.grid import CellClass, GroundTruthMap, ObservationGrid, Pose
from gridmapper.sensor import ConsistencyError, SensorConfig, accumulate, cast_visible_cells, sense

from oracles import march_visible

F, O, X = CellClass.FREE, CellClass.OBSTACLE, CellClass.EXTERIOR


def open_room(size: int = 41) -> GroundTruthMap:
    cells = np.full((size + 2, size + 2), X, dtype=np.uint8)
    cells[1 : size + 1, 1 : size + 1] = F
    return GroundTruthMap(cells)


def test_sensor_config_validates():
    with pytest.raises(ValueError):
        SensorConfig(beam_count=10, angular_interval=22.5)
    with pytest.raises(ValueError):
        SensorConfig(max_range=-1)
    cfg = SensorConfig()
    assert cfg.beam_count == 16 and cfg.angular_interval == 22.5 and cfg.max_range == 20.0


def test_sense_open_area_matches_march_oracle():
    gt = open_room()
    cfg = SensorConfig()
    pose = Pose(21, 21)
    got = sense(gt, pose, cfg)
    blocked = gt.cells != F
    expected = march_visible(blocked, pose, cfg)
    assert {c for c, hit in got.items()} == set(expected)
    assert all((got[c] == CellClass.OBSTACLE) == expected[c] for c in got)


def test_sense_reports_wall_and_stops():
    cells = np.full((9, 9), X, dtype=np.uint8)
    cells[1:8, 1:8] = F
    cells[2, 1:8] = O  # wall just north of the agent row
    gt = GroundTruthMap(cells)
    got = sense(gt, Pose(4, 3), SensorConfig())
    assert got[(4, 2)] == CellClass.OBSTACLE
    assert (4, 1) not in got


def test_zero_range_reports_only_own_cell():
    gt = open_room(9)
    got = sense(gt, Pose(5, 5), SensorConfig(max_range=0.0))
    assert got == {(5, 5): CellClass.FREE}


def test_sense_rejects_pose_on_wall():
    cells = np.full((5, 5), X, dtype=np.uint8)
    cells[1:4, 1:4] = F
    cells[2, 2] = O
    gt = GroundTruthMap(cells)
    with pytest.raises(ValueError):
        sense(gt, Pose(2, 2), SensorConfig())


def test_diagonal_beam_passes_exact_corners():
    # A checkerboard diagonal of walls leaves the exact-corner path open: the
    # NE beam must slip through without visiting the side cells.
    cells = np.full((9, 9), X, dtype=np.uint8)
    cells[1:8, 1:8] = F
    cells[3, 4] = O  # north of the diagonal
    cells[4, 5] = O  # east of the diagonal
    gt = GroundTruthMap(cells)
    got = sense(gt, Pose(4, 4), SensorConfig())
    # The NE diagonal cells behind the pinch stay visible to the 45° beam.
    assert got.get((5, 3)) == CellClass.FREE
    assert got.get((6, 2)) == CellClass.FREE
    blocked = gt.cells != F
    expected = march_visible(blocked, Pose(4, 4), SensorConfig())
    assert {c for c, hit in got.items()} == set(expected)


def test_no_reported_cell_beyond_range_slack(map_pool):
    cfg = SensorConfig()
    slack = cfg.max_range + 0.5 * math.sqrt(2)
    for gt in map_pool[:3]:
        pose = gt.free_cells()[0]
        for cell in sense(gt, pose, cfg):
            assert math.hypot(cell[0] - pose.x, cell[1] - pose.y) <= slack


def test_sense_matches_ground_truth_classes(map_pool):
    cfg = SensorConfig()
    for gt in map_pool[:3]:
        free = gt.free_cells()
        for pose in free[:: max(1, len(free) // 20)]:
            for (x, y), cls in sense(gt, pose, cfg).items():
                truth = gt.cells[y, x]
                if cls == CellClass.FREE:
                    assert truth == F
                else:
                    assert truth in (O, X)


def test_randomized_oracle_equivalence(map_pool):
    rng = np.random.default_rng(11)
    cfg = SensorConfig()
    scenes = 0
    for gt in map_pool:
        blocked = gt.cells != F
        free = gt.free_cells()
        for idx in rng.integers(0, len(free), size=25):
            pose = free[int(idx)]
            got = sense(gt, pose, cfg)
            expected = march_visible(blocked, pose, cfg)
            assert {c for c, hit in got.items()} == set(expected), f"scene {pose}"
            assert all((got[c] == CellClass.OBSTACLE) == expected[c] for c in got)
            scenes += 1
    assert scenes == 200


def test_cast_visible_rejects_blocked_origin():
    blocked = np.zeros((3, 3), dtype=bool)
    blocked[1, 1] = True
    with pytest.raises(ValueError):
        cast_visible_cells(blocked, Pose(1, 1), SensorConfig())


def test_accumulate_idempotent_and_counting():
    obs = ObservationGrid.all_unknown(4, 4)
    readings = {(0, 0): F, (1, 0): O, (2, 2): F}
    assert accumulate(obs, readings) == 3
    snapshot = obs.cells.copy()
    assert accumulate(obs, readings) == 0
    assert np.array_equal(obs.cells, snapshot)


def test_accumulate_empty_noop():
    obs = ObservationGrid.all_unknown(2, 2)
    assert accumulate(obs, {}) == 0
    assert not obs.known_mask.any()


def test_accumulate_order_independent():
    rng = np.random.default_rng(5)
    for _ in range(20):
        coords = [(int(x), int(y)) for x, y in rng.integers(0, 6, size=(12, 2))]
        classes = [F if rng.random() < 0.5 else O for _ in coords]
        readings = dict(zip(coords, classes))
        split = len(readings) // 2
        items = list(readings.items())
        a = ObservationGrid.all_unknown(6, 6)
        accumulate(a, dict(items[:split]))
        accumulate(a, dict(items[split:]))
        b = ObservationGrid.all_unknown(6, 6)
        accumulate(b, dict(items[split:]))
        accumulate(b, dict(items[:split]))
        assert a == b


def test_accumulate_detects_contradiction():
    obs = ObservationGrid.all_unknown(3, 3)
    accumulate(obs, {(1, 1): F})
    with pytest.raises(ConsistencyError):
        accumulate(obs, {(1, 1): O})


def test_accumulate_folds_exterior_to_obstacle():
    obs = ObservationGrid.all_unknown(3, 3)
    accumulate(obs, {(0, 0): X})
    assert obs.cells[0, 0] == CellClass.OBSTACLE


def test_accumulate_bounds_check():
    obs = ObservationGrid.all_unknown(3, 3)
    with pytest.raises(ValueError):
        accumulate(obs, {(5, 0): F})
