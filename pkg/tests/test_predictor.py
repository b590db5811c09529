import numpy as np
import pytest

from gridmapper.grid import CellClass, GroundTruthMap, ObservationGrid
from gridmapper.predictor import (
    D1_THRESHOLDS,
    D2_THRESHOLDS,
    HeuristicWallExtendPredictor,
    NoisyOraclePredictor,
    NullPredictor,
    ProbabilityGrid,
    RemotePredictor,
    ThresholdConfig,
    f1_score,
    parse_predictor,
    predict,
    predictor_label,
    synthesize,
    threshold,
)

F, O, U, X = CellClass.FREE, CellClass.OBSTACLE, CellClass.UNKNOWN, CellClass.EXTERIOR


def test_probability_grid_validation():
    with pytest.raises(ValueError):
        ProbabilityGrid(np.array([[0.5, 1.2]]))
    with pytest.raises(ValueError):
        ProbabilityGrid(np.array([[np.nan]]))
    ProbabilityGrid(np.array([[0.0, 1.0]]))


def test_null_predictor_uniform():
    obs = ObservationGrid.all_unknown(4, 3)
    p = predict(NullPredictor(), obs)
    assert (p.values == 0.5).all()


def test_noisy_oracle_noiseless():
    cells = np.array([[X, X, X], [X, F, O], [X, F, F]], dtype=np.uint8)
    gt = GroundTruthMap(cells)
    obs = ObservationGrid.all_unknown(3, 3)
    p = predict(NoisyOraclePredictor(0.0), obs, ground_truth=gt)
    assert p.values[1, 1] == 0.0 and p.values[2, 1] == 0.0
    assert p.values[1, 2] == 1.0
    assert p.values[0, 0] == 1.0  # exterior counts as wall


def test_noisy_oracle_flip_rate_bounds():
    with pytest.raises(ValueError):
        NoisyOraclePredictor(0.5)
    with pytest.raises(ValueError):
        NoisyOraclePredictor(-0.1)
    p = NoisyOraclePredictor(0.3)
    assert p.flip_rate == 0.3


def test_noisy_oracle_requires_ground_truth():
    with pytest.raises(ValueError):
        predict(NoisyOraclePredictor(0.0), ObservationGrid.all_unknown(2, 2))


def test_heuristic_extends_wall_runs():
    obs = ObservationGrid.all_unknown(12, 5)
    obs.cells[2, 1:6] = O  # horizontal run of 5 at y=2, x=1..5
    p = predict(HeuristicWallExtendPredictor(), obs)
    assert p.values[2, 6] == pytest.approx(0.9)
    assert p.values[2, 7] == pytest.approx(0.8)
    assert p.values[2, 10] == pytest.approx(0.5)
    assert p.values[2, 0] == pytest.approx(0.9)  # run extends both ways


def test_heuristic_short_runs_do_not_extend():
    obs = ObservationGrid.all_unknown(8, 3)
    obs.cells[1, 2:4] = O  # run of 2 only
    p = predict(HeuristicWallExtendPredictor(), obs)
    assert p.values[1, 4] == pytest.approx(0.5)


def test_heuristic_free_propagation():
    obs = ObservationGrid.all_unknown(5, 5)
    obs.cells[2, 2] = F
    p = predict(HeuristicWallExtendPredictor(), obs)
    assert p.values[2, 3] == pytest.approx(0.1)
    assert p.values[1, 1] == pytest.approx(0.1)
    assert p.values[2, 2] == pytest.approx(0.5)  # observed itself stays neutral
    assert p.values[0, 4] == pytest.approx(0.5)


def test_heuristic_extension_stops_at_observed():
    obs = ObservationGrid.all_unknown(10, 3)
    obs.cells[1, 0:3] = O
    obs.cells[1, 4] = F  # observed free cell interrupts the extension
    p = predict(HeuristicWallExtendPredictor(), obs)
    assert p.values[1, 3] == pytest.approx(0.9)
    assert p.values[1, 5] == pytest.approx(0.1)  # free propagation, not extension


def test_threshold_cutoffs_match_confidence_levels():
    assert D1_THRESHOLDS.free_cutoff == pytest.approx(0.035)
    assert D1_THRESHOLDS.obstacle_cutoff == pytest.approx(0.975)
    assert D2_THRESHOLDS.free_cutoff == pytest.approx(0.05)
    assert D2_THRESHOLDS.obstacle_cutoff == pytest.approx(0.995)


def test_threshold_classifies_per_cutoff():
    p = ProbabilityGrid(np.array([[0.02, 0.04, 0.5, 0.98, 0.97]]))
    out = threshold(p, ThresholdConfig(0.93, 0.95))
    assert out.cells.tolist()[0] == [F, U, U, O, U]


def test_threshold_extreme_levels():
    p = ProbabilityGrid(np.array([[0.0, 1e-9, 0.5, 1.0 - 1e-9, 1.0]]))
    out = threshold(p, ThresholdConfig(1.0, 1.0))
    assert out.cells.tolist()[0] == [F, U, U, U, O]


def test_threshold_monotone_in_confidence():
    rng = np.random.default_rng(2)
    p = ProbabilityGrid(rng.random((20, 20)))
    grid = np.linspace(0.0, 1.0, 21)
    prev_free = None
    for delta in grid:
        free_count = int((threshold(p, ThresholdConfig(delta, 0.5)).cells == F).sum())
        if prev_free is not None:
            assert free_count <= prev_free
        prev_free = free_count
    prev_wall = None
    for delta in grid:
        wall_count = int((threshold(p, ThresholdConfig(0.5, delta)).cells == O).sum())
        if prev_wall is not None:
            assert wall_count <= prev_wall
        prev_wall = wall_count


def test_null_pipeline_reduces_to_no_predictor():
    obs = ObservationGrid.all_unknown(6, 6)
    obs.cells[3, 3] = F
    for delta in (0.1, 0.5, 0.93):
        predicted = threshold(predict(NullPredictor(), obs), ThresholdConfig(delta, delta))
        assert not predicted.known_mask.any()
        assert synthesize(obs, predicted) == obs


def test_synthesize_precedence():
    obs = ObservationGrid(np.array([[F, U], [O, U]], dtype=np.uint8))
    predicted = ObservationGrid(np.array([[O, O], [U, F]], dtype=np.uint8))
    merged = synthesize(obs, predicted)
    assert merged.cells.tolist() == [[F, O], [O, F]]


def test_synthesize_identity_cases():
    obs = ObservationGrid(np.array([[F, U, O]], dtype=np.uint8))
    all_unknown = ObservationGrid.all_unknown(3, 1)
    assert synthesize(obs, all_unknown) == obs
    predicted = ObservationGrid(np.array([[O, F, F]], dtype=np.uint8))
    assert synthesize(all_unknown, predicted) == predicted


def test_synthesize_never_contradicts_observations():
    rng = np.random.default_rng(8)
    for _ in range(20):
        obs = ObservationGrid(rng.integers(0, 3, size=(7, 7)).astype(np.uint8))
        predicted = ObservationGrid(rng.integers(0, 3, size=(7, 7)).astype(np.uint8))
        merged = synthesize(obs, predicted)
        known = obs.known_mask
        assert np.array_equal(merged.cells[known], obs.cells[known])


def test_f1_perfect_oracle_prediction(small_map):
    obs = ObservationGrid.all_unknown(small_map.width, small_map.height)
    p = predict(NoisyOraclePredictor(0.0), obs, ground_truth=small_map)
    predicted = threshold(p, D1_THRESHOLDS)
    result = f1_score(predicted, small_map)
    assert result.score == 1.0
    assert not result.no_decisions


def test_f1_hand_computed():
    # 10 decided cells: 4 true walls, 1 false wall, 1 missed wall, 4 true free.
    cells = np.full((14, 1), X, dtype=np.uint8)
    cells[1:13, 0] = [O, O, O, O, F, O, F, F, F, F, F, F]
    gt = GroundTruthMap(cells)
    pred = np.full((14, 1), U, dtype=np.uint8)
    pred[1:11, 0] = [O, O, O, O, O, F, F, F, F, F]
    result = f1_score(ObservationGrid(pred), gt)
    assert result.score == pytest.approx(0.8)
    assert not result.no_decisions


def test_f1_vacuous_cases():
    gt = GroundTruthMap(np.array([[F, F], [F, F]], dtype=np.uint8))
    undecided = ObservationGrid.all_unknown(2, 2)
    result = f1_score(undecided, gt)
    assert result.score == 1.0 and result.no_decisions
    all_free = ObservationGrid(np.full((2, 2), F, dtype=np.uint8))
    result = f1_score(all_free, gt)
    assert result.score == 1.0 and not result.no_decisions


def test_predictor_labels_roundtrip():
    kinds = [
        NullPredictor(),
        NoisyOraclePredictor(0.0),
        NoisyOraclePredictor(0.03),
        HeuristicWallExtendPredictor(),
        RemotePredictor("127.0.0.1:9000"),
    ]
    for kind in kinds:
        assert parse_predictor(predictor_label(kind)) == kind
    assert parse_predictor("null") == NullPredictor()
    with pytest.raises(ValueError):
        parse_predictor("quantum")
