"""Deterministic 2D occupancy-grid indoor exploration engine."""

__version__ = "0.1.0"

from .grid import (
    Action,
    CellClass,
    CellEncoding,
    GroundTruthMap,
    ObservationGrid,
    Pose,
    coverage_ratio,
    displacement,
)
from .environment import Episode, EpisodeConfig, EpisodeState, RewardConfig
from .floorplan import GeneratorConfig, generate_floorplan, import_raster
from .frontier import FrontierConfig, FrontierPlanner
from .predictor import (
    HeuristicWallExtendPredictor,
    NoisyOraclePredictor,
    NullPredictor,
    RemotePredictor,
    ThresholdConfig,
)
from .sensor import SensorConfig, accumulate, sense

__all__ = [
    "Action",
    "CellClass",
    "CellEncoding",
    "Episode",
    "EpisodeConfig",
    "EpisodeState",
    "FrontierConfig",
    "FrontierPlanner",
    "GeneratorConfig",
    "GroundTruthMap",
    "HeuristicWallExtendPredictor",
    "NoisyOraclePredictor",
    "NullPredictor",
    "ObservationGrid",
    "Pose",
    "RemotePredictor",
    "RewardConfig",
    "SensorConfig",
    "ThresholdConfig",
    "accumulate",
    "coverage_ratio",
    "displacement",
    "generate_floorplan",
    "import_raster",
    "sense",
]
