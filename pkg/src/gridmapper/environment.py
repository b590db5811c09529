"""The mapping MDP: episode dynamics, reward, termination and rendering.

An episode owns one mutable state. The agent moves on the ground truth, the
observation grid accumulates noise-free sensor readings, and an optional
predictor expands the map between steps. Coverage (exposure) is measured on
the coverage-bearing map: the raw observation grid without a predictor, the
synthesized map with one. Exposure bookkeeping is monotone: once a cell has
counted as exposed it stays exposed even if a later prediction retracts it,
so per-step gains are never negative and episodes cannot regress.

Reward per step, with exposure E measured after the step and n the number of
newly exposed interior cells:

    collision:  step_penalty - collision_penalty   (the move is not executed)
    otherwise:  step_penalty + exposure_coefficient * n * E**exposure_exponent
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .grid import (
    Action,
    CellClass,
    CellEncoding,
    GroundTruthMap,
    ObservationGrid,
    Pose,
    displacement,
)
from .predictor import (
    NullPredictor,
    PredictorError,
    PredictorKind,
    RemotePredictor,
    RemotePredictorClient,
    ThresholdConfig,
    predict,
    synthesize,
    threshold,
)
from .sensor import SensorConfig, accumulate, sense

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RewardConfig:
    """Reward shaping constants. The per-step penalty is fixed at -1; the
    collision penalty must exceed 1 so collisions always dominate it."""

    step_penalty: float = -1.0
    collision_penalty: float = 5.0
    exposure_coefficient: float = 1.0
    exposure_exponent: int = 4

    def __post_init__(self) -> None:
        if self.step_penalty != -1.0:
            raise ValueError("step_penalty is fixed at -1")
        if not self.collision_penalty > 1.0:
            raise ValueError("collision_penalty must be greater than 1")
        if not self.exposure_coefficient > 0.0:
            raise ValueError("exposure_coefficient must be positive")
        if self.exposure_exponent < 1:
            raise ValueError("exposure_exponent must be a positive integer")


@dataclass(frozen=True)
class EpisodeConfig:
    coverage_target: float = 0.98
    max_steps: int = 400
    agent_centered_rendering: bool = True
    predictor: PredictorKind = field(default_factory=NullPredictor)
    thresholds: ThresholdConfig = field(default_factory=ThresholdConfig)
    sensor: SensorConfig = field(default_factory=SensorConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    seed: int = 0

    def __post_init__(self) -> None:
        if not (0.0 <= self.coverage_target <= 1.0):
            raise ValueError("coverage_target must be in [0, 1]")
        if self.max_steps < 0:
            raise ValueError("max_steps must be non-negative")


@dataclass
class EpisodeState:
    pose: Pose
    obs: ObservationGrid
    synthesized: ObservationGrid
    step_count: int
    exposure: float
    done: bool
    success: bool


@dataclass(frozen=True)
class StepResult:
    state: EpisodeState
    image: np.ndarray
    reward: float
    done: bool
    collided: bool
    newly_exposed: int


class Episode:
    """One exploration episode on one map; not safe to share across threads."""

    def __init__(self, gt: GroundTruthMap, cfg: EpisodeConfig):
        self.gt = gt
        self.cfg = cfg
        self.encoding = CellEncoding()
        self.state: EpisodeState | None = None
        self._rng = np.random.default_rng(cfg.seed)
        self._exposed = np.zeros(gt.cells.shape, dtype=bool)
        self._client: RemotePredictorClient | None = None
        self._predictor_active = not isinstance(cfg.predictor, NullPredictor)

    # -- predictor plumbing ------------------------------------------------

    def _predict_map(self, obs: ObservationGrid) -> ObservationGrid:
        kind = self.cfg.predictor
        if isinstance(kind, RemotePredictor) and self._client is None:
            self._client = RemotePredictorClient(kind.endpoint)
        try:
            p = predict(kind, obs, ground_truth=self.gt, client=self._client)
        except PredictorError as exc:
            log.warning("predictor failed (%s); falling back to null prediction", exc)
            p = predict(NullPredictor(), obs)
        return threshold(p, self.cfg.thresholds)

    def _refresh_synthesized(self) -> None:
        state = self.state
        assert state is not None
        if self._predictor_active:
            state.synthesized = synthesize(state.obs, self._predict_map(state.obs))

    def _coverage_map(self) -> ObservationGrid:
        assert self.state is not None
        return self.state.synthesized

    def _update_exposure(self) -> int:
        """Fold the coverage-bearing map into the monotone exposed mask and
        return the number of newly exposed interior cells."""
        state = self.state
        assert state is not None
        known = self._coverage_map().known_mask & self.gt.interior_mask
        new = known & ~self._exposed
        count = int(new.sum())
        if count:
            self._exposed |= new
        state.exposure = float(self._exposed.sum() / self.gt.interior_area)
        return count

    # -- episode lifecycle -------------------------------------------------

    def reset(self, start: Pose | None = None) -> tuple[EpisodeState, np.ndarray]:
        """Start a fresh episode; ``start`` defaults to a uniformly random
        free cell drawn from the episode RNG."""
        if start is None:
            free = self.gt.free_cells()
            start = free[int(self._rng.integers(len(free)))]
        elif not self.gt.is_free(start.x, start.y):
            raise ValueError(f"start {start} is not on a free cell")
        obs = ObservationGrid.all_unknown(self.gt.width, self.gt.height)
        # The contour is known a priori: exterior cells start out as walls.
        obs.cells[self.gt.cells == CellClass.EXTERIOR] = CellClass.OBSTACLE
        self._exposed[:] = False
        self.state = EpisodeState(
            pose=start,
            obs=obs,
            synthesized=obs,
            step_count=0,
            exposure=0.0,
            done=False,
            success=False,
        )
        accumulate(obs, sense(self.gt, start, self.cfg.sensor))
        self._refresh_synthesized()
        self._update_exposure()
        state = self.state
        if state.exposure >= self.cfg.coverage_target or self.cfg.max_steps == 0:
            state.done = True
            state.success = state.exposure >= self.cfg.coverage_target
        return state, self.render()

    def step(self, action: Action) -> StepResult:
        state = self.state
        if state is None:
            raise RuntimeError("step before reset")
        if state.done:
            raise RuntimeError("step after episode is done")
        reward_cfg = self.cfg.reward
        dx, dy = displacement(Action(action))
        tx, ty = state.pose.x + dx, state.pose.y + dy
        collided = (
            not self.gt.in_bounds(tx, ty)
            or self.gt.cells[ty, tx] != CellClass.FREE
        )
        state.step_count += 1
        if collided:
            # Collisions are not executed: pose and map stay put.
            newly = 0
            reward = reward_cfg.step_penalty - reward_cfg.collision_penalty
        else:
            state.pose = Pose(tx, ty)
            fresh = accumulate(state.obs, sense(self.gt, state.pose, self.cfg.sensor))
            if fresh:
                self._refresh_synthesized()
            newly = self._update_exposure()
            reward = reward_cfg.step_penalty + (
                reward_cfg.exposure_coefficient
                * newly
                * state.exposure**reward_cfg.exposure_exponent
            )
        if state.exposure >= self.cfg.coverage_target:
            state.done = True
            state.success = True
        elif state.step_count >= self.cfg.max_steps:
            state.done = True
            state.success = False
        return StepResult(
            state=state,
            image=self.render(),
            reward=reward,
            done=state.done,
            collided=collided,
            newly_exposed=newly,
        )

    def render(self) -> np.ndarray:
        """Grayscale raster of the coverage-bearing map with the agent cell
        painted on top; agent-centered rendering translates the map so the
        agent sits at the raster center, padding off-map area as walls."""
        state = self.state
        if state is None:
            raise RuntimeError("render before reset")
        enc = self.encoding
        cells = self._coverage_map().cells
        lut = np.zeros(256, dtype=np.uint8)
        lut[CellClass.FREE] = enc.free
        lut[CellClass.OBSTACLE] = enc.obstacle
        lut[CellClass.UNKNOWN] = enc.unknown
        painted = lut[cells]
        h, w = painted.shape
        if not self.cfg.agent_centered_rendering:
            image = painted.copy()
            image[state.pose.y, state.pose.x] = enc.agent
            return image
        image = np.full((h, w), enc.obstacle, dtype=np.uint8)
        cx, cy = w // 2, h // 2
        ox, oy = cx - state.pose.x, cy - state.pose.y
        src_y = slice(max(0, -oy), min(h, h - oy))
        src_x = slice(max(0, -ox), min(w, w - ox))
        dst_y = slice(max(0, oy), min(h, h + oy))
        dst_x = slice(max(0, ox), min(w, w + ox))
        image[dst_y, dst_x] = painted[src_y, src_x]
        image[cy, cx] = enc.agent
        return image

    def close(self) -> None:
        if self._client is not None:
            self._client.close()
            self._client = None

    def __enter__(self) -> "Episode":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()
