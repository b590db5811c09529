"""Map prediction pipeline: probability sources, thresholding and synthesis.

A predictor maps a partial observation grid to a per-cell obstruction
probability in [0, 1]. Thresholding turns probabilities back into a
three-valued grid using two confidence levels, and synthesis overlays actual
observations on top of the thresholded prediction, so observed cells always
win. Built-in predictors are deterministic test doubles; a learned model is
reached through the newline-delimited JSON wire protocol as a remote
predictor.

Wire protocol (shared with external predictor servers), one JSON object per
line over TCP:

    request:  {"type": "predict", "width": W, "height": H,
               "cells": "<base64 of W*H bytes, row-major,
                          0=free, 1=obstacle, 2=unknown>"}
    response: {"type": "probabilities",
               "values": "<base64 of W*H little-endian float32, row-major>"}
            | {"type": "error", "message": "..."}
"""
from __future__ import annotations

import base64
import json
import socket
from dataclasses import dataclass
from typing import Union

import numpy as np

from .grid import CellClass, GroundTruthMap, ObservationGrid, mask_shift


class PredictorError(RuntimeError):
    """Remote predictor unreachable or produced a malformed reply."""


@dataclass(frozen=True)
class NullPredictor:
    """Predicts 0.5 everywhere; with any positive confidence levels the whole
    pipeline reduces to the no-predictor configuration."""


@dataclass(frozen=True)
class NoisyOraclePredictor:
    """Test-only predictor reading the ground truth: walls get probability
    1 - flip_rate, free cells get flip_rate. Deterministic; the flip rate
    interacts with the confidence cutoffs, it is not sampled."""

    flip_rate: float = 0.0

    def __post_init__(self) -> None:
        if not (0.0 <= self.flip_rate < 0.5):
            raise ValueError(f"flip_rate must be in [0, 0.5), got {self.flip_rate}")


@dataclass(frozen=True)
class HeuristicWallExtendPredictor:
    """Deterministic structural heuristic: straight observed wall runs of
    length >= 3 extend up to 5 cells with probabilities decaying from 0.9 in
    0.1 steps; unknowns next to observed free space get 0.1; everything else
    0.5. Exists to exercise thresholding with a nontrivial field."""


@dataclass(frozen=True)
class RemotePredictor:
    """Learned model behind the wire protocol; endpoint is ``host:port``."""

    endpoint: str


PredictorKind = Union[
    NullPredictor, NoisyOraclePredictor, HeuristicWallExtendPredictor, RemotePredictor
]


@dataclass(frozen=True)
class ThresholdConfig:
    """Confidence levels deciding when a predicted probability becomes a
    free or obstacle cell. Defaults fit generated rectangular corpora; use
    ``D2_THRESHOLDS`` for diverse imported corpora."""

    delta_free: float = 0.93
    delta_obstacle: float = 0.95

    def __post_init__(self) -> None:
        if not (0.0 <= self.delta_free <= 1.0 and 0.0 <= self.delta_obstacle <= 1.0):
            raise ValueError("confidence levels must be in [0, 1]")

    @property
    def free_cutoff(self) -> float:
        return (1.0 - self.delta_free) / 2.0

    @property
    def obstacle_cutoff(self) -> float:
        return (1.0 + self.delta_obstacle) / 2.0


D1_THRESHOLDS = ThresholdConfig(0.93, 0.95)
D2_THRESHOLDS = ThresholdConfig(0.90, 0.99)


class ProbabilityGrid:
    """Per-cell obstruction probability, each value finite and in [0, 1]."""

    def __init__(self, values: np.ndarray):
        values = np.ascontiguousarray(values, dtype=np.float64)
        if values.ndim != 2 or values.size == 0:
            raise ValueError("probability grid must be a non-empty 2D array")
        if not np.isfinite(values).all() or (values < 0).any() or (values > 1).any():
            raise ValueError("probabilities must be finite and in [0, 1]")
        self.values = values

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


def _heuristic_probabilities(obs: ObservationGrid) -> np.ndarray:
    cells = obs.cells
    h, w = cells.shape
    p = np.full((h, w), 0.5)
    unknown = cells == CellClass.UNKNOWN
    free = cells == CellClass.FREE
    near_free = np.zeros_like(unknown)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dx or dy:
                near_free |= mask_shift(free, dx, dy)
    p[unknown & near_free] = 0.1

    wall = cells == CellClass.OBSTACLE

    def extend(x: int, y: int, dx: int, dy: int) -> None:
        for i in range(1, 6):
            cx, cy = x + i * dx, y + i * dy
            if not (0 <= cx < w and 0 <= cy < h) or cells[cy, cx] != CellClass.UNKNOWN:
                break
            p[cy, cx] = max(p[cy, cx], 0.9 - 0.1 * (i - 1))

    for y in range(h):
        x = 0
        while x < w:
            if wall[y, x]:
                run = x
                while run < w and wall[y, run]:
                    run += 1
                if run - x >= 3:
                    extend(x, y, -1, 0)
                    extend(run - 1, y, 1, 0)
                x = run
            else:
                x += 1
    for x in range(w):
        y = 0
        while y < h:
            if wall[y, x]:
                run = y
                while run < h and wall[run, x]:
                    run += 1
                if run - y >= 3:
                    extend(x, y, 0, -1)
                    extend(x, run - 1, 0, 1)
                y = run
            else:
                y += 1
    return p


def predict(
    kind: PredictorKind,
    obs: ObservationGrid,
    *,
    ground_truth: GroundTruthMap | None = None,
    client: "RemotePredictorClient | None" = None,
) -> ProbabilityGrid:
    """Obstruction probabilities for ``obs`` from the given predictor.

    The noisy oracle needs ``ground_truth``; the remote predictor needs a
    connected ``client``. Remote failures raise PredictorError, which callers
    are expected to log and survive by falling back to the null predictor.
    """
    if isinstance(kind, NullPredictor):
        return ProbabilityGrid(np.full((obs.height, obs.width), 0.5))
    if isinstance(kind, NoisyOraclePredictor):
        if ground_truth is None:
            raise ValueError("noisy oracle predictor requires the ground-truth map")
        if ground_truth.cells.shape != obs.cells.shape:
            raise ValueError("observation and ground-truth dimensions differ")
        wallish = ground_truth.cells != CellClass.FREE
        return ProbabilityGrid(np.where(wallish, 1.0 - kind.flip_rate, kind.flip_rate))
    if isinstance(kind, HeuristicWallExtendPredictor):
        return ProbabilityGrid(_heuristic_probabilities(obs))
    if isinstance(kind, RemotePredictor):
        if client is None:
            raise ValueError("remote predictor requires a client")
        return client.predict(obs)
    raise TypeError(f"unknown predictor kind {kind!r}")


def threshold(p: ProbabilityGrid, cfg: ThresholdConfig) -> ObservationGrid:
    """Map probabilities to FREE/OBSTACLE/UNKNOWN by the confidence cutoffs.

    FREE wins where both cutoffs overlap (possible only with zero confidence
    levels), mirroring the decision order of the thresholding definition.
    """
    out = np.full(p.values.shape, CellClass.UNKNOWN, dtype=np.uint8)
    out[p.values >= cfg.obstacle_cutoff] = CellClass.OBSTACLE
    out[p.values <= cfg.free_cutoff] = CellClass.FREE
    return ObservationGrid(out)


def synthesize(obs: ObservationGrid, predicted: ObservationGrid) -> ObservationGrid:
    """Overlay observations on a predicted map; observed cells take
    precedence, predicted classes fill the rest."""
    if obs.cells.shape != predicted.cells.shape:
        raise ValueError(
            f"dimension mismatch: observation {obs.cells.shape} vs "
            f"prediction {predicted.cells.shape}"
        )
    merged = np.where(obs.known_mask, obs.cells, predicted.cells)
    return ObservationGrid(merged)


@dataclass(frozen=True)
class F1Score:
    score: float
    no_decisions: bool


def f1_score(predicted: ObservationGrid, gt: GroundTruthMap) -> F1Score:
    """F1 of a three-valued prediction against the ground truth.

    Walls are the positive class and only decided (non-UNKNOWN) prediction
    cells are scored; exterior ground truth counts as wall. When neither the
    prediction nor the truth restricted to decided cells contains a positive,
    the score is vacuously 1.0; ``no_decisions`` flags a fully undecided
    prediction.
    """
    if predicted.cells.shape != gt.cells.shape:
        raise ValueError(
            f"dimension mismatch: prediction {predicted.cells.shape} vs "
            f"map {gt.cells.shape}"
        )
    truth_wall = gt.cells != CellClass.FREE
    pred_wall = predicted.cells == CellClass.OBSTACLE
    pred_free = predicted.cells == CellClass.FREE
    tp = int((pred_wall & truth_wall).sum())
    fp = int((pred_wall & ~truth_wall).sum())
    fn = int((pred_free & truth_wall).sum())
    no_decisions = not (pred_wall.any() or pred_free.any())
    denominator = 2 * tp + fp + fn
    if denominator == 0:
        return F1Score(1.0, no_decisions)
    return F1Score(2 * tp / denominator, no_decisions)


def predictor_label(kind: PredictorKind) -> str:
    """Stable short name for records and protocol requests."""
    if isinstance(kind, NullPredictor):
        return "none"
    if isinstance(kind, NoisyOraclePredictor):
        return "oracle" if kind.flip_rate == 0.0 else f"oracle:{kind.flip_rate:g}"
    if isinstance(kind, HeuristicWallExtendPredictor):
        return "heuristic"
    if isinstance(kind, RemotePredictor):
        return f"remote:{kind.endpoint}"
    raise TypeError(f"unknown predictor kind {kind!r}")


def parse_predictor(label: str) -> PredictorKind:
    """Inverse of ``predictor_label``; accepts 'none'/'null' for the null
    predictor."""
    if label in ("none", "null"):
        return NullPredictor()
    if label == "oracle":
        return NoisyOraclePredictor(0.0)
    if label.startswith("oracle:"):
        return NoisyOraclePredictor(float(label.split(":", 1)[1]))
    if label == "heuristic":
        return HeuristicWallExtendPredictor()
    if label.startswith("remote:"):
        return RemotePredictor(label.split(":", 1)[1])
    raise ValueError(f"unknown predictor {label!r}")


class RemotePredictorClient:
    """Wire-protocol client holding one connection to a predictor server.

    Requests are strictly serialized: one outstanding request per client.
    Distinct episodes should hold distinct clients.
    """

    def __init__(self, endpoint: str, timeout: float = 30.0):
        host, sep, port = endpoint.rpartition(":")
        if not sep or not host:
            raise ValueError(f"endpoint must be 'host:port', got {endpoint!r}")
        self._address = (host, int(port))
        self._timeout = timeout
        self._file = None

    def _connect(self):
        if self._file is None:
            try:
                sock = socket.create_connection(self._address, timeout=self._timeout)
            except OSError as exc:
                raise PredictorError(f"cannot reach predictor at {self._address}: {exc}")
            self._file = sock.makefile("rwb")
            sock.close()  # the file object keeps its own reference
        return self._file

    def predict(self, obs: ObservationGrid) -> ProbabilityGrid:
        request = {
            "type": "predict",
            "width": obs.width,
            "height": obs.height,
            "cells": base64.b64encode(obs.cells.tobytes()).decode("ascii"),
        }
        try:
            f = self._connect()
            f.write(json.dumps(request, sort_keys=True).encode("utf-8") + b"\n")
            f.flush()
            line = f.readline()
        except OSError as exc:
            self.close()
            raise PredictorError(f"predictor connection failed: {exc}")
        if not line:
            self.close()
            raise PredictorError("predictor closed the connection")
        try:
            reply = json.loads(line)
        except json.JSONDecodeError as exc:
            raise PredictorError(f"malformed predictor reply: {exc}")
        if not isinstance(reply, dict) or reply.get("type") != "probabilities":
            message = reply.get("message", reply) if isinstance(reply, dict) else reply
            raise PredictorError(f"predictor error: {message}")
        try:
            raw = base64.b64decode(reply["values"], validate=True)
            values = np.frombuffer(raw, dtype="<f4")
        except (KeyError, ValueError, TypeError) as exc:
            raise PredictorError(f"malformed probability payload: {exc}")
        if values.size != obs.width * obs.height:
            raise PredictorError(
                f"expected {obs.width * obs.height} probabilities, got {values.size}"
            )
        values = values.reshape(obs.height, obs.width).astype(np.float64)
        try:
            return ProbabilityGrid(values)
        except ValueError as exc:
            raise PredictorError(f"invalid probabilities: {exc}")

    def close(self) -> None:
        if self._file is not None:
            try:
                self._file.close()
            except OSError:
                pass
            self._file = None

    def __enter__(self) -> "RemotePredictorClient":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()
