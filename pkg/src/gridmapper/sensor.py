"""360-degree peripheral raycast range sensing.

Beams start at the agent cell's center, angle 0 points North and angles grow
clockwise. Each beam traverses the grid by exact cell-boundary stepping
(Amanatides-Woo), so no crossed cell is ever skipped. Range is measured
center-to-center and is inclusive: a cell is in range when the Euclidean
distance between its center and the agent cell's center is at most
``max_range``.

Corner rule: when a beam crosses a cell boundary exactly at a lattice corner
the traversal steps diagonally, entering the diagonally adjacent cell without
visiting either side cell. This keeps the traversal consistent with a
fine-step ray march, which never lands inside the measure-zero side slivers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import CellClass, GroundTruthMap, ObservationGrid, Pose

# Entry distances beyond max_range + half a cell diagonal cannot lead to an
# in-range cell center, so traversal stops there.
_TRAVERSAL_SLACK = math.sqrt(2.0) / 2.0 + 1e-4
# Boundary crossings closer than this along the ray count as one corner hit.
_CORNER_EPS = 1e-9


class ConsistencyError(RuntimeError):
    """An observation contradicted an already-known cell; sensing is
    noise-free, so this indicates a bug upstream."""


@dataclass(frozen=True)
class SensorConfig:
    beam_count: int = 16
    angular_interval: float = 22.5
    max_range: float = 20.0

    def __post_init__(self) -> None:
        if self.beam_count < 1:
            raise ValueError("beam_count must be positive")
        if not math.isclose(self.beam_count * self.angular_interval, 360.0):
            raise ValueError(
                f"beam_count * angular_interval must be 360, got "
                f"{self.beam_count} * {self.angular_interval}"
            )
        if self.max_range < 0:
            raise ValueError("max_range must be non-negative")


def _trace_beam_offsets(cfg: SensorConfig, beam: int) -> tuple[np.ndarray, np.ndarray]:
    """Cell offsets crossed by one beam from any cell center, in traversal
    order, paired with an in-range flag per offset (center-to-center)."""
    theta = math.radians(beam * cfg.angular_interval)
    dx = math.sin(theta)
    dy = -math.cos(theta)
    step_x = 1 if dx > 0 else (-1 if dx < 0 else 0)
    step_y = 1 if dy > 0 else (-1 if dy < 0 else 0)
    t_delta_x = math.inf if step_x == 0 else abs(1.0 / dx)
    t_delta_y = math.inf if step_y == 0 else abs(1.0 / dy)
    t_max_x = math.inf if step_x == 0 else 0.5 * t_delta_x
    t_max_y = math.inf if step_y == 0 else 0.5 * t_delta_y
    limit = cfg.max_range + _TRAVERSAL_SLACK
    x = y = 0
    offsets: list[tuple[int, int]] = []
    in_range: list[bool] = []
    while True:
        if (
            math.isfinite(t_max_x)
            and math.isfinite(t_max_y)
            and abs(t_max_x - t_max_y) <= _CORNER_EPS
        ):
            t = t_max_x
            x += step_x
            y += step_y
            t_max_x += t_delta_x
            t_max_y += t_delta_y
        elif t_max_x < t_max_y:
            t = t_max_x
            x += step_x
            t_max_x += t_delta_x
        else:
            t = t_max_y
            y += step_y
            t_max_y += t_delta_y
        if t > limit:
            break
        offsets.append((x, y))
        in_range.append(math.hypot(x, y) <= cfg.max_range)
    arr = np.array(offsets, dtype=np.int32).reshape(-1, 2)
    return arr, np.array(in_range, dtype=bool)


_template_cache: dict[tuple[int, float, float], list[tuple[np.ndarray, np.ndarray]]] = {}


def beam_templates(cfg: SensorConfig) -> list[tuple[np.ndarray, np.ndarray]]:
    """Per-beam (offsets, in-range) templates; beam geometry from a cell
    center is translation invariant, so they are computed once per config."""
    key = (cfg.beam_count, cfg.angular_interval, cfg.max_range)
    cached = _template_cache.get(key)
    if cached is None:
        cached = [_trace_beam_offsets(cfg, k) for k in range(cfg.beam_count)]
        _template_cache[key] = cached
    return cached


def cast_visible_cells(
    blocked: np.ndarray, origin: Pose, cfg: SensorConfig
) -> dict[tuple[int, int], bool]:
    """Cells visible from ``origin`` given a boolean blocking mask.

    Returns a mapping of cell coordinates to a hit flag: True for the
    blocking cell that terminated a beam, False for traversed open cells.
    The origin cell is always present with False.
    """
    h, w = blocked.shape
    if blocked[origin.y, origin.x]:
        raise ValueError(f"origin cell {origin} is blocked")
    visible: dict[tuple[int, int], bool] = {(origin.x, origin.y): False}
    for offsets, in_range in beam_templates(cfg):
        xs = origin.x + offsets[:, 0]
        ys = origin.y + offsets[:, 1]
        inside = (xs >= 0) & (xs < w) & (ys >= 0) & (ys < h)
        n = len(xs) if inside.all() else int(np.argmin(inside))
        if n == 0:
            continue
        hits = blocked[ys[:n], xs[:n]]
        stop = int(np.argmax(hits)) if hits.any() else n
        for i in range(stop):
            if in_range[i]:
                visible.setdefault((int(xs[i]), int(ys[i])), False)
        if stop < n and in_range[stop]:
            visible[(int(xs[stop]), int(ys[stop]))] = True
    return visible


_padded_cache: dict[tuple[int, float, float], tuple[np.ndarray, ...]] = {}


def _padded_templates(cfg: SensorConfig) -> tuple[np.ndarray, ...]:
    """Beam templates stacked into padded (beams, L) arrays for vectorized
    casting; padding entries are marked invalid."""
    key = (cfg.beam_count, cfg.angular_interval, cfg.max_range)
    cached = _padded_cache.get(key)
    if cached is None:
        beams = beam_templates(cfg)
        length = max((len(offs) for offs, _ in beams), default=0)
        b = len(beams)
        off_x = np.zeros((b, length), dtype=np.int64)
        off_y = np.zeros((b, length), dtype=np.int64)
        in_range = np.zeros((b, length), dtype=bool)
        valid = np.zeros((b, length), dtype=bool)
        for i, (offs, inr) in enumerate(beams):
            n = len(offs)
            off_x[i, :n] = offs[:, 0]
            off_y[i, :n] = offs[:, 1]
            in_range[i, :n] = inr
            valid[i, :n] = True
        cached = (off_x, off_y, in_range, valid)
        _padded_cache[key] = cached
    return cached


def count_visible_matching(
    blocked: np.ndarray, target: np.ndarray, origin: Pose, cfg: SensorConfig
) -> int:
    """Number of distinct target-mask cells visible from ``origin``; the
    vectorized counting core behind utility estimation."""
    h, w = blocked.shape
    if blocked[origin.y, origin.x]:
        raise ValueError(f"origin cell {origin} is blocked")
    off_x, off_y, in_range, valid = _padded_templates(cfg)
    if off_x.size == 0:
        return int(target[origin.y, origin.x])
    xs = origin.x + off_x
    ys = origin.y + off_y
    inside = valid & (xs >= 0) & (xs < w) & (ys >= 0) & (ys < h)
    alive = np.logical_and.accumulate(inside, axis=1)
    flat = np.clip(ys, 0, h - 1) * w + np.clip(xs, 0, w - 1)
    hits = blocked.ravel()[flat] & alive
    length = off_x.shape[1]
    first_hit = np.where(hits.any(axis=1), hits.argmax(axis=1), length)
    visible = alive & (np.arange(length) <= first_hit[:, None]) & in_range
    cells = np.unique(np.append(flat[visible], origin.y * w + origin.x))
    return int(target.ravel()[cells].sum())


def sense(
    gt: GroundTruthMap, pose: Pose, cfg: SensorConfig
) -> dict[tuple[int, int], CellClass]:
    """Observations gathered at ``pose``: cell coordinates mapped to class.

    Obstacle and exterior cells both block beams and are reported OBSTACLE;
    traversed in-range free cells are reported FREE, the pose's own cell
    always included. Sensing is noise-free: reported classes always equal the
    ground truth (with exterior folded into obstacle).
    """
    if not gt.in_bounds(pose.x, pose.y) or gt.cells[pose.y, pose.x] != CellClass.FREE:
        raise ValueError(f"pose {pose} is not on a free ground-truth cell")
    blocked = gt.cells != CellClass.FREE
    visible = cast_visible_cells(blocked, pose, cfg)
    return {
        cell: (CellClass.OBSTACLE if hit else CellClass.FREE)
        for cell, hit in visible.items()
    }


def accumulate(
    obs: ObservationGrid, observations: dict[tuple[int, int], CellClass]
) -> int:
    """Merge sensor observations into ``obs`` in place.

    Writes are idempotent and the merge is order-independent: cells move from
    UNKNOWN to an observed class exactly once and never change afterwards.
    Returns the number of newly exposed cells. A reading that contradicts an
    already-known cell raises ConsistencyError.
    """
    if not observations:
        return 0
    coords = np.array(list(observations.keys()), dtype=np.int64)
    values = np.fromiter(observations.values(), dtype=np.uint8, count=len(observations))
    values[values == CellClass.EXTERIOR] = CellClass.OBSTACLE
    xs, ys = coords[:, 0], coords[:, 1]
    bad = (xs < 0) | (xs >= obs.width) | (ys < 0) | (ys >= obs.height)
    if bad.any():
        i = int(np.argmax(bad))
        raise ValueError(f"observation at ({xs[i]}, {ys[i]}) is out of bounds")
    current = obs.cells[ys, xs]
    conflict = (current != CellClass.UNKNOWN) & (current != values)
    if conflict.any():
        i = int(np.argmax(conflict))
        raise ConsistencyError(
            f"cell ({xs[i]}, {ys[i]}) already known as "
            f"{CellClass(current[i]).name}, got {CellClass(values[i]).name}"
        )
    fresh = current == CellClass.UNKNOWN
    obs.cells[ys[fresh], xs[fresh]] = values[fresh]
    return int(fresh.sum())
