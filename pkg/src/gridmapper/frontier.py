"""Cost-utility frontier planning on three-valued maps.

A frontier is an observed-free cell with at least one unknown 8-neighbor.
Frontiers are clustered into 8-connected components, each component proposes
its cell closest to the agent by path cost, and the planner greedily picks
the candidate maximizing ``utility - distance_weight * path_cost`` (or simply
the nearest one). Utility is the number of unknown cells the sensor would
newly see from the candidate, treating unknown cells as transparent and known
walls as opaque.

Paths are 8-connected shortest paths at unit cost per move, diagonals
included, matching the per-step penalty of the environment. Unknown cells are
not traversable and diagonal moves may not cut corners: both orthogonal
companion cells must be free.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .grid import (
    Action,
    CellClass,
    ObservationGrid,
    Pose,
    displacement,
    mask_shift,
    traversal_distances,
    traversal_graph,
)
from .sensor import SensorConfig, count_visible_matching

# next_action sentinels: the map is finished, or frontiers exist but none is
# reachable (e.g. a prediction sealed the only passage).
COMPLETE = "complete"
STUCK = "stuck"


class UtilityMode(Enum):
    NEAREST_FRONTIER = "nearest"
    COST_UTILITY = "cost-utility"


class ReplanPolicy(Enum):
    EVERY_STEP = "every-step"
    ON_INVALIDATION = "on-invalidation"


@dataclass(frozen=True)
class FrontierConfig:
    distance_weight: float = 1.0
    utility: UtilityMode = UtilityMode.COST_UTILITY
    replan_policy: ReplanPolicy = ReplanPolicy.EVERY_STEP

    def __post_init__(self) -> None:
        if self.distance_weight < 0:
            raise ValueError("distance_weight must be non-negative")


@dataclass(frozen=True)
class FrontierTarget:
    cell: Pose
    utility: int
    path_cost: int


def detect_frontiers(grid: ObservationGrid) -> np.ndarray:
    """Boolean mask of frontier cells: free with an unknown 8-neighbor."""
    free = grid.cells == CellClass.FREE
    unknown = grid.cells == CellClass.UNKNOWN
    near_unknown = np.zeros_like(unknown)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dx or dy:
                near_unknown |= mask_shift(unknown, dx, dy)
    return free & near_unknown


def estimate_utility(grid: ObservationGrid, cell: Pose, sensor: SensorConfig) -> int:
    """Unknown cells the sensor would see from ``cell`` on the current map,
    with unknowns transparent and known walls opaque."""
    if grid.cells[cell.y, cell.x] != CellClass.FREE:
        raise ValueError(f"cell {cell} is not free on the map")
    blocked = grid.cells == CellClass.OBSTACLE
    unknown = grid.cells == CellClass.UNKNOWN
    return count_visible_matching(blocked, unknown, cell, sensor)


def _cluster_frontiers(mask: np.ndarray) -> list[np.ndarray]:
    """8-connected components of the frontier mask, each an (n, 2) array of
    (x, y) coordinates."""
    from scipy.ndimage import label

    labels, count = label(mask, structure=np.ones((3, 3), dtype=np.int8))
    ys, xs = np.nonzero(mask)
    ids = labels[ys, xs]
    order = np.argsort(ids, kind="stable")
    coords = np.column_stack([xs, ys])[order]
    bounds = np.searchsorted(ids[order], np.arange(1, count + 1))
    return np.split(coords, bounds[1:]) if count else []


def select_target(
    grid: ObservationGrid,
    pose: Pose,
    cfg: FrontierConfig,
    sensor: SensorConfig,
    _distances: np.ndarray | None = None,
    _utility_cache: dict[tuple[int, int], int] | None = None,
) -> FrontierTarget | None:
    """Pick the frontier cell to drive toward, or None when no frontier is
    reachable. One candidate per frontier component (its reachable cell with
    the lowest path cost); ties break toward lower (y, x)."""
    mask = detect_frontiers(grid)
    if not mask.any():
        return None
    dist = _distances
    if dist is None:
        dist = traversal_distances(grid.cells == CellClass.FREE, pose)
    candidates: list[FrontierTarget] = []
    for cluster in _cluster_frontiers(mask):
        xs, ys = cluster[:, 0], cluster[:, 1]
        costs = dist[ys, xs]
        reachable = costs >= 0
        if not reachable.any():
            continue
        keys = np.column_stack([costs, ys, xs])[reachable]
        best = keys[np.lexsort((keys[:, 2], keys[:, 1], keys[:, 0]))[0]]
        cell = Pose(int(best[2]), int(best[1]))
        if _utility_cache is not None and cell in _utility_cache:
            utility = _utility_cache[cell]
        else:
            utility = estimate_utility(grid, cell, sensor)
            if _utility_cache is not None:
                _utility_cache[cell] = utility
        candidates.append(
            FrontierTarget(cell=cell, utility=utility, path_cost=int(best[0]))
        )
    if not candidates:
        return None
    if cfg.utility is UtilityMode.NEAREST_FRONTIER:
        return min(candidates, key=lambda t: (t.path_cost, t.cell.y, t.cell.x))
    return max(
        candidates,
        key=lambda t: (
            t.utility - cfg.distance_weight * t.path_cost,
            -t.cell.y,
            -t.cell.x,
        ),
    )


def plan_path(grid: ObservationGrid, start: Pose, goal: Pose) -> list[Action] | None:
    """Shortest action sequence from ``start`` to ``goal`` over free cells,
    or None when unreachable. A* with the Chebyshev-distance heuristic, which
    is exact for unit-cost 8-connected moves on open ground."""
    free = grid.cells == CellClass.FREE
    if not free[start.y, start.x]:
        raise ValueError(f"start {start} is not free on the map")
    if not (0 <= goal.x < grid.width and 0 <= goal.y < grid.height):
        return None
    if not free[goal.y, goal.x]:
        return None
    if start == goal:
        return []

    def heuristic(x: int, y: int) -> int:
        return max(abs(x - goal.x), abs(y - goal.y))

    # Heap entries prefer deeper nodes among equal f-values (-g tie-break),
    # which drives the search straight across open ground.
    g_cost: dict[tuple[int, int], int] = {(start.x, start.y): 0}
    came: dict[tuple[int, int], tuple[tuple[int, int], Action]] = {}
    counter = 0
    heap: list[tuple[int, int, int, tuple[int, int]]] = [
        (heuristic(start.x, start.y), 0, counter, (start.x, start.y))
    ]
    closed: set[tuple[int, int]] = set()
    while heap:
        f, _, _, (x, y) = heapq.heappop(heap)
        if (x, y) in closed:
            continue
        closed.add((x, y))
        if (x, y) == (goal.x, goal.y):
            actions: list[Action] = []
            cell = (x, y)
            while cell != (start.x, start.y):
                cell, action = came[cell]
                actions.append(action)
            actions.reverse()
            return actions
        g = g_cost[(x, y)]
        for action in Action:
            dx, dy = displacement(action)
            nx, ny = x + dx, y + dy
            if not (0 <= nx < grid.width and 0 <= ny < grid.height):
                continue
            if not free[ny, nx]:
                continue
            if dx and dy and not (free[y, nx] and free[ny, x]):
                continue
            tentative = g + 1
            if tentative < g_cost.get((nx, ny), tentative + 1):
                g_cost[(nx, ny)] = tentative
                came[(nx, ny)] = ((x, y), action)
                counter += 1
                heapq.heappush(
                    heap,
                    (tentative + heuristic(nx, ny), -tentative, counter, (nx, ny)),
                )
    return None


def _descend_path(
    free: np.ndarray,
    dist: np.ndarray,
    start: Pose,
    goal: Pose,
    gain: np.ndarray | None = None,
) -> list[Action] | None:
    """Shortest action sequence recovered by walking the BFS distance field
    from the goal back to its source.

    All returned paths are cost-optimal; among equally short predecessors the
    one with the highest ``gain`` wins (then action-index order), which lets
    the planner route transit legs through unseen rows and columns for free.
    """
    if dist[goal.y, goal.x] < 0:
        return None
    h, w = free.shape
    actions: list[Action] = []
    x, y = goal.x, goal.y
    while (x, y) != (start.x, start.y):
        d = dist[y, x]
        best: tuple[float, int] | None = None
        for action in Action:
            dx, dy = displacement(action)
            ux, uy = x - dx, y - dy
            if not (0 <= ux < w and 0 <= uy < h):
                continue
            if dist[uy, ux] != d - 1 or not free[uy, ux]:
                continue
            if dx and dy and not (free[uy, x] and free[y, ux]):
                continue
            score = 0.0 if gain is None else -float(gain[uy, ux])
            if best is None or (score, int(action)) < (best[0], best[1]):
                best = (score, int(action))
        if best is None:
            return None
        action = Action(best[1])
        dx, dy = displacement(action)
        actions.append(action)
        x, y = x - dx, y - dy
    actions.reverse()
    return actions


def _transit_gain(grid: ObservationGrid, sensor: SensorConfig) -> np.ndarray:
    """Per-cell count of unknown cells in the same row or column within
    sensor range: a cheap proxy for what the axis-aligned beams would newly
    expose from that cell, used to steer path tie-breaking."""
    unknown = (grid.cells == CellClass.UNKNOWN).astype(np.int32)
    reach = int(sensor.max_range)
    h, w = unknown.shape
    row = np.cumsum(np.pad(unknown, ((0, 0), (1, 0))), axis=1)
    hi = np.minimum(np.arange(w) + reach + 1, w)
    lo = np.maximum(np.arange(w) - reach, 0)
    row_count = row[:, hi] - row[:, lo]
    col = np.cumsum(np.pad(unknown, ((1, 0), (0, 0))), axis=0)
    hi = np.minimum(np.arange(h) + reach + 1, h)
    lo = np.maximum(np.arange(h) - reach, 0)
    col_count = col[hi, :] - col[lo, :]
    return row_count + col_count


class FrontierPlanner:
    """Per-episode frontier planner emitting one action per call.

    With the default every-step policy the target and path are recomputed
    each call; on-invalidation keeps them until the target stops being a
    frontier or the path stops being walkable.
    """

    def __init__(
        self,
        cfg: FrontierConfig | None = None,
        sensor: SensorConfig | None = None,
    ):
        self.cfg = cfg or FrontierConfig()
        self.sensor = sensor or SensorConfig()
        self._target: FrontierTarget | None = None
        self._path: list[Action] = []
        # Utilities and the move graph depend only on map content; both
        # caches survive across calls until the map changes.
        self._utility_cache: dict[tuple[int, int], int] = {}
        self._graph = None
        self._map_version: int | None = None

    def _path_valid(self, grid: ObservationGrid, pose: Pose) -> bool:
        if self._target is None or not self._path:
            return False
        t = self._target.cell
        if not detect_frontiers(grid)[t.y, t.x]:
            return False
        dx, dy = displacement(self._path[0])
        nx, ny = pose.x + dx, pose.y + dy
        if not (0 <= nx < grid.width and 0 <= ny < grid.height):
            return False
        if grid.cells[ny, nx] != CellClass.FREE:
            return False
        if dx and dy:
            if grid.cells[pose.y, nx] != CellClass.FREE:
                return False
            if grid.cells[ny, pose.x] != CellClass.FREE:
                return False
        return True

    def next_action(self, grid: ObservationGrid, pose: Pose) -> Action | str:
        """Next move toward the chosen frontier, COMPLETE when no frontier
        remains, STUCK when frontiers exist but none is reachable."""
        version = hash(grid.cells.tobytes())
        if version != self._map_version:
            self._map_version = version
            self._utility_cache.clear()
            self._graph = None
        if not detect_frontiers(grid).any():
            self._target, self._path = None, []
            return COMPLETE
        replan = (
            self.cfg.replan_policy is ReplanPolicy.EVERY_STEP
            or not self._path_valid(grid, pose)
        )
        if replan:
            free = grid.cells == CellClass.FREE
            if self._graph is None:
                self._graph = traversal_graph(free)
            distances = traversal_distances(free, pose, graph=self._graph)
            target = select_target(
                grid,
                pose,
                self.cfg,
                self.sensor,
                _distances=distances,
                _utility_cache=self._utility_cache,
            )
            if target is None:
                self._target, self._path = None, []
                return STUCK
            path = _descend_path(
                free, distances, pose, target.cell, gain=_transit_gain(grid, self.sensor)
            )
            if not path:
                # Reachable by construction; an empty path would mean the
                # agent stands on a frontier, which sensing rules out.
                self._target, self._path = None, []
                return STUCK
            self._target, self._path = target, path
        return self._path.pop(0)
