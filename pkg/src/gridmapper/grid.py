"""Core grid types and geometry shared by every other module.

Coordinate convention, used everywhere in this package: ``x`` is the column
index, ``y`` is the row index, the origin is the top-left cell and ``y``
grows downward, matching raster image layout. Numpy arrays are indexed
``[y, x]``.

A ground-truth map separates the building interior (free space and walls)
from everything outside the contour, which is marked ``EXTERIOR``. Exterior
cells are impassable, terminate sensor beams like walls do, and are excluded
from coverage accounting.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import NamedTuple

import numpy as np


class CellClass(IntEnum):
    """Cell classification. The FREE/OBSTACLE/UNKNOWN byte values double as
    the wire-protocol encoding, so keep them stable."""

    FREE = 0
    OBSTACLE = 1
    UNKNOWN = 2
    EXTERIOR = 3


class Action(IntEnum):
    """The eight compass moves, indexed clockwise from North."""

    N = 0
    NE = 1
    E = 2
    SE = 3
    S = 4
    SW = 5
    W = 6
    NW = 7


# (dx, dy) per action; N is (0, -1) because y grows downward.
_DISPLACEMENTS: tuple[tuple[int, int], ...] = (
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
)


def displacement(action: Action) -> tuple[int, int]:
    """Unit (dx, dy) offset of a compass move."""
    return _DISPLACEMENTS[action]


class Pose(NamedTuple):
    """Agent position in cell coordinates."""

    x: int
    y: int


@dataclass(frozen=True)
class CellEncoding:
    """Gray levels used to rasterize state images.

    Construction enforces free < unknown < obstacle < agent so that the agent
    pixel always dominates and the three map classes stay distinguishable.
    """

    free: int = 0
    unknown: int = 15
    obstacle: int = 30
    agent: int = 255

    def __post_init__(self) -> None:
        values = (self.free, self.unknown, self.obstacle, self.agent)
        if not all(isinstance(v, int) and 0 <= v <= 255 for v in values):
            raise ValueError(f"gray levels must be integers in 0..255, got {values}")
        if not (self.free < self.unknown < self.obstacle < self.agent):
            raise ValueError(
                f"gray levels must satisfy free < unknown < obstacle < agent, got {values}"
            )


class GroundTruthMap:
    """Immutable rasterized floorplan.

    ``cells`` holds FREE/OBSTACLE/EXTERIOR values. Interior cells are the
    FREE and OBSTACLE ones; ``interior_area`` is their count and is the
    denominator of every coverage ratio. ``warnings`` carries import-time
    flags such as reclassified unreachable regions.
    """

    def __init__(self, cells: np.ndarray, warnings: tuple[str, ...] = ()):
        cells = np.ascontiguousarray(cells, dtype=np.uint8)
        if cells.ndim != 2 or cells.size == 0:
            raise ValueError("map cells must be a non-empty 2D array")
        valid = (CellClass.FREE, CellClass.OBSTACLE, CellClass.EXTERIOR)
        if not np.isin(cells, valid).all():
            raise ValueError("ground-truth cells must be FREE, OBSTACLE or EXTERIOR")
        if not (cells == CellClass.FREE).any():
            raise ValueError("map has no free cells")
        cells.setflags(write=False)
        self.cells = cells
        self.warnings = tuple(warnings)
        self._interior_mask = (cells == CellClass.FREE) | (cells == CellClass.OBSTACLE)
        self._interior_mask.setflags(write=False)

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    @property
    def interior_mask(self) -> np.ndarray:
        return self._interior_mask

    @property
    def interior_area(self) -> int:
        return int(self._interior_mask.sum())

    @property
    def free_area(self) -> int:
        return int((self.cells == CellClass.FREE).sum())

    @property
    def wall_fraction(self) -> float:
        """Fraction of interior cells that are walls."""
        return int((self.cells == CellClass.OBSTACLE).sum()) / self.interior_area

    def in_bounds(self, x: int, y: int) -> bool:
        return 0 <= x < self.width and 0 <= y < self.height

    def class_at(self, x: int, y: int) -> CellClass:
        return CellClass(self.cells[y, x])

    def is_free(self, x: int, y: int) -> bool:
        return self.in_bounds(x, y) and self.cells[y, x] == CellClass.FREE

    def free_cells(self) -> list[Pose]:
        """All free cells in row-major order."""
        ys, xs = np.nonzero(self.cells == CellClass.FREE)
        return [Pose(int(x), int(y)) for x, y in zip(xs, ys)]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GroundTruthMap):
            return NotImplemented
        return np.array_equal(self.cells, other.cells)

    def __repr__(self) -> str:
        return f"GroundTruthMap({self.width}x{self.height}, interior={self.interior_area})"


class ObservationGrid:
    """Per-episode accumulated knowledge: FREE/OBSTACLE/UNKNOWN per cell.

    Cells only ever transition away from UNKNOWN (see ``sensor.accumulate``);
    the same three-valued grid type is also used for thresholded predictions
    and synthesized maps, where that monotonicity does not apply.
    """

    def __init__(self, cells: np.ndarray):
        cells = np.ascontiguousarray(cells, dtype=np.uint8)
        if cells.ndim != 2 or cells.size == 0:
            raise ValueError("observation cells must be a non-empty 2D array")
        valid = (CellClass.FREE, CellClass.OBSTACLE, CellClass.UNKNOWN)
        if not np.isin(cells, valid).all():
            raise ValueError("observation cells must be FREE, OBSTACLE or UNKNOWN")
        self.cells = cells

    @classmethod
    def all_unknown(cls, width: int, height: int) -> "ObservationGrid":
        return cls(np.full((height, width), CellClass.UNKNOWN, dtype=np.uint8))

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    @property
    def known_mask(self) -> np.ndarray:
        return self.cells != CellClass.UNKNOWN

    def copy(self) -> "ObservationGrid":
        return ObservationGrid(self.cells.copy())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ObservationGrid):
            return NotImplemented
        return np.array_equal(self.cells, other.cells)

    def __repr__(self) -> str:
        return f"ObservationGrid({self.width}x{self.height}, known={int(self.known_mask.sum())})"


def observed_class(gt_class: int) -> CellClass:
    """Ground-truth class as it appears in an observation grid.

    Exterior cells are sensed and stored as obstacles; the three-valued
    observation space has no exterior notion.
    """
    if gt_class == CellClass.EXTERIOR:
        return CellClass.OBSTACLE
    return CellClass(gt_class)


def coverage_ratio(obs: ObservationGrid, gt: GroundTruthMap) -> float:
    """Fraction of the building interior exposed in ``obs``.

    Only interior (free or wall) ground-truth cells count; exterior cells are
    ignored no matter what the observation grid says about them.
    """
    if obs.cells.shape != gt.cells.shape:
        raise ValueError(
            f"dimension mismatch: observation {obs.cells.shape} vs map {gt.cells.shape}"
        )
    exposed = int((obs.known_mask & gt.interior_mask).sum())
    return exposed / gt.interior_area


def mask_shift(mask: np.ndarray, dx: int, dy: int) -> np.ndarray:
    """Boolean mask translated by (dx, dy): out[y, x] = mask[y - dy, x - dx]."""
    h, w = mask.shape
    out = np.zeros_like(mask)
    src_y = slice(max(0, -dy), h - max(0, dy))
    src_x = slice(max(0, -dx), w - max(0, dx))
    dst_y = slice(max(0, dy), h - max(0, -dy))
    dst_x = slice(max(0, dx), w - max(0, -dx))
    out[dst_y, dst_x] = mask[src_y, src_x]
    return out


def traversal_graph(free: np.ndarray):
    """Sparse unit-cost move graph over free cells (flattened row-major
    indices), honoring the diagonal corner rule. Reusable across queries on
    the same map."""
    from scipy.sparse import csr_matrix

    h, w = free.shape
    n = h * w
    sources = []
    targets = []
    for dx, dy in _DISPLACEMENTS:
        legal = free & mask_shift(free, -dx, -dy)
        if dx != 0 and dy != 0:
            legal &= mask_shift(free, -dx, 0) & mask_shift(free, 0, -dy)
        src = np.flatnonzero(legal)
        sources.append(src)
        targets.append(src + dy * w + dx)
    src = np.concatenate(sources)
    dst = np.concatenate(targets)
    return csr_matrix((np.ones(len(src), dtype=np.int8), (src, dst)), shape=(n, n))


def traversal_distances(free: np.ndarray, start: Pose, graph=None) -> np.ndarray:
    """Step counts from ``start`` to every free cell reachable by agent moves.

    Moves are the eight compass actions at unit cost. A diagonal move is
    allowed only when both orthogonally adjacent companion cells are free, so
    an agent can never slip between two touching wall corners. Unreachable
    cells hold -1. Pass a prebuilt ``traversal_graph`` to amortize graph
    construction over repeated queries.
    """
    from scipy.sparse.csgraph import dijkstra

    if not free[start.y, start.x]:
        raise ValueError(f"start cell {start} is not traversable")
    h, w = free.shape
    if graph is None:
        graph = traversal_graph(free)
    dist = dijkstra(
        graph, indices=start.y * w + start.x, unweighted=True, directed=True
    )
    out = np.where(np.isfinite(dist), dist, -1).astype(np.int32)
    return out.reshape(h, w)
