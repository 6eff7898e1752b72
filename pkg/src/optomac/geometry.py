"""Hexagonal deployment grid and node poses.

The signal laser divides the treated area into hexagonal cells (axial
coordinates, pointy-top).  Cell coloring by (q - r) mod 3 three-colors the
grid so adjacent cells never share a transmit subcycle.  Position ids come
from a row-major scan of the grid extent, mirroring the order in which the
controller's laser spot visits cells.

Node poses are 3D: the lateral (x, y) position selects the cell, depth (z) is
free.  Each node has a surface normal separating its two detectors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .timebase import Subcycle

SQRT3 = math.sqrt(3.0)

Cell = tuple[int, int]


@dataclass(frozen=True)
class HexGrid:
    """Pointy-top axial grid.

    rows gives the scanned extent as (r, q_min, q_max) spans, one per row,
    r strictly increasing.  cell_radius is center-to-vertex in world units.
    """

    cell_radius: float
    rows: tuple[tuple[int, int, int], ...]

    def __post_init__(self) -> None:
        if self.cell_radius <= 0:
            raise ValueError("cell_radius must be positive")
        last_r = None
        for r, q0, q1 in self.rows:
            if q1 < q0:
                raise ValueError(f"row r={r} has empty q span")
            if last_r is not None and r <= last_r:
                raise ValueError("row r values must be strictly increasing")
            last_r = r

    @classmethod
    def rect(cls, cell_radius: float, q0: int, q1: int, r0: int, r1: int) -> "HexGrid":
        return cls(cell_radius, tuple((r, q0, q1) for r in range(r0, r1 + 1)))

    def scan_cells(self) -> list[Cell]:
        """Cells in row-major scan order (r ascending, then q ascending)."""
        return [(q, r) for r, q0, q1 in self.rows for q in range(q0, q1 + 1)]

    def contains(self, cell: Cell) -> bool:
        q, r = cell
        for row_r, q0, q1 in self.rows:
            if row_r == r:
                return q0 <= q <= q1
        return False

    def center(self, cell: Cell) -> tuple[float, float]:
        q, r = cell
        s = self.cell_radius
        return s * SQRT3 * (q + r / 2.0), s * 1.5 * r


def cell_of(point: tuple[float, ...], grid: HexGrid) -> Cell:
    """Nearest-center cell of a point's lateral (x, y) projection.

    Equidistant points break toward the lexicographically smaller (q, r).
    """
    x, y = point[0], point[1]
    s = grid.cell_radius
    rf = y / (1.5 * s)
    qf = x / (SQRT3 * s) - rf / 2.0
    q0, r0 = round(qf), round(rf)
    best: Cell | None = None
    best_d = math.inf
    for dq in (-1, 0, 1):
        for dr in (-1, 0, 1):
            cand = (q0 + dq, r0 + dr)
            cx, cy = grid.center(cand)
            d = math.hypot(x - cx, y - cy)
            if d < best_d - 1e-12 or (abs(d - best_d) <= 1e-12 and (best is None or cand < best)):
                best, best_d = cand, d
    assert best is not None
    return best


def working_mode_of(cell: Cell) -> Subcycle:
    """Three-coloring: (q - r) mod 3 -> T1/T2/T3.  Adjacent cells differ."""
    q, r = cell
    return Subcycle((q - r) % 3 + 1)


def neighbors(cell: Cell) -> list[Cell]:
    q, r = cell
    return [(q + 1, r), (q - 1, r), (q, r + 1), (q, r - 1), (q + 1, r - 1), (q - 1, r + 1)]


@dataclass
class NodePose:
    position: tuple[float, float, float]
    normal: tuple[float, float, float] = (0.0, 0.0, 1.0)
    cell: Cell = (0, 0)
    position_id: int = -1

    def __post_init__(self) -> None:
        n = math.sqrt(sum(c * c for c in self.normal))
        if n == 0:
            raise ValueError("normal must be nonzero")
        self.normal = tuple(c / n for c in self.normal)  # type: ignore[assignment]


@dataclass(frozen=True)
class PathGeometry:
    distance: float
    direction: tuple[float, float, float]  # unit vector a -> b
    side_at_b: str  # "top" | "bottom"


def geometry_between(a: NodePose, b: NodePose) -> PathGeometry:
    """Distance, unit direction a->b, and which of b's detectors faces a.

    side_at_b is "top" when the arriving signal comes from the half-space b's
    normal points into (grazing incidence counts as top).
    """
    d = tuple(bb - aa for aa, bb in zip(a.position, b.position))
    dist = math.sqrt(sum(c * c for c in d))
    if dist == 0:
        raise ValueError("poses are coincident")
    u = tuple(c / dist for c in d)
    incoming = sum(-uc * nc for uc, nc in zip(u, b.normal))
    side = "top" if incoming >= 0 else "bottom"
    return PathGeometry(dist, u, side)  # type: ignore[arg-type]


def assign_positions(grid: HexGrid, poses: dict[str, NodePose]) -> dict[str, int]:
    """Stamp cell and position_id on every pose from the row-major scan.

    Raises if a node's lateral position falls outside the scanned extent.
    """
    order = {cell: i for i, cell in enumerate(grid.scan_cells())}
    out: dict[str, int] = {}
    for name, pose in poses.items():
        cell = cell_of(pose.position, grid)
        if cell not in order:
            raise ValueError(f"node {name} at cell {cell} is outside the grid extent")
        pose.cell = cell
        pose.position_id = order[cell]
        out[name] = pose.position_id
    return out
