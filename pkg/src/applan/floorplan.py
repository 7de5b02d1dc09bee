"""Indoor floor plan geometry: raster grid, feasibility, and synthetic generation.

A floor plan is a row-major H x W grid of cell kinds at a fixed metric
resolution, plus vertical bounds. Positions are continuous world coordinates;
the grid only classifies space and assigns per-crossing attenuation to the
three obstacle kinds.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable, NamedTuple

import numpy as np

__all__ = [
    "CellKind",
    "Position",
    "Deployment",
    "FloorPlan",
    "load_floorplan",
    "serialize_floorplan",
    "save_floorplan",
    "generate_synthetic",
    "is_feasible_position",
    "indoor_cells",
    "project_to_feasible",
]


class CellKind(IntEnum):
    """Cell classification. Numeric codes match the structured prompt encoding."""

    FreeSpace = 0
    Wall = 1
    Window = 2
    Door = 3


# dB lost per crossing of one cell of each kind at 2.4 GHz, free space loses nothing
DEFAULT_MATERIAL_LOSS_DB = {
    CellKind.FreeSpace: 0.0,
    CellKind.Wall: 10.0,
    CellKind.Window: 4.0,
    CellKind.Door: 2.0,
}


class Position(NamedTuple):
    x: float
    y: float
    z: float


@dataclass
class Deployment:
    """Ordered list of N access point positions, shape (N, 3) in meters.

    The order is an implementation detail: every consumer in this package is
    permutation invariant in the rows.
    """

    positions: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.positions, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 3:
            raise ValueError("deployment must be an (N, 3) array of positions")
        if arr.shape[0] < 1:
            raise ValueError("deployment needs at least one AP")
        if not np.all(np.isfinite(arr)):
            raise ValueError("deployment coordinates must be finite")
        self.positions = arr

    @classmethod
    def from_points(cls, points: Iterable[Iterable[float]]) -> "Deployment":
        return cls(np.asarray(list(points), dtype=float))

    def __len__(self) -> int:
        return self.positions.shape[0]

    def __iter__(self):
        for row in self.positions:
            yield Position(*row)

    def as_array(self) -> np.ndarray:
        return self.positions


@dataclass
class FloorPlan:
    """Immutable rasterized indoor region.

    World frame: origin at the grid corner, x along columns, y along rows,
    z vertical. Never mutate ``grid`` after construction; it is shared freely
    across workers.
    """

    grid: np.ndarray
    cell_size_m: float = 0.5
    z_bounds: tuple[float, float] = (0.0, 3.0)
    origin: tuple[float, float] = (0.0, 0.0)
    material_loss_db: dict = field(default_factory=lambda: dict(DEFAULT_MATERIAL_LOSS_DB))
    name: str = "floorplan"
    level: int = 1

    def __post_init__(self):
        grid = np.asarray(self.grid)
        if grid.ndim != 2 or grid.size == 0:
            raise ValueError("grid must be non-empty")
        if not np.issubdtype(grid.dtype, np.integer):
            grid = grid.astype(np.int64)
        if grid.min() < 0 or grid.max() > 3:
            raise ValueError("unknown cell kind: codes must be 0..3")
        if self.cell_size_m <= 0:
            raise ValueError("cell_size_m must be positive")
        if not self.z_bounds[0] < self.z_bounds[1]:
            raise ValueError("z_min must be below z_max")
        losses = dict(DEFAULT_MATERIAL_LOSS_DB)
        losses.update({CellKind(k): float(v) for k, v in self.material_loss_db.items()})
        if losses[CellKind.FreeSpace] != 0.0:
            raise ValueError("free space loss must be 0")
        if any(v < 0 for v in losses.values()):
            raise ValueError("material losses must be non-negative")
        grid = grid.astype(np.int8)
        grid.setflags(write=False)
        self.grid = grid
        self.material_loss_db = losses

    @property
    def shape(self) -> tuple[int, int]:
        return self.grid.shape

    @property
    def width_m(self) -> float:
        return self.grid.shape[1] * self.cell_size_m

    @property
    def height_m(self) -> float:
        return self.grid.shape[0] * self.cell_size_m

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        """(x_min, x_max, y_min, y_max) of the deployable box."""
        ox, oy = self.origin
        return ox, ox + self.width_m, oy, oy + self.height_m

    @property
    def z_eval(self) -> float:
        """Default evaluation height, midpoint of the vertical bounds."""
        return 0.5 * (self.z_bounds[0] + self.z_bounds[1])

    def loss_per_cell(self) -> np.ndarray:
        """(H, W) float array of per-crossing attenuation in dB."""
        lut = np.zeros(4)
        for kind, loss in self.material_loss_db.items():
            lut[int(kind)] = loss
        return lut[self.grid]

    def cell_index(self, x: float, y: float) -> tuple[int, int]:
        """(row, col) of the cell containing (x, y); may be out of range."""
        ox, oy = self.origin
        col = int(np.floor((x - ox) / self.cell_size_m))
        row = int(np.floor((y - oy) / self.cell_size_m))
        return row, col

    def cell_kind_at(self, x: float, y: float) -> CellKind | None:
        row, col = self.cell_index(x, y)
        h, w = self.grid.shape
        if 0 <= row < h and 0 <= col < w:
            return CellKind(int(self.grid[row, col]))
        return None

    def free_cell_centers(self) -> np.ndarray:
        """(M, 2) world xy centers of all FreeSpace cells, row-major order."""
        rows, cols = np.nonzero(self.grid == CellKind.FreeSpace)
        ox, oy = self.origin
        xs = ox + (cols + 0.5) * self.cell_size_m
        ys = oy + (rows + 0.5) * self.cell_size_m
        return np.column_stack([xs, ys])

    def free_cell_rowcols(self) -> np.ndarray:
        rows, cols = np.nonzero(self.grid == CellKind.FreeSpace)
        return np.column_stack([rows, cols])


# -- serialization --------------------------------------------------------

_LOSS_KEYS = {"wall": CellKind.Wall, "window": CellKind.Window, "door": CellKind.Door}


def serialize_floorplan(fp: FloorPlan) -> dict:
    return {
        "name": fp.name,
        "level": fp.level,
        "cell_size_m": fp.cell_size_m,
        "z_min": fp.z_bounds[0],
        "z_max": fp.z_bounds[1],
        "material_loss_db": {
            key: fp.material_loss_db[kind] for key, kind in _LOSS_KEYS.items()
        },
        "grid": fp.grid.astype(int).tolist(),
    }


def load_floorplan(data) -> FloorPlan:
    """Build a FloorPlan from a JSON document (bytes, str, or parsed dict)."""
    if isinstance(data, (bytes, str)):
        try:
            doc = json.loads(data)
        except json.JSONDecodeError as exc:
            raise ValueError(f"malformed floorplan document: {exc}") from exc
    else:
        doc = data
    if not isinstance(doc, dict):
        raise ValueError("malformed floorplan document: expected a JSON object")
    try:
        grid = doc["grid"]
        cell_size = float(doc["cell_size_m"])
        z_min = float(doc["z_min"])
        z_max = float(doc["z_max"])
    except KeyError as exc:
        raise ValueError(f"malformed floorplan document: missing {exc}") from exc
    if not grid:
        raise ValueError("grid must be non-empty")
    widths = {len(row) for row in grid}
    if len(widths) != 1 or 0 in widths:
        raise ValueError("grid rows must be non-empty and equal length")
    arr = np.asarray(grid, dtype=np.int64)
    if arr.min() < 0 or arr.max() > 3:
        raise ValueError("unknown cell kind: codes must be 0..3")
    losses = {}
    for key, kind in _LOSS_KEYS.items():
        if key in doc.get("material_loss_db", {}):
            losses[kind] = float(doc["material_loss_db"][key])
    return FloorPlan(
        grid=arr,
        cell_size_m=cell_size,
        z_bounds=(z_min, z_max),
        material_loss_db=losses or dict(DEFAULT_MATERIAL_LOSS_DB),
        name=str(doc.get("name", "floorplan")),
        level=int(doc.get("level", 1)),
    )


def save_floorplan(fp: FloorPlan, path) -> None:
    with open(path, "w") as fh:
        json.dump(serialize_floorplan(fp), fh, indent=1)


# -- synthetic generation --------------------------------------------------

# rooms-per-level targets drive wall density monotonically with level
_ROOM_TARGET = {1: 2, 2: 5, 3: 9, 4: 14}
_MIN_SIDE = {1: 8, 2: 6, 3: 5, 4: 4}


def generate_synthetic(level: int, width_m: float, height_m: float, seed: int) -> FloorPlan:
    """Deterministic multi-room test building of increasing complexity.

    Binary space partition with one door carved in every internal wall, so all
    rooms stay mutually reachable through Door cells. Pure function of its
    arguments.
    """
    if level not in (1, 2, 3, 4):
        raise ValueError("level must be in 1..4")
    if width_m < 4 or height_m < 4:
        raise ValueError("dimensions must be at least 4 m")
    rng = np.random.default_rng(seed)
    cell = 0.5
    w = int(round(width_m / cell))
    h = int(round(height_m / cell))
    grid = np.zeros((h, w), dtype=np.int8)
    grid[0, :] = CellKind.Wall
    grid[-1, :] = CellKind.Wall
    grid[:, 0] = CellKind.Wall
    grid[:, -1] = CellKind.Wall

    min_side = _MIN_SIDE[level]
    # rooms are (row0, col0, row1, col1) half-open interior boxes
    rooms = [(1, 1, h - 1, w - 1)]
    target = _ROOM_TARGET[level]
    while len(rooms) < target:
        # split the largest splittable room
        order = sorted(
            range(len(rooms)),
            key=lambda i: (rooms[i][2] - rooms[i][0]) * (rooms[i][3] - rooms[i][1]),
            reverse=True,
        )
        split_done = False
        for idx in order:
            r0, c0, r1, c1 = rooms[idx]
            height = r1 - r0
            width = c1 - c0
            vertical = width >= height
            span = width if vertical else height
            if span < 2 * min_side + 1:
                continue
            cut = int(rng.integers(min_side, span - min_side))
            if vertical:
                wall_col = c0 + cut
                grid[r0:r1, wall_col] = CellKind.Wall
                door = int(rng.integers(r0, r1 - 1))
                grid[door : door + 2, wall_col] = CellKind.Door
                rooms[idx] = (r0, c0, r1, wall_col)
                rooms.append((r0, wall_col + 1, r1, c1))
            else:
                wall_row = r0 + cut
                grid[wall_row, c0:c1] = CellKind.Wall
                door = int(rng.integers(c0, c1 - 1))
                grid[wall_row, door : door + 2] = CellKind.Door
                rooms[idx] = (r0, c0, wall_row, c1)
                rooms.append((wall_row + 1, c0, r1, c1))
            split_done = True
            break
        if not split_done:
            break

    # windows in the outer wall, more with level
    for _ in range(level + 1):
        side = int(rng.integers(0, 4))
        if side in (0, 1):
            col = int(rng.integers(1, w - 1))
            row = 0 if side == 0 else h - 1
        else:
            row = int(rng.integers(1, h - 1))
            col = 0 if side == 2 else w - 1
        grid[row, col] = CellKind.Window

    return FloorPlan(
        grid=grid,
        cell_size_m=cell,
        name=f"synthetic-L{level}-{seed}",
        level=level,
    )


# -- feasibility and discretization ----------------------------------------

def is_feasible_position(fp: FloorPlan, p: Position) -> bool:
    """True iff p lies within the deployment box and in a FreeSpace cell."""
    x, y, z = p
    x_min, x_max, y_min, y_max = fp.bounds
    if not (x_min <= x <= x_max and y_min <= y <= y_max):
        return False
    if not (fp.z_bounds[0] <= z <= fp.z_bounds[1]):
        return False
    return fp.cell_kind_at(x, y) == CellKind.FreeSpace


def indoor_cells(fp: FloorPlan, z_eval: float | None = None) -> np.ndarray:
    """(M, 3) centers of all FreeSpace cells at the evaluation height.

    This set is the discretization of the region used by every spatial
    integral in the package.
    """
    z = fp.z_eval if z_eval is None else z_eval
    xy = fp.free_cell_centers()
    return np.column_stack([xy, np.full(len(xy), z)])


def project_to_feasible(fp: FloorPlan, p: Position, z_eval: float | None = None) -> Position:
    """Nearest feasible point: identity for feasible p, else the closest
    FreeSpace cell center with z clamped into bounds."""
    if is_feasible_position(fp, p):
        return Position(*p)
    centers = fp.free_cell_centers()
    if len(centers) == 0:
        raise ValueError("floorplan has no feasible cells")
    z = float(np.clip(p[2], fp.z_bounds[0], fp.z_bounds[1]))
    d2 = (centers[:, 0] - p[0]) ** 2 + (centers[:, 1] - p[1]) ** 2
    best = int(np.argmin(d2))
    return Position(float(centers[best, 0]), float(centers[best, 1]), z)
