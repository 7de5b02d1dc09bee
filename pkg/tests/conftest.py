import numpy as np
import pytest

from applan.floorplan import CellKind, FloorPlan


@pytest.fixture
def open_room() -> FloorPlan:
    """10 m x 10 m single open room, no walls anywhere."""
    return FloorPlan(grid=np.zeros((20, 20), dtype=int), name="open-room")


@pytest.fixture
def walled_corridor() -> FloorPlan:
    """1-cell-high corridor with two 5 dB wall cells between the endpoints."""
    grid = np.zeros((1, 24), dtype=int)
    grid[0, 4] = CellKind.Wall
    grid[0, 10] = CellKind.Wall
    return FloorPlan(
        grid=grid,
        material_loss_db={CellKind.Wall: 5.0},
        name="corridor",
    )


@pytest.fixture
def unit_plan() -> FloorPlan:
    """Bounding box [-1, 1]^2 so normalized and world coordinates coincide."""
    return FloorPlan(
        grid=np.zeros((4, 4), dtype=int),
        cell_size_m=0.5,
        origin=(-1.0, -1.0),
        z_bounds=(-1.0, 1.0),
        name="unit",
    )


class QuadraticObjective:
    """beta * r(P) = -||P||^2 / 2 at beta = 1; the Gibbs target is N(0, I)."""

    permutation_invariant = True

    def value(self, p):
        return -0.5 * float((np.asarray(p) ** 2).sum())

    def gradient(self, p):
        return -np.asarray(p, dtype=float)

    def value_batch(self, stack):
        return -0.5 * (np.asarray(stack, dtype=float) ** 2).sum(axis=(1, 2))

    def value_and_gradient_batch(self, stack):
        s = np.asarray(stack, dtype=float)
        return -0.5 * (s**2).sum(axis=(1, 2)), -s


@pytest.fixture
def quadratic_objective():
    return QuadraticObjective()
