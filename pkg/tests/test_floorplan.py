import json

import numpy as np
import pytest

from applan.floorplan import (
    CellKind,
    Deployment,
    FloorPlan,
    Position,
    generate_synthetic,
    indoor_cells,
    is_feasible_position,
    load_floorplan,
    project_to_feasible,
    serialize_floorplan,
)


def test_load_floorplan_maps_fields():
    doc = {
        "name": "t",
        "level": 1,
        "cell_size_m": 0.5,
        "z_min": 0.0,
        "z_max": 3.0,
        "material_loss_db": {"wall": 10, "window": 4, "door": 2},
        "grid": [[0, 1], [0, 0]],
    }
    fp = load_floorplan(json.dumps(doc))
    assert fp.shape == (2, 2)
    assert (fp.grid == CellKind.FreeSpace).sum() == 3
    assert (fp.grid == CellKind.Wall).sum() == 1


def test_load_floorplan_rejects_unknown_code():
    doc = {"cell_size_m": 0.5, "z_min": 0, "z_max": 3, "grid": [[0, 7]]}
    with pytest.raises(ValueError, match="unknown cell kind"):
        load_floorplan(json.dumps(doc))


def test_load_floorplan_rejects_empty_grid():
    doc = {"cell_size_m": 0.5, "z_min": 0, "z_max": 3, "grid": []}
    with pytest.raises(ValueError, match="non-empty"):
        load_floorplan(json.dumps(doc))


def test_load_floorplan_rejects_bad_cell_size():
    doc = {"cell_size_m": -1, "z_min": 0, "z_max": 3, "grid": [[0]]}
    with pytest.raises(ValueError, match="cell_size_m"):
        load_floorplan(json.dumps(doc))


def test_roundtrip_identical():
    fp = generate_synthetic(2, 12, 10, seed=5)
    back = load_floorplan(json.dumps(serialize_floorplan(fp)))
    assert np.array_equal(back.grid, fp.grid)
    assert back.cell_size_m == fp.cell_size_m
    assert back.z_bounds == fp.z_bounds
    assert back.material_loss_db == fp.material_loss_db
    assert back.name == fp.name and back.level == fp.level


def test_generate_synthetic_deterministic():
    a = generate_synthetic(1, 20, 20, seed=7)
    b = generate_synthetic(1, 20, 20, seed=7)
    assert np.array_equal(a.grid, b.grid)


def test_generate_synthetic_density_increases_with_level():
    low = generate_synthetic(1, 20, 20, seed=7)
    high = generate_synthetic(4, 20, 20, seed=7)
    frac = lambda fp: (fp.grid == CellKind.Wall).mean()
    assert frac(high) > frac(low)


def test_generate_synthetic_rejects_bad_level():
    with pytest.raises(ValueError):
        generate_synthetic(0, 20, 20, seed=1)


def test_generate_synthetic_rejects_small_dims():
    with pytest.raises(ValueError):
        generate_synthetic(1, 2, 20, seed=1)


@pytest.mark.parametrize("level", [1, 2, 3, 4])
def test_generate_synthetic_rooms_connected_via_doors(level):
    fp = generate_synthetic(level, 20, 16, seed=11)
    passable = (fp.grid == CellKind.FreeSpace) | (fp.grid == CellKind.Door)
    free = np.argwhere(fp.grid == CellKind.FreeSpace)
    seen = np.zeros(fp.shape, dtype=bool)
    stack = [tuple(free[0])]
    seen[free[0][0], free[0][1]] = True
    while stack:
        r, c = stack.pop()
        for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            rr, cc = r + dr, c + dc
            if 0 <= rr < fp.shape[0] and 0 <= cc < fp.shape[1]:
                if passable[rr, cc] and not seen[rr, cc]:
                    seen[rr, cc] = True
                    stack.append((rr, cc))
    assert all(seen[r, c] for r, c in free)


def test_feasibility_rules(open_room):
    assert is_feasible_position(open_room, Position(5.25, 5.25, 1.5))
    assert not is_feasible_position(open_room, Position(5.25, 5.25, 4.5))
    assert not is_feasible_position(open_room, Position(-1.0, 5.0, 1.5))
    fp = generate_synthetic(2, 12, 12, seed=3)
    wall = np.argwhere(fp.grid == CellKind.Wall)[0]
    x = (wall[1] + 0.5) * fp.cell_size_m
    y = (wall[0] + 0.5) * fp.cell_size_m
    assert not is_feasible_position(fp, Position(x, y, 1.5))


def test_indoor_cells_counts_and_geometry():
    fp = FloorPlan(grid=np.array([[0, 1], [0, 0]]))
    cells = indoor_cells(fp)
    assert len(cells) == 3

    single = FloorPlan(grid=np.array([[0]]), z_bounds=(0.0, 3.0))
    c = indoor_cells(single)
    assert c.shape == (1, 3)
    assert np.allclose(c[0], [0.25, 0.25, 1.5])

    walls = FloorPlan(grid=np.ones((3, 3), dtype=int))
    assert len(indoor_cells(walls)) == 0


def test_indoor_cells_are_feasible(open_room):
    for p in indoor_cells(open_room)[:10]:
        assert is_feasible_position(open_room, Position(*p))


def test_projection_identity_for_feasible(open_room):
    p = Position(3.3, 4.4, 1.0)
    assert project_to_feasible(open_room, p) == p


def test_projection_snaps_to_free_center():
    fp = FloorPlan(grid=np.array([[0, 1]]))
    p = Position(0.75, 0.25, 1.5)  # inside the wall cell
    proj = project_to_feasible(fp, p)
    assert proj == Position(0.25, 0.25, 1.5)


def test_projection_clamps_z(open_room):
    proj = project_to_feasible(open_room, Position(-5.0, 5.0, 99.0))
    assert open_room.z_bounds[0] <= proj.z <= open_room.z_bounds[1]
    assert is_feasible_position(open_room, proj)


def test_deployment_validation():
    with pytest.raises(ValueError):
        Deployment(np.zeros((0, 3)))
    with pytest.raises(ValueError):
        Deployment(np.array([[1.0, 2.0]]))
    with pytest.raises(ValueError):
        Deployment(np.array([[np.nan, 0.0, 0.0]]))
    dep = Deployment.from_points([[1, 2, 3]])
    assert len(dep) == 1 and tuple(next(iter(dep))) == (1.0, 2.0, 3.0)


def test_floorplan_validation():
    with pytest.raises(ValueError, match="non-empty"):
        FloorPlan(grid=np.zeros((0, 3), dtype=int))
    with pytest.raises(ValueError, match="unknown cell kind"):
        FloorPlan(grid=np.array([[9]]))
    with pytest.raises(ValueError):
        FloorPlan(grid=np.array([[0]]), cell_size_m=0.0)
    with pytest.raises(ValueError):
        FloorPlan(grid=np.array([[0]]), z_bounds=(3.0, 3.0))
