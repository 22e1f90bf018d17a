import math
from collections import deque

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import grid_distances, solved
from roomforge.geometry import OrientedBox
from roomforge.gridnav import (
    EmptyScene,
    GoalObstructed,
    NoPath,
    OccupancyGrid,
    StartObstructed,
    astar,
    distance_field,
    rasterize,
    read_pgm,
    reachable_set,
)
from roomforge.layout import PlacedObject, Pose, SceneLayout
from roomforge.scene import ObjectSpec, SceneDescription, load_scene

ROOM_4X4 = {
    "rooms": [{"name": "box", "corners": [[0, 0], [4, 0], [4, 4], [0, 4]]}],
    "connections": [{"room_a": "exterior", "room_b": "box", "kind": "doorway", "width": 1.0, "wall": "south"}],
}


def empty_room():
    scene, _ = load_scene(ROOM_4X4)
    return scene


def place(scene, name, size, x, y, theta=0.0, mount="floor", z=None):
    spec = ObjectSpec(name, "", mount, size)
    w, h, d = size
    return PlacedObject(name, spec, Pose(x, y, h / 2 if z is None else z, theta), mount, scene.rooms[0].name)


def dijkstra_cost(obst: np.ndarray, start, goal) -> float:
    return float(grid_distances(obst, start)[goal])


def flood(obst: np.ndarray, start) -> np.ndarray:
    seen = np.zeros_like(obst)
    seen[start] = True
    q = deque([start])
    while q:
        r, c = q.popleft()
        for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            nr, nc = r + dr, c + dc
            if 0 <= nr < obst.shape[0] and 0 <= nc < obst.shape[1] and not obst[nr, nc] and not seen[nr, nc]:
                seen[nr, nc] = True
                q.append((nr, nc))
    return seen


def test_empty_room_has_two_cell_ring():
    g = rasterize(empty_room())
    assert g.obstructed.shape == (40, 40) and g.dilation == 2
    assert not g.obstructed[2:38, 2:38].any()
    ring = np.ones((40, 40), dtype=bool)
    ring[2:38, 2:38] = False
    # the ring is solid apart from the doorway cut through the south wall
    blocked = g.obstructed & ring
    assert blocked[:, :2].all() and blocked[:, 38:].all() and blocked[38:, :].all()
    south = g.obstructed[:2, :]
    assert south[:, :15].all() and not south[:, 17:23].any() and south[:, 26:].all()


def test_door_cell_free_and_centered():
    g = rasterize(empty_room())
    (door,) = g.door_cells
    assert g.is_free(door)
    assert g.cell_center(door) == pytest.approx((2.05, 0.05))


def test_room_filled_by_one_object():
    scene = empty_room()
    layout = SceneLayout(scene, [place(scene, "slab", (4.0, 0.5, 4.0), 2.0, 2.0)])
    g = rasterize(scene, layout)
    assert g.raw.all() and g.obstructed.all()


def test_rasterize_deterministic():
    _, layout = solved("bedroom")
    a = rasterize(layout.scene, layout)
    b = rasterize(layout.scene, layout)
    assert a.to_pgm() == b.to_pgm()


def test_high_wall_object_does_not_obstruct():
    scene = empty_room()
    high = place(scene, "art", (1.0, 0.5, 0.05), 2.0, 3.975, mount="wall", z=2.2)
    low = place(scene, "cab", (1.0, 0.5, 0.05), 2.0, 3.975, mount="wall", z=1.0)
    assert np.array_equal(rasterize(scene, SceneLayout(scene, [high])).raw, rasterize(scene).raw)
    assert rasterize(scene, SceneLayout(scene, [low])).raw.sum() > rasterize(scene).raw.sum()


def test_dilation_keeps_agent_disc_clear():
    _, layout = solved("living_room")
    g = rasterize(layout.scene, layout)
    raw = np.argwhere(g.raw)
    r = 0.2
    for cell in np.argwhere(g.free)[::7]:
        cx, cy = g.cell_center(cell)
        lo_x = g.origin[0] + raw[:, 1] * g.cell_size
        lo_y = g.origin[1] + raw[:, 0] * g.cell_size
        dx = np.maximum(np.maximum(lo_x - cx, 0), cx - (lo_x + g.cell_size))
        dy = np.maximum(np.maximum(lo_y - cy, 0), cy - (lo_y + g.cell_size))
        assert np.min(np.hypot(dx, dy)) >= r - 1e-12


def test_pgm_round_trip():
    _, layout = solved("kitchen")
    g = rasterize(layout.scene, layout)
    data = g.to_pgm()
    assert data.startswith(b"P5\n")
    assert np.array_equal(read_pgm(data), g.obstructed)


def test_empty_scene():
    with pytest.raises(EmptyScene):
        rasterize(SceneDescription(()))


def test_astar_trivial_and_errors():
    g = OccupancyGrid.from_array(np.zeros((5, 5), dtype=bool))
    p = astar(g, (2, 2), (2, 2))
    assert p.cells == ((2, 2),) and p.cost == 0
    walled = np.zeros((5, 5), dtype=bool)
    walled[:, 2] = True
    with pytest.raises(NoPath):
        astar(OccupancyGrid.from_array(walled), (0, 0), (0, 4))
    with pytest.raises(StartObstructed):
        astar(OccupancyGrid.from_array(walled), (0, 2), (0, 4))
    with pytest.raises(GoalObstructed):
        astar(OccupancyGrid.from_array(walled), (0, 0), (1, 2))


def test_no_corner_cutting():
    obst = np.array([[0, 1], [1, 0]], dtype=bool)
    with pytest.raises(NoPath):
        astar(OccupancyGrid.from_array(obst), (0, 0), (1, 1))


def _random_case(rng, n=64, p=0.3):
    obst = rng.random((n, n)) < p
    free = np.argwhere(~obst)
    a, b = free[rng.choice(len(free), 2, replace=False)]
    return obst, tuple(a), tuple(b)


def test_astar_matches_dijkstra_oracle():
    rng = np.random.default_rng(2024)
    for _ in range(12):
        obst, a, b = _random_case(rng)
        want = dijkstra_cost(obst, a, b)
        g = OccupancyGrid.from_array(obst)
        if math.isinf(want):
            with pytest.raises(NoPath):
                astar(g, a, b)
            continue
        path = astar(g, a, b)
        assert abs(path.cost - want) <= 1e-9
        assert not any(obst[c] for c in path.cells)
        steps = [(r2 - r1, c2 - c1) for (r1, c1), (r2, c2) in zip(path.cells, path.cells[1:])]
        assert all(max(abs(dr), abs(dc)) == 1 for dr, dc in steps)
        assert sum(1 for s in steps if 0 in s) == path.n_orth


def test_distance_field_matches_astar():
    rng = np.random.default_rng(5)
    obst, a, _ = _random_case(rng, 32, 0.25)
    g = OccupancyGrid.from_array(obst)
    field_ = distance_field(g, a)
    for b in map(tuple, np.argwhere(np.isfinite(field_.cost))[::40]):
        assert field_.cost[b] == pytest.approx(astar(g, a, b).cost, abs=1e-9)


@given(st.integers(0, 2**32 - 1))
def test_extra_obstacle_never_shortens(seed):
    rng = np.random.default_rng(seed)
    obst, a, b = _random_case(rng, 12, 0.2)
    g = OccupancyGrid.from_array(obst)
    try:
        before = astar(g, a, b).cost
    except NoPath:
        return
    free = [tuple(c) for c in np.argwhere(~obst) if tuple(c) not in (a, b)]
    extra = free[int(rng.integers(len(free)))]
    more = obst.copy()
    more[extra] = True
    try:
        after = astar(OccupancyGrid.from_array(more), a, b).cost
    except NoPath:
        return
    assert after >= before - 1e-12


def test_reachable_open_room():
    scene = empty_room()
    obj = place(scene, "chair", (0.5, 0.9, 0.5), 2.0, 2.0)
    g = rasterize(scene, SceneLayout(scene, [obj]))
    (res,) = reachable_set(g, g.door_cells[0], [obj.box])
    assert res.reachable and res.path.cells[0] == g.door_cells[0]


def test_boxed_in_object_unreachable():
    scene = empty_room()
    s = 0.6
    inner = place(scene, "safe", (s, 0.5, s), 2.0, 2.0)
    walls = [place(scene, f"w{i}", (s, 1.0, s), 2.0 + dx, 2.0 + dy)
             for i, (dx, dy) in enumerate([(s, 0), (-s, 0), (0, s), (0, -s), (s, s), (s, -s), (-s, s), (-s, -s)])]
    g = rasterize(scene, SceneLayout(scene, [inner] + walls))
    assert not reachable_set(g, g.door_cells[0], [inner.box])[0].reachable


def test_bedroom_reachability_matches_flood_fill():
    _, layout = solved("bedroom")
    g = rasterize(layout.scene, layout)
    seen = flood(g.obstructed, g.door_cells[0])
    floor = layout.floor_objects
    assert len(floor) == 7
    results = reachable_set(g, g.door_cells[0], [p.box for p in floor])
    k = g.dilation + 1
    for obj, res in zip(floor, results):
        # oracle: a flooded cell within k cells (Chebyshev) of a footprint cell
        fp = rasterize(layout.scene, SceneLayout(layout.scene, [obj])).raw & ~rasterize(layout.scene).raw
        near = np.zeros_like(fp)
        for r, c in np.argwhere(fp):
            near[max(r - k, 0): r + k + 1, max(c - k, 0): c + k + 1] = True
        assert res.reachable == bool((near & seen).any()) == True
        assert seen[res.path.cells[-1]]
