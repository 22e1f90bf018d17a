import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from roomforge import fixtures
from roomforge.scene import (
    BadMount,
    DisconnectedRooms,
    DuplicateName,
    InvalidConnection,
    InvalidWindow,
    MalformedLine,
    MissingField,
    NonPositiveSize,
    NonRectangular,
    OverlappingRooms,
    ParseError,
    Room,
    SceneError,
    SizeOutOfRange,
    ValidationError,
    dump_scene,
    load_scene,
    parse_connections,
    parse_floor_plan,
    parse_object_manifest,
    parse_windows,
    rooms_overlap,
    sample_proxy,
)

KITCHEN = "kitchen | white hex tile, glossy | light grey drywall, smooth | [(5, 0), (5, 5), (8, 5), (8, 0)]"
LIVING = "living room | maple hardwood, matte | warm white paint | [(0, 0), (0, 5), (5, 5), (5, 0)]"


def test_single_room_line():
    (room,) = parse_floor_plan(KITCHEN)
    assert room.name == "kitchen"
    assert (room.width, room.depth) == (3.0, 5.0)
    assert room.corners[0] == (5.0, 0.0)


def test_corners_normalized_ccw():
    (room,) = parse_floor_plan(KITCHEN)
    xs, ys = zip(*room.corners)
    area = 0.5 * sum(xs[i] * ys[(i + 1) % 4] - xs[(i + 1) % 4] * ys[i] for i in range(4))
    assert area == pytest.approx(15.0)


def test_two_rooms_sharing_an_edge():
    rooms = parse_floor_plan(LIVING + "\n" + KITCHEN)
    assert [r.name for r in rooms] == ["living room", "kitchen"]


@pytest.mark.parametrize(
    "text, error",
    [
        ("a | b | c | [(0,0),(0,10),(10,10),(10,0)]", SizeOutOfRange),
        ("a | b | c | [(0,0),(0,2),(4,2),(4,0)]", SizeOutOfRange),
        ("a | b | [(0,0),(0,4),(4,4),(4,0)]", MalformedLine),
        ("a | b | c | (0,0),(0,4),(4,4),(4,0)", MalformedLine),
        ("a | b | c | [(0,0),(0,4),(4,4)]", MalformedLine),
        ("a | b | c | [(0,0),(1,4),(4,4),(4,0)]", NonRectangular),
        ("a | b | c | [(0,0),(0,4),(4,4),(4,0)]\na | b | c | [(4,0),(4,4),(8,4),(8,0)]", DuplicateName),
        ("a | b | c | [(0,0),(0,4),(4,4),(4,0)]\nb | b | c | [(2,0),(2,4),(6,4),(6,0)]", OverlappingRooms),
        ("a | b | c | [(0,0),(0,4),(4,4),(4,0)]\nb | b | c | [(9,0),(9,4),(13,4),(13,0)]", DisconnectedRooms),
    ],
)
def test_floor_plan_errors(text, error):
    with pytest.raises(error):
        parse_floor_plan(text)


def test_error_hierarchy():
    assert issubclass(MalformedLine, ParseError) and issubclass(ParseError, SceneError)
    assert issubclass(SizeOutOfRange, ValidationError) and not issubclass(SizeOutOfRange, ParseError)


def _raster_overlap(a: Room, b: Room) -> bool:
    # 1 cm cells; coordinates are whole centimeters so the raster is exact
    xa0, ya0, xa1, ya1 = (round(v * 100) for v in (a.xmin, a.ymin, a.xmax, a.ymax))
    xb0, yb0, xb1, yb1 = (round(v * 100) for v in (b.xmin, b.ymin, b.xmax, b.ymax))
    lo_x, hi_x = min(xa0, xb0), max(xa1, xb1)
    lo_y, hi_y = min(ya0, yb0), max(ya1, yb1)
    xs = np.arange(lo_x, hi_x) + 0.5
    ys = np.arange(lo_y, hi_y) + 0.5
    in_a_x = (xs > xa0) & (xs < xa1)
    in_b_x = (xs > xb0) & (xs < xb1)
    in_a_y = (ys > ya0) & (ys < ya1)
    in_b_y = (ys > yb0) & (ys < yb1)
    return bool((in_a_x & in_b_x).any() and (in_a_y & in_b_y).any())


def test_overlap_agrees_with_raster_oracle():
    rng = np.random.default_rng(7)
    hits = 0
    for i in range(100):
        rooms = []
        for k in range(2):
            w = int(rng.integers(300, 601))
            d = int(rng.integers(300, 601))
            x = int(rng.integers(0, 700)) if rng.random() < 0.7 else [0, w][k]
            y = int(rng.integers(0, 700))
            rooms.append(Room.from_corners(f"r{k}", "", "", [(x / 100, y / 100), ((x + w) / 100, y / 100),
                                                           ((x + w) / 100, (y + d) / 100), (x / 100, (y + d) / 100)]))
        got = rooms_overlap(*rooms)
        assert got == _raster_overlap(*rooms)
        hits += got
    assert 10 < hits < 100


SOFA = {
    "sofa": {
        "description": "modern sectional, light grey sofa",
        "location": "floor",
        "size": [100, 80, 200],
        "quantity": 1,
        "variance type": "same",
        "objects on top": [
            {"object name": "pillow", "quantity": 2, "variance type": "varied"},
            {"object name": "throw blanket", "quantity": 1, "variance type": "same"},
        ],
    },
    "abstract painting": {
        "description": "abstract painting",
        "location": "wall",
        "size": [100, 5, 100],
        "quantity": 2,
        "variance type": "varied",
        "objects on top": [],
    },
}


def test_manifest_examples():
    sofa, painting = parse_object_manifest(SOFA)
    assert sofa.mount == "floor" and sofa.size_cm == (100, 80, 200)
    assert [(c.name, c.quantity) for c in sofa.children] == [("pillow", 2), ("throw blanket", 1)]
    assert painting.mount == "wall" and painting.quantity == 2 and painting.children == ()


def test_manifest_keys_tolerate_spacing():
    doc = {"lamp": {"Description": "x", "location": "floor", "size": [20, 20, 20], "Quantity": 1,
                    "variance  type": "same", "objects_on_top": []}}
    assert parse_object_manifest(doc)[0].name == "lamp"


@pytest.mark.parametrize(
    "patch, error",
    [
        ({"quantity": 0}, NonPositiveSize),
        ({"size": [10, 0, 10]}, NonPositiveSize),
        ({"location": "ceiling"}, BadMount),
    ],
)
def test_manifest_errors(patch, error):
    entry = dict(SOFA["sofa"], **patch)
    with pytest.raises(error):
        parse_object_manifest({"sofa": entry})


def test_manifest_missing_field():
    entry = dict(SOFA["sofa"])
    del entry["size"]
    with pytest.raises(MissingField):
        parse_object_manifest({"sofa": entry})


def test_manifest_bad_json_reports_position():
    with pytest.raises(ParseError, match="line 1 column"):
        parse_object_manifest("{bad")


def test_connections_and_windows_text():
    conns = parse_connections("exterior | living room | doorframe | single | oak door\nliving room | kitchen | open | N/A | N/A")
    assert conns[0].width == 1.0 and conns[1].width is None
    wins = parse_windows("living room | north | fixed | (150, 120) | 2 | 90")
    assert wins[0].size == (1.5, 1.2) and wins[0].base_height == 0.9
    with pytest.raises(InvalidWindow):
        parse_windows("living room | north | fixed | (130, 130) | 1 | 90")
    with pytest.raises(InvalidConnection):
        parse_connections("exterior | a | doorway | triple | x")


def _scene_doc():
    return {
        "floor_plan": LIVING + "\n" + KITCHEN,
        "connections": "exterior | living room | doorframe | single | oak\nliving room | kitchen | doorway | single | N/A",
        "windows": "living room | north | hung | (96, 91) | 1 | 100",
        "objects": SOFA,
    }


def test_scene_round_trip():
    scene, _ = load_scene(_scene_doc())
    again, _ = load_scene(json.loads(json.dumps(dump_scene(scene))))
    assert again == scene


def test_fixture_round_trip():
    for name in fixtures.SCENES:
        scene, rules = fixtures.load(name)
        again, rules2 = load_scene(dump_scene(scene, rules))
        assert again == scene and rules2 == rules


def test_scene_requires_exterior_connection():
    doc = _scene_doc()
    doc["connections"] = "living room | kitchen | open | N/A | N/A"
    with pytest.raises(InvalidConnection):
        load_scene(doc)


def test_window_above_wall_rejected():
    doc = _scene_doc()
    doc["windows"] = "living room | north | fixed | (150, 180) | 1 | 120"
    with pytest.raises(InvalidWindow):
        load_scene(doc)


def test_mixed_windows_rejected():
    doc = _scene_doc()
    doc["windows"] = "living room | north | hung | (96, 91) | 1 | 100\nliving room | south | hung | (130, 67) | 1 | 100"
    with pytest.raises(InvalidWindow):
        load_scene(doc)


def test_door_spans_on_shared_wall():
    scene, _ = load_scene(_scene_doc())
    spans = [s for s in scene.door_spans() if not s.exterior]
    assert {s.room for s in spans} == {"living room", "kitchen"}
    assert all(s.axis == "x" and s.coord == 5.0 and s.hi - s.lo == pytest.approx(1.0) for s in spans)


def test_proxy_points_on_surface_and_count():
    spec = parse_object_manifest(SOFA)[0]
    proxy = sample_proxy(spec, 5000, seed=3)
    assert proxy.points.shape == (5000, 4)
    half = np.array([spec.depth, spec.width, spec.height]) / 2
    gap = np.min(np.abs(np.abs(proxy.points[:, :3]) - half), axis=1)
    assert np.all(gap <= 1e-9)
    assert np.all(np.abs(proxy.points[:, :3]) <= half + 1e-9)


def test_proxy_face_counts_unit_cube():
    (spec,) = parse_object_manifest({"cube": {"description": "", "location": "floor", "size": [100, 100, 100],
                                              "quantity": 1, "variance type": "same", "objects on top": []}})
    pts = sample_proxy(spec, 6000, seed=1).points[:, :3]
    faces = np.argmax(np.abs(pts), axis=1) * 2 + (pts[np.arange(len(pts)), np.argmax(np.abs(pts), axis=1)] < 0)
    counts = np.bincount(faces, minlength=6)
    sigma = np.sqrt(6000 * (1 / 6) * (5 / 6))
    assert np.all(np.abs(counts - 1000) <= 3 * sigma)


def test_proxy_budget_one_and_determinism():
    spec = parse_object_manifest(SOFA)[0]
    assert sample_proxy(spec, 1).points.shape == (1, 4)
    assert np.array_equal(sample_proxy(spec, 50, 9).points, sample_proxy(spec, 50, 9).points)


@given(st.integers(300, 800), st.integers(300, 600), st.integers(-500, 500), st.integers(-500, 500))
def test_room_parse_dump_parse(w, d, x, y):
    if w * d > 480000:
        return
    corners = [(x / 100, y / 100), (x / 100, (y + d) / 100), ((x + w) / 100, (y + d) / 100), ((x + w) / 100, y / 100)]
    room = Room.from_corners("r", "f", "w", corners)
    assert Room.from_corners("r", "f", "w", list(room.corners)) == room
