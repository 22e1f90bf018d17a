import json
import math

import numpy as np
import pytest

from conftest import solved
from roomforge import fixtures
from roomforge.arrange import (
    ArrangeConfig,
    Arranger,
    EditRejected,
    agent_overlap,
    edit,
    layout_rewards,
    pack_on_top,
    reach_diagnostic,
    repair_collisions,
    repair_reachability,
)
from roomforge.geometry import convex_intersection_area, footprint, iou3d
from roomforge.layout import PlacedObject, Pose, SceneLayout, collision_reward, wall_boxes
from roomforge.scene import load_scene

ALL = fixtures.SCENES


def room_doc(w=4.0, d=4.0, objects=None, rules=(), door="south"):
    return {
        "rooms": [{"name": "r", "corners": [[0, 0], [w, 0], [w, d], [0, d]]}],
        "connections": [{"room_a": "exterior", "room_b": "r", "kind": "doorway", "width": 1.0, "wall": door}],
        "objects": objects or {},
        "rules": list(rules),
    }


def obj(size, quantity=1, location="floor", on_top=()):
    return {"description": "", "location": location, "size": list(size), "quantity": quantity,
            "variance type": "same", "objects on top": list(on_top)}


def put(scene, name, x, y, theta=0.0, k=0):
    spec = next(s for s in scene.objects if s.name == name)
    return PlacedObject(f"{name}_{k}", spec, Pose(x, y, spec.size[1] / 2, theta), "floor", scene.rooms[0].name)


def inside(inner, outer):
    fp = footprint(inner)
    return convex_intersection_area(fp, footprint(outer)) == pytest.approx(fp.area, abs=1e-12)


def gap_and_overlap(a, b):
    """Axis gap and perpendicular overlap between two axis-aligned footprints."""
    la, ha = a.aabb()
    lb, hb = b.aabb()
    best = (math.inf, 0.0)
    for ax in (0, 1):
        other = 1 - ax
        gap = max(lb[ax] - ha[ax], la[ax] - hb[ax])
        ov = min(ha[other], hb[other]) - max(la[other], lb[other])
        if ov > 0 and gap < best[0]:
            best = (gap, ov)
    return best


@pytest.mark.parametrize("name", ALL)
def test_fixtures_solve_valid(name):
    arr, layout = solved(name)
    assert collision_reward(layout) == 0
    assert arr.rewards(layout)["reach_fraction"] == 1.0
    assert not layout.removed


@pytest.mark.parametrize("name", ALL)
def test_conservation(name):
    scene, _ = fixtures.load(name)
    _, layout = solved(name)
    expected = sum(s.quantity * (1 + sum(c.quantity for c in s.children)) for s in scene.objects)
    assert len(layout.placed) + len(layout.removed) == expected
    assert len({p.id for p in layout.placed} | {r.id for r in layout.removed}) == expected


def test_bedroom_rules():
    _, layout = solved("bedroom")
    bed = layout.get("bed_0").box
    for nid in ("nightstand_0", "nightstand_1"):
        gap, ov = gap_and_overlap(layout.get(nid).box, bed)
        assert -1e-9 <= gap <= 0.1 + 1e-9 and ov > 0
    room = layout.scene.rooms[0]
    for p in layout.top_level:
        if p.spec.name in ("bed", "nightstand", "wardrobe", "desk", "dresser"):
            (lx, ly, _), (hx, hy, _) = p.box.aabb()
            slack = min(lx - room.xmin, ly - room.ymin, room.xmax - hx, room.ymax - hy)
            assert abs(slack) <= 0.1 + 1e-9, p.id


def test_children_rest_on_parent_top():
    _, layout = solved("bedroom")
    for p in layout.placed:
        if p.parent is None:
            continue
        parent = layout.get(p.parent)
        assert p.box.z_range[0] == pytest.approx(parent.box.z_range[1])
        assert inside(p.box, parent.box)


def test_wall_objects_avoid_windows_and_doors():
    for name in ALL:
        _, layout = solved(name)
        scene = layout.scene
        for p in layout.placed:
            if p.mount != "wall":
                continue
            room = scene.room(p.room)
            (lx, ly, lz), (hx, hy, hz) = p.box.aabb()
            for direction, lo, hi, zlo, zhi in scene.window_spans(room.name):
                axis, coord, _, _ = room.wall(direction)
                near = abs((ly if axis == "y" else lx) - coord) < 0.1 or abs((hy if axis == "y" else hx) - coord) < 0.1
                along = (lx, hx) if axis == "y" else (ly, hy)
                if near:
                    assert along[1] <= lo + 1e-9 or along[0] >= hi - 1e-9 or hz <= zlo or lz >= zhi


def test_determinism_byte_identical():
    scene, rules = fixtures.load("living_room")
    a = Arranger(scene, rules).solve(3).to_json()
    b = Arranger(scene, rules).solve(3).to_json()
    assert a == b


def test_empty_manifest():
    scene, rules = load_scene(room_doc())
    layout = Arranger(scene, rules).solve(0)
    assert layout.placed == [] and layout.removed == []
    assert layout_rewards(layout) == {"r_coll": 0.0, "reach_fraction": 1.0}


def test_collision_reward_examples():
    scene, _ = load_scene(room_doc(objects={"cube": obj((100, 100, 100), 2)}))
    a = put(scene, "cube", 2.0, 2.0)
    assert collision_reward(SceneLayout(scene, [a, put(scene, "cube", 2.0, 2.0, k=1)])) == -1.0
    # shifted by half a side: intersection 0.5, union 1.5
    assert collision_reward(SceneLayout(scene, [a, put(scene, "cube", 2.5, 2.0, k=1)])) == pytest.approx(-1 / 3)


def test_collision_reward_counts_walls():
    scene, _ = load_scene(room_doc(objects={"cube": obj((100, 100, 100))}))
    lay = SceneLayout(scene, [put(scene, "cube", 0.25, 2.0)])
    want = -sum(iou3d(lay.placed[0].box, w) for w in wall_boxes(scene.rooms[0]))
    assert want < 0 and collision_reward(lay) == pytest.approx(want)


def test_repair_separates_coincident_cubes():
    scene, _ = load_scene(room_doc(objects={"cube": obj((100, 100, 100), 2)}))
    lay = SceneLayout(scene, [put(scene, "cube", 2.0, 2.0), put(scene, "cube", 2.0, 2.0, k=1)])
    fixed = repair_collisions(lay)
    assert collision_reward(fixed) == 0
    assert {p.id for p in fixed.placed} == {"cube_0", "cube_1"}


@pytest.mark.parametrize("name", ["bedroom", "kitchen"])
def test_repair_is_fixpoint_on_valid_layouts(name):
    arr, layout = solved(name)
    again = arr.repair_reachability(arr.repair_collisions(layout))
    assert again.to_json() == layout.to_json()


def test_overcrowded_drops_objects_but_ends_valid():
    arr, layout = solved("overcrowded")
    assert arr.is_valid(layout)
    assert layout.removed
    assert {r.reason for r in layout.removed} <= {"collision_timeout", "reach_timeout"}


def test_pocket_object_is_relocated():
    # a chair trapped between a long sofa and the back wall
    scene, _ = load_scene(room_doc(objects={"sofa": obj((250, 80, 60)), "chair": obj((40, 80, 40))}))
    sofa = put(scene, "sofa", 1.25, 3.3, theta=math.pi / 2)
    chair = put(scene, "chair", 0.2, 3.8)
    lay = SceneLayout(scene, [sofa, chair])
    arr = Arranger(scene, ())
    assert "chair_0" not in arr.reachable_ids(lay.placed)
    fixed = repair_reachability(lay)
    assert {p.id for p in fixed.placed} == {"sofa_0", "chair_0"}
    moved = fixed.get("chair_0").pose
    assert math.hypot(moved.x - 0.2, moved.y - 3.8) <= 1.0 + 1e-9
    assert arr.is_valid(fixed)


def test_sealed_alcove_gives_reach_timeout():
    scene, _ = load_scene(room_doc(objects={"block": obj((400, 100, 40)), "stool": obj((30, 50, 30))}))
    block = put(scene, "block", 2.0, 3.2, theta=math.pi / 2)
    stool = put(scene, "stool", 2.0, 3.85)
    lay = SceneLayout(scene, [block, stool])
    cfg = ArrangeConfig(reach_radius=0.3)
    fixed = repair_reachability(lay, config=cfg)
    assert [p.id for p in fixed.placed] == ["block_0"]
    assert [(r.id, r.reason) for r in fixed.removed] == [("stool_0", "reach_timeout")]


def test_reach_diagnostic_zero_on_solved():
    for name in ("bedroom", "workplace"):
        _, layout = solved(name)
        assert reach_diagnostic(layout) == 0.0


def test_agent_overlap_coincident_is_minus_one():
    scene, _ = load_scene(room_doc(objects={"pillar": obj((40, 170, 40))}))
    lay = SceneLayout(scene, [put(scene, "pillar", 2.0, 2.0)])
    assert agent_overlap(lay, [(2.0, 2.0)]) == pytest.approx(-1.0)
    assert agent_overlap(lay, [(3.0, 3.0)]) == 0.0


def test_pack_on_top_overflow():
    scene, _ = load_scene(room_doc(objects={"stool": obj((30, 50, 30))}))
    parent = put(scene, "stool", 2.0, 2.0)
    from roomforge.scene import ObjectSpec
    cup = ObjectSpec("cup", "", "floor", (0.12, 0.1, 0.12))
    placed, overflow = pack_on_top(parent, [(f"stool_0/cup_{i}", cup) for i in range(6)])
    assert len(placed) == 4 and len(overflow) == 2
    for p in placed:
        assert inside(p.box, parent.box)


def test_edit_delete_keeps_other_poses():
    _, layout = solved("bedroom")
    out = edit(layout, {"op": "delete", "id": "dresser_0"})
    assert "dresser_0" not in {p.id for p in out.placed}
    before = {p.id: p.pose for p in layout.placed}
    assert all(before[p.id] == p.pose for p in out.placed)


def test_edit_delete_unknown():
    _, layout = solved("bedroom")
    with pytest.raises(EditRejected, match="unknown_id"):
        edit(layout, {"op": "delete", "id": "sofa_9"})


def test_edit_insert_table_with_cups():
    _, layout = solved("living_room")
    out = edit(layout, {"op": "insert", "spec": fixtures.table_with_cups()})
    new = [p for p in out.placed if p.id not in {q.id for q in layout.placed}]
    assert len(new) == 4
    assert sum(p.parent is not None for p in new) == 3
    assert Arranger(out.scene, ()).is_valid(out)


def test_edit_reposition_into_wall():
    _, layout = solved("bedroom")
    op = {"op": "reposition", "id": "dresser_0", "pose": {"x": 0.0, "y": 2.0}}
    with pytest.raises(EditRejected):
        edit(layout, op, repair=False)
    out = edit(layout, op)
    assert collision_reward(out) == 0 and "dresser_0" in {p.id for p in out.placed}


def test_edit_reposition_child_rejected():
    _, layout = solved("bedroom")
    with pytest.raises(EditRejected, match="child"):
        edit(layout, {"op": "reposition", "id": "bed_0/pillow_0", "pose": {"x": 1, "y": 1}})


def test_layout_json_round_trip():
    _, layout = solved("dining_room")
    text = layout.to_json()
    assert SceneLayout.from_json(text).to_json() == text
    doc = json.loads(text)
    assert {"scene", "placed"} <= set(doc)
