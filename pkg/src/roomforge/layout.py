"""Placed objects, scene layouts and the collision reward."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Iterator

from .geometry import OrientedBox, iou3d
from .scene import ChildSpec, ObjectSpec, Room, SceneDescription, dump_scene, load_scene

WALL_SLAB = 0.25
COLLISION_TIMEOUT = "collision_timeout"
REACH_TIMEOUT = "reach_timeout"


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    z: float
    theta: float

    def as_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "z": self.z, "theta": self.theta}


@dataclass(frozen=True)
class PlacedObject:
    id: str
    spec: ObjectSpec
    pose: Pose
    mount: str  # floor | wall | on_top
    room: str
    parent: str | None = None

    @property
    def box(self) -> OrientedBox:
        w, h, d = self.spec.size
        return OrientedBox((self.pose.x, self.pose.y, self.pose.z), (d / 2, w / 2, h / 2), self.pose.theta)

    def moved(self, pose: Pose) -> "PlacedObject":
        return replace(self, pose=pose)


@dataclass(frozen=True)
class Removed:
    id: str
    spec: str
    reason: str


def child_object_spec(child: ChildSpec) -> ObjectSpec:
    return ObjectSpec(child.name, "", "floor", child.size, 1, child.variance)


def wall_boxes(room: Room, thickness: float = WALL_SLAB) -> list[OrientedBox]:
    """Solid slabs just outside each wall plane of ``room``.

    Walls have zero thickness in the floor plan; the slabs give the wall
    term of the collision reward a volume to measure intrusion against.
    """
    h = room.wall_height
    t = thickness
    cx, cy = room.center
    hw, hd = room.width / 2 + t, room.depth / 2 + t
    return [
        OrientedBox((cx, room.ymin - t / 2, h / 2), (hw, t / 2, h / 2)),
        OrientedBox((cx, room.ymax + t / 2, h / 2), (hw, t / 2, h / 2)),
        OrientedBox((room.xmin - t / 2, cy, h / 2), (t / 2, hd, h / 2)),
        OrientedBox((room.xmax + t / 2, cy, h / 2), (t / 2, hd, h / 2)),
    ]


@dataclass
class SceneLayout:
    scene: SceneDescription
    placed: list[PlacedObject] = field(default_factory=list)
    removed: list[Removed] = field(default_factory=list)

    def copy(self) -> "SceneLayout":
        return SceneLayout(self.scene, list(self.placed), list(self.removed))

    def __iter__(self) -> Iterator[PlacedObject]:
        return iter(self.placed)

    def __len__(self) -> int:
        return len(self.placed)

    def index(self, obj_id: str) -> int:
        for i, p in enumerate(self.placed):
            if p.id == obj_id:
                return i
        raise KeyError(obj_id)

    def get(self, obj_id: str) -> PlacedObject:
        return self.placed[self.index(obj_id)]

    def children_of(self, obj_id: str) -> list[PlacedObject]:
        return [p for p in self.placed if p.parent == obj_id]

    def group(self, obj_id: str) -> list[PlacedObject]:
        """An object together with everything resting on it."""
        return [self.get(obj_id)] + self.children_of(obj_id)

    @property
    def floor_objects(self) -> list[PlacedObject]:
        return [p for p in self.placed if p.mount == "floor"]

    @property
    def top_level(self) -> list[PlacedObject]:
        return [p for p in self.placed if p.parent is None]

    def remove_group(self, obj_id: str, reason: str | None) -> None:
        members = {p.id for p in self.group(obj_id)}
        for p in self.placed:
            if p.id in members and reason is not None:
                self.removed.append(Removed(p.id, p.spec.name, reason))
        self.placed = [p for p in self.placed if p.id not in members]

    def replace(self, objs: list[PlacedObject]) -> None:
        by_id = {o.id: o for o in objs}
        self.placed = [by_id.get(p.id, p) for p in self.placed]

    # -- serialization -------------------------------------------------

    def to_dict(self, rewards: dict | None = None) -> dict:
        doc = {
            "scene": dump_scene(self.scene),
            "placed": [
                {
                    "id": p.id,
                    "spec": p.spec.name,
                    "pose": p.pose.as_dict(),
                    "mount": p.mount,
                    "room": p.room,
                    "parent": p.parent,
                    "size": list(p.spec.size_cm),
                }
                for p in self.placed
            ],
            "removed": [{"id": r.id, "spec": r.spec, "reason": r.reason} for r in self.removed],
        }
        if rewards is not None:
            doc["rewards"] = rewards
        return doc

    def to_json(self, rewards: dict | None = None) -> str:
        return json.dumps(self.to_dict(rewards), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> "SceneLayout":
        scene, _ = load_scene(doc["scene"])
        specs = {s.name: s for s in scene.objects}
        placed: list[PlacedObject] = []
        by_id: dict[str, PlacedObject] = {}
        for rec in doc["placed"]:
            pose = Pose(**{k: float(rec["pose"][k]) for k in ("x", "y", "z", "theta")})
            parent = rec.get("parent")
            if parent is None:
                spec = specs[rec["spec"]]
            else:
                pspec = by_id[parent].spec
                child = next(c for c in pspec.children if c.name == rec["spec"])
                spec = child_object_spec(child)
            obj = PlacedObject(rec["id"], spec, pose, rec["mount"], rec["room"], parent)
            placed.append(obj)
            by_id[obj.id] = obj
        removed = [Removed(r["id"], r["spec"], r["reason"]) for r in doc.get("removed", [])]
        return cls(scene, placed, removed)

    @classmethod
    def from_json(cls, text: str) -> "SceneLayout":
        return cls.from_dict(json.loads(text))


def _exempt(a: PlacedObject, b: PlacedObject) -> bool:
    return a.parent == b.id or b.parent == a.id


def collision_terms(layout: SceneLayout) -> tuple[list[tuple[str, str, float]], list[tuple[str, int, float]]]:
    """Non-zero IoU terms: object pairs (fixed i<j order) and object-wall pairs."""
    pairs = []
    boxes = [p.box for p in layout.placed]
    for i, a in enumerate(layout.placed):
        for j in range(i + 1, len(layout.placed)):
            b = layout.placed[j]
            if _exempt(a, b):
                continue
            v = iou3d(boxes[i], boxes[j])
            if v > 0:
                pairs.append((a.id, b.id, v))
    walls = []
    slabs = {r.name: wall_boxes(r) for r in layout.scene.rooms}
    for i, p in enumerate(layout.placed):
        for k, wb in enumerate(slabs[p.room]):
            v = iou3d(boxes[i], wb)
            if v > 0:
                walls.append((p.id, k, v))
    return pairs, walls


def collision_reward(layout: SceneLayout) -> float:
    """Negated sum of object-object and object-wall IoU; 0 iff nothing overlaps."""
    pairs, walls = collision_terms(layout)
    total = math.fsum(v for *_, v in pairs) + math.fsum(v for *_, v in walls)
    return -total if total else 0.0
