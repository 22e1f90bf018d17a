"""Camera trajectories: an orbiting spiral plus walked approaches to objects.

Three modes are produced here. ``zoom_out`` is a spiral around the room,
``zoom_in`` walks the grid from object to object at eye height, and
``hybrid`` interleaves the two: observe part of the spiral, approach one
object, return to the spiral, and so on.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .gridnav import NoPath, OccupancyGrid, approach_mask, astar, distance_field, footprint_cells
from .layout import PlacedObject, SceneLayout

FOVY_RANGE = (76.0, 96.0)
RADIUS_RANGE = (1.5, 2.5)
ELEVATION_RANGE = (-50.0, 50.0)
EYE_HEIGHT = 1.6
JITTER_DEG = 5.0
TRANSFER_POSES = 10
MODES = ("zoom_in", "zoom_out", "hybrid")


@dataclass(frozen=True)
class CameraPose:
    position: tuple[float, float, float]
    target: tuple[float, float, float]
    fovy: float

    def __post_init__(self):
        if not FOVY_RANGE[0] <= self.fovy <= FOVY_RANGE[1]:
            raise ValueError(f"fovy {self.fovy} outside {FOVY_RANGE}")
        if math.dist(self.position, self.target) <= 1e-6:
            raise ValueError("camera position coincides with its target")

    @property
    def direction(self) -> np.ndarray:
        d = np.subtract(self.target, self.position)
        return d / np.linalg.norm(d)


@dataclass
class Trajectory:
    poses: list[CameraPose]
    mode: str
    phases: list[str] = field(default_factory=list)
    segments: list[int] = field(default_factory=list)

    def __post_init__(self):
        if not self.phases:
            self.phases = [self.mode] * len(self.poses)
        if not self.segments:
            self.segments = [0] * len(self.poses)

    def __len__(self) -> int:
        return len(self.poses)

    def phase_count(self, phase: str) -> int:
        """Number of maximal runs of one phase (by segment id)."""
        return len({s for p, s in zip(self.phases, self.segments) if p == phase})

    def extend(self, other: "Trajectory", phase: str | None = None) -> None:
        seg = (max(self.segments) + 1) if self.segments else 0
        self.poses += other.poses
        self.phases += [phase or p for p in other.phases]
        self.segments += [seg] * len(other)

    def records(self) -> list[dict]:
        return [
            {
                "position": [float(v) for v in p.position],
                "target": [float(v) for v in p.target],
                "fovy": float(p.fovy),
                "phase": ph,
                "segment": sg,
            }
            for p, ph, sg in zip(self.poses, self.phases, self.segments)
        ]

    def to_json(self) -> str:
        return json.dumps(self.records(), indent=2) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "y", "z", "tx", "ty", "tz", "fovy", "phase", "segment"])
        for r in self.records():
            w.writerow([*(repr(v) for v in r["position"]), *(repr(v) for v in r["target"]),
                        repr(r["fovy"]), r["phase"], r["segment"]])
        return buf.getvalue()

    @classmethod
    def from_records(cls, records: list[dict], mode: str) -> "Trajectory":
        poses = [CameraPose(tuple(r["position"]), tuple(r["target"]), r["fovy"]) for r in records]
        return cls(poses, mode, [r["phase"] for r in records], [r.get("segment", 0) for r in records])


def _fovy(rng: np.random.Generator, fovy_range=FOVY_RANGE) -> float:
    return float(rng.uniform(*fovy_range))


def spiral(center, radius_range=RADIUS_RANGE, turns: int = 2, poses_per_turn: int = 60,
           seed: int | np.random.Generator = 0, elevation_range=ELEVATION_RANGE,
           fovy_range=FOVY_RANGE) -> Trajectory:
    """Poses sweeping ``turns`` full circles around ``center``.

    Azimuth advances uniformly; elevation ramps across ``elevation_range``
    but never dips below the horizon; the radius ramps linearly from
    ``radius_range[0]`` to ``radius_range[1]``. Every pose looks at ``center``.
    """
    if turns < 1 or poses_per_turn < 1:
        raise ValueError("turns and poses_per_turn must be >= 1")
    r0, r1 = radius_range
    if not 0 < r0 <= r1:
        raise ValueError(f"bad radius range {radius_range}")
    rng = np.random.default_rng(seed)
    n = turns * poses_per_turn
    cx, cy, cz = (float(v) for v in center)
    e0, e1 = elevation_range
    poses = []
    for i in range(n):
        s = i / (n - 1) if n > 1 else 0.0
        az = math.radians(360.0 * i / poses_per_turn)
        el = math.radians(max(0.0, e0 + (e1 - e0) * s))
        r = r0 + (r1 - r0) * s
        pos = (cx + r * math.cos(el) * math.cos(az), cy + r * math.cos(el) * math.sin(az), cz + r * math.sin(el))
        poses.append(CameraPose(pos, (cx, cy, cz), _fovy(rng, fovy_range)))
    return Trajectory(poses, "zoom_out", ["spiral"] * n)


def room_center(layout: SceneLayout, room: str | None = None) -> tuple[float, float, float]:
    r = layout.scene.room(room)
    cx, cy = r.center
    return (cx, cy, r.wall_height / 2)


def _start_cell(grid: OccupancyGrid, xy) -> tuple[int, int]:
    """Free cell nearest to ``xy`` inside the component of the first door."""
    free = grid.free
    if grid.door_cells:
        lab, _ = ndimage.label(free)
        d = grid.door_cells[0]
        if lab[d]:
            free = lab == lab[d]
    cells = np.argwhere(free)
    if not len(cells):
        raise NoPath("no free cell to start from")
    centers = np.asarray(grid.origin) + (cells[:, ::-1] + 0.5) * grid.cell_size
    dist = np.round(np.hypot(centers[:, 0] - xy[0], centers[:, 1] - xy[1]), 9)
    best = cells[np.lexsort((cells[:, 1], cells[:, 0], dist))[0]]
    return int(best[0]), int(best[1])


def zoom_in(grid: OccupancyGrid, from_pose: CameraPose, obj: PlacedObject, eye_height: float = EYE_HEIGHT,
            seed: int | np.random.Generator = 0, fovy_range=FOVY_RANGE) -> Trajectory:
    """Walk from the camera's position to the cheapest cell next to ``obj``.

    One pose per path cell at eye height, each looking at the object
    center; the camera height is nudged so the viewing elevation varies
    by up to ``JITTER_DEG`` degrees. Raises NoPath when the object cannot
    be reached.
    """
    rng = np.random.default_rng(seed)
    start = _start_cell(grid, from_pose.position[:2])
    field_ = distance_field(grid, start)
    zone = approach_mask(grid, footprint_cells(grid.origin, grid.cell_size, grid.obstructed.shape, obj.box))
    cost = field_.cost
    zone &= np.isfinite(cost)
    if not zone.any():
        raise NoPath(f"{obj.id} cannot be reached from {start}")
    cells = np.argwhere(zone)
    goal = cells[np.lexsort((cells[:, 1], cells[:, 0], cost[zone]))[0]]
    path = astar(grid, start, (int(goal[0]), int(goal[1])))
    tx, ty, tz = obj.pose.x, obj.pose.y, obj.pose.z
    poses = []
    for cell in path.cells:
        x, y = grid.cell_center(cell)
        dh = math.hypot(tx - x, ty - y)
        base = math.atan2(tz - eye_height, dh)
        jitter = math.radians(rng.uniform(-JITTER_DEG, JITTER_DEG))
        z = tz - dh * math.tan(base + jitter)
        poses.append(CameraPose((x, y, z), (tx, ty, tz), _fovy(rng, fovy_range)))
    return Trajectory(poses, "zoom_in", ["zoom_in"] * len(poses))


def nearest_pose(point, trajectory: Trajectory) -> int:
    pts = np.array([p.position for p in trajectory.poses])
    d = np.linalg.norm(pts - np.asarray(point, dtype=float), axis=1)
    return int(np.argmin(d))


def zoom_out(from_pose: CameraPose, spiral_traj: Trajectory, n_poses: int = TRANSFER_POSES,
             seed: int | np.random.Generator = 0, fovy_range=FOVY_RANGE) -> Trajectory:
    """Straight transfer from ``from_pose`` back onto the nearest spiral pose."""
    if not len(spiral_traj):
        raise ValueError("spiral trajectory is empty")
    rng = np.random.default_rng(seed)
    k = nearest_pose(from_pose.position, spiral_traj)
    dest = spiral_traj.poses[k]
    a = np.asarray(from_pose.position, dtype=float)
    b = np.asarray(dest.position, dtype=float)
    if np.linalg.norm(b - a) < 1e-9:
        return Trajectory([dest], "zoom_out", ["zoom_out"])
    ta = np.asarray(from_pose.target, dtype=float)
    tb = np.asarray(dest.target, dtype=float)
    poses = []
    for i in range(1, n_poses + 1):
        s = i / n_poses
        pos = b if i == n_poses else a + s * (b - a)
        tgt = tb if i == n_poses else ta + s * (tb - ta)
        if np.linalg.norm(tgt - pos) <= 1e-6:
            tgt = tb
        poses.append(CameraPose(tuple(float(v) for v in pos), tuple(float(v) for v in tgt), _fovy(rng, fovy_range)))
    return Trajectory(poses, "zoom_out", ["zoom_out"] * len(poses))


@dataclass(frozen=True)
class CameraParams:
    turns: int = 2
    poses_per_turn: int = 60
    radius_range: tuple[float, float] = RADIUS_RANGE
    elevation_range: tuple[float, float] = ELEVATION_RANGE
    fovy_range: tuple[float, float] = FOVY_RANGE
    eye_height: float = EYE_HEIGHT
    transfer_poses: int = TRANSFER_POSES

    def as_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in self.__dict__.items()}


def _door_pose(grid: OccupancyGrid, layout: SceneLayout, room: str | None, eye: float, rng) -> CameraPose:
    cell = grid.door_cells[0] if grid.door_cells else _start_cell(grid, layout.scene.room(room).center)
    x, y = grid.cell_center(cell)
    return CameraPose((x, y, eye), room_center(layout, room), _fovy(rng))


def plan(layout: SceneLayout, grid: OccupancyGrid, mode: str, seed: int = 0, params: CameraParams | None = None,
         room: str | None = None) -> tuple[Trajectory, list[str]]:
    """Trajectory for one of ``MODES``; also returns ids of objects skipped as unreachable."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    p = params or CameraParams()
    rng = np.random.default_rng(seed)
    center = room_center(layout, room)
    spiral_traj = spiral(center, p.radius_range, p.turns, p.poses_per_turn, rng, p.elevation_range, p.fovy_range)
    if mode == "zoom_out":
        return spiral_traj, []
    objects = list(layout.floor_objects)
    order = rng.permutation(len(objects))
    objects = [objects[i] for i in order]
    skipped: list[str] = []
    if mode == "zoom_in":
        out = Trajectory([], "zoom_in")
        pose = _door_pose(grid, layout, room, p.eye_height, rng)
        for obj in objects:
            try:
                leg = zoom_in(grid, pose, obj, p.eye_height, rng, p.fovy_range)
            except NoPath:
                skipped.append(obj.id)
                continue
            out.extend(leg)
            pose = leg.poses[-1]
        if not out.poses:
            return Trajectory([pose], "zoom_in", ["zoom_in"]), skipped
        return out, skipped
    out = Trajectory([], "hybrid")
    chunks = np.array_split(np.arange(len(spiral_traj)), len(objects) + 1)
    pose = None
    for j, chunk in enumerate(chunks):
        if len(chunk):
            part = Trajectory([spiral_traj.poses[i] for i in chunk], "hybrid", ["spiral"] * len(chunk))
            out.extend(part)
            pose = part.poses[-1]
        if j == len(objects):
            break
        obj = objects[j]
        if pose is None:
            pose = spiral_traj.poses[0]
        try:
            leg = zoom_in(grid, pose, obj, p.eye_height, rng, p.fovy_range)
        except NoPath:
            skipped.append(obj.id)
            continue
        out.extend(leg)
        back = zoom_out(leg.poses[-1], spiral_traj, p.transfer_poses, rng, p.fovy_range)
        out.extend(back)
        pose = back.poses[-1]
    return out, skipped
