"""Rule-guided object placement and the two repair loops.

Placement order: floor objects (largest footprint first, rule anchors before
the objects that refer to them) by depth-first search over a 0.1 m lattice
with quarter-turn yaws, then wall-mounted objects, then small objects
packed on top of their parents. The collision loop relocates the worst
offender until nothing overlaps; the reachability loop nudges objects the
virtual agent cannot walk up to. Objects that cannot be fixed within the
budget are removed.
"""

from __future__ import annotations

import logging
import math
import re
import time
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage

from .geometry import OrientedBox, aabb_iou, iou3d, _trig
from .gridnav import (
    DEFAULT_AGENT,
    DEFAULT_CELL,
    GridBuilder,
    OccupancyGrid,
    component,
    obstacle_boxes,
    reachable_set,
)
from .layout import (
    COLLISION_TIMEOUT,
    REACH_TIMEOUT,
    PlacedObject,
    Pose,
    Removed,
    SceneLayout,
    child_object_spec,
    collision_reward,
    collision_terms,
    wall_boxes,
)
from .scene import DIRECTIONS, ObjectSpec, Room, SceneDescription

logger = logging.getLogger(__name__)

YAWS = (0.0, math.pi / 2, math.pi, 3 * math.pi / 2)
FACING_YAW = {"east": 0, "north": 1, "west": 2, "south": 3}
# a wall object on the given wall faces into the room
WALL_FACING = {"west": 0, "south": 1, "east": 2, "north": 3}
DOOR_HEIGHT = 2.1
RELATIONS = ("against_wall", "beside", "facing", "on_top")
_TOL = 1e-9


class NoCandidate(Exception):
    """An object admits no rule-satisfying, collision-free pose."""


class EditRejected(Exception):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


@dataclass(frozen=True)
class PlacementRule:
    subject: str
    relation: str
    target: str | None = None

    @classmethod
    def from_dict(cls, rec: dict) -> "PlacementRule":
        return cls(str(rec["subject"]), str(rec["relation"]), rec.get("target"))

    def as_dict(self) -> dict:
        d = {"subject": self.subject, "relation": self.relation}
        if self.target is not None:
            d["target"] = self.target
        return d


def parse_rules(records: Iterable[dict | PlacementRule], scene: SceneDescription) -> list[PlacementRule]:
    names = {s.name for s in scene.objects}
    rules = []
    for rec in records:
        rule = rec if isinstance(rec, PlacementRule) else PlacementRule.from_dict(rec)
        if rule.relation not in RELATIONS:
            raise ValueError(f"unknown relation {rule.relation!r}")
        if rule.subject not in names:
            raise ValueError(f"rule subject {rule.subject!r} is not in the manifest")
        if rule.relation in ("beside", "on_top") and rule.target not in names:
            raise ValueError(f"rule target {rule.target!r} is not in the manifest")
        if rule.relation == "facing" and rule.target not in (*DIRECTIONS, "room_center"):
            raise ValueError(f"facing target must be a direction or room_center, got {rule.target!r}")
        rules.append(rule)
    return rules


@dataclass
class ArrangeConfig:
    """Solver knobs. Budgets are iteration counts so runs are reproducible;
    ``seconds`` adds an optional wall-clock cap on top."""

    cell_size: float = DEFAULT_CELL
    step: float = 0.1
    agent: OrientedBox = DEFAULT_AGENT
    dfs_nodes: int = 400
    dfs_branch: int = 6
    collision_iters: int = 200
    reach_iters: int = 4000
    reach_radius: float = 1.0
    door_clearance: float = 0.8
    wall_base: float = 1.4
    reach_aware: bool = True
    seconds: float | None = None


def slug(name: str) -> str:
    return re.sub(r"[^0-9a-zA-Z]+", "_", name.lower()).strip("_") or "object"


def _lattice(lo: float, hi: float, step: float) -> np.ndarray:
    if hi < lo - _TOL:
        return np.empty(0)
    if hi < lo:
        hi = lo
    n = int(math.floor((hi - lo) / step + _TOL))
    vals = lo + step * np.arange(n + 1)
    if hi - vals[-1] > _TOL:
        vals = np.append(vals, hi)
    return np.round(vals, 9)


@dataclass
class Candidates:
    """Poses for one object as parallel arrays."""

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    yawi: np.ndarray
    ex: np.ndarray
    ey: np.ndarray
    hz: float

    def __len__(self) -> int:
        return len(self.x)

    @property
    def lo(self) -> np.ndarray:
        return np.stack([self.x - self.ex, self.y - self.ey, self.z - self.hz], axis=-1)

    @property
    def hi(self) -> np.ndarray:
        return np.stack([self.x + self.ex, self.y + self.ey, self.z + self.hz], axis=-1)

    def take(self, mask) -> "Candidates":
        return Candidates(self.x[mask], self.y[mask], self.z[mask], self.yawi[mask], self.ex[mask], self.ey[mask], self.hz)

    def pose(self, i: int) -> Pose:
        return Pose(float(self.x[i]), float(self.y[i]), float(self.z[i]), YAWS[int(self.yawi[i])])

    @classmethod
    def concat(cls, parts: list["Candidates"], hz: float) -> "Candidates":
        if not parts:
            e = np.empty(0)
            return cls(e, e, e, np.empty(0, dtype=int), e, e, hz)
        return cls(*(np.concatenate([getattr(p, f) for p in parts]) for f in ("x", "y", "z", "yawi", "ex", "ey")), hz)


def _extents(spec: ObjectSpec, yawi: int) -> tuple[float, float]:
    # at yaw 0 the object faces +x: depth along x, width along y
    if yawi % 2 == 0:
        return spec.depth / 2, spec.width / 2
    return spec.width / 2, spec.depth / 2


def floor_candidates(spec: ObjectSpec, room: Room, step: float) -> Candidates:
    parts = []
    hz = spec.height / 2
    for yi in range(4):
        ex, ey = _extents(spec, yi)
        xs = _lattice(room.xmin + ex, room.xmax - ex, step)
        ys = _lattice(room.ymin + ey, room.ymax - ey, step)
        if not len(xs) or not len(ys):
            continue
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        n = gx.size
        parts.append(Candidates(gx.ravel(), gy.ravel(), np.full(n, hz), np.full(n, yi), np.full(n, ex), np.full(n, ey), hz))
    return Candidates.concat(parts, hz)


def wall_candidates(spec: ObjectSpec, room: Room, step: float, base: float) -> tuple[Candidates, np.ndarray]:
    """Flush wall poses; also returns the wall direction index of each pose."""
    hz = spec.height / 2
    if base + spec.height > room.wall_height:
        base = max(0.0, room.wall_height - spec.height)
    zc = base + hz
    parts, walls = [], []
    for wi, direction in enumerate(DIRECTIONS):
        yi = WALL_FACING[direction]
        ex, ey = _extents(spec, yi)
        axis, coord, lo, hi = room.wall(direction)
        if axis == "y":
            xs = _lattice(lo + ex, hi - ex, step)
            y = coord + ey if direction == "south" else coord - ey
            if not len(xs) or room.depth < 2 * ey - _TOL:
                continue
            ys = np.full(len(xs), round(y, 9))
        else:
            ys = _lattice(lo + ey, hi - ey, step)
            x = coord + ex if direction == "west" else coord - ex
            if not len(ys) or room.width < 2 * ex - _TOL:
                continue
            xs = np.full(len(ys), round(x, 9))
        n = len(xs)
        parts.append(Candidates(xs, ys, np.full(n, zc), np.full(n, yi), np.full(n, ex), np.full(n, ey), hz))
        walls.append(np.full(n, wi))
    cands = Candidates.concat(parts, hz)
    return cands, (np.concatenate(walls) if walls else np.empty(0, dtype=int))


def _overlap_2d(lo, hi, blo, bhi) -> np.ndarray:
    ox = np.minimum(hi[..., 0], bhi[0]) - np.maximum(lo[..., 0], blo[0])
    oy = np.minimum(hi[..., 1], bhi[1]) - np.maximum(lo[..., 1], blo[1])
    return (ox > _TOL) & (oy > _TOL)


def iou_sum(lo: np.ndarray, hi: np.ndarray, boxes: Sequence[OrientedBox]) -> np.ndarray:
    """Sum over ``boxes`` of IoU with each candidate AABB ``(lo, hi)``."""
    total = np.zeros(len(lo))
    for b in boxes:
        blo, bhi = b.aabb()
        if b.axis_aligned:
            total += aabb_iou(lo, hi, blo, bhi)
            continue
        near = np.nonzero(np.all(np.minimum(hi, bhi) - np.maximum(lo, blo) > 0, axis=1))[0]
        for i in near:
            c = (lo[i] + hi[i]) / 2
            he = (hi[i] - lo[i]) / 2
            total[i] += iou3d(OrientedBox(tuple(c), tuple(he)), b)
    return total


class Arranger:
    """Stateful solver for one scene; see the module docstring."""

    def __init__(self, scene: SceneDescription, rules: Sequence = (), config: ArrangeConfig | None = None):
        self.scene = scene
        self.config = config or ArrangeConfig()
        self.rules = parse_rules(rules, scene)
        self.builder = GridBuilder(scene, self.config.cell_size, self.config.agent)
        self._fp_cache: dict = {}
        self._ring_cache: dict = {}
        self._deadline = None
        k = self.builder.k + 1
        self._ring_kernel = np.ones((2 * k + 1, 2 * k + 1), dtype=bool)
        self._walls = {r.name: wall_boxes(r) for r in scene.rooms}
        self._clearance = {r.name: self._door_clearance(r) for r in scene.rooms}
        self._blocked_wall = {r.name: self._wall_blocks(r) for r in scene.rooms}

    # -- structure ------------------------------------------------------

    def _door_clearance(self, room: Room) -> list[tuple[np.ndarray, np.ndarray]]:
        out = []
        d = self.config.door_clearance
        for sp in self.scene.door_spans():
            if sp.room != room.name or sp.connection.kind == "open":
                continue
            if sp.axis == "y":
                y0 = sp.coord if abs(sp.coord - room.ymin) < _TOL else sp.coord - d
                out.append((np.array([sp.lo, y0]), np.array([sp.hi, y0 + d])))
            else:
                x0 = sp.coord if abs(sp.coord - room.xmin) < _TOL else sp.coord - d
                out.append((np.array([x0, sp.lo]), np.array([x0 + d, sp.hi])))
        return out

    def _wall_blocks(self, room: Room) -> list[tuple[int, float, float, float, float]]:
        """Wall intervals a wall object may not cover: windows, doors and open spans."""
        out = []
        for direction, lo, hi, zlo, zhi in self.scene.window_spans(room.name):
            out.append((DIRECTIONS.index(direction), lo, hi, zlo, zhi))
        for sp in self.scene.door_spans():
            if sp.room != room.name:
                continue
            for wi, direction in enumerate(DIRECTIONS):
                axis, coord, _, _ = room.wall(direction)
                if axis == sp.axis and abs(coord - sp.coord) < _TOL:
                    top = room.wall_height if sp.connection.kind == "open" else DOOR_HEIGHT
                    out.append((wi, sp.lo, sp.hi, 0.0, top))
        return out

    def _expired(self) -> bool:
        return self._deadline is not None and time.monotonic() > self._deadline

    def _start_clock(self):
        self._deadline = None if self.config.seconds is None else time.monotonic() + self.config.seconds

    # -- reachability ---------------------------------------------------

    def _fp(self, box: OrientedBox) -> np.ndarray:
        m = self._fp_cache.get(box)
        if m is None:
            if len(self._fp_cache) > 20000:
                self._fp_cache.clear()
            m = self.builder.footprint_cells(box)
            self._fp_cache[box] = m
        return m

    def _ring(self, box: OrientedBox) -> np.ndarray:
        m = self._ring_cache.get(box)
        if m is None:
            if len(self._ring_cache) > 20000:
                self._ring_cache.clear()
            m = ndimage.binary_dilation(self._fp(box), structure=self._ring_kernel)
            self._ring_cache[box] = m
        return m

    def grid(self, placed: Sequence[PlacedObject]) -> OccupancyGrid:
        mask = np.zeros(self.builder.shape, dtype=bool)
        for b in obstacle_boxes(_Shim(placed)):
            mask |= self._fp(b)
        return self.builder.build_from_mask(mask)

    def reachable_ids(self, placed: Sequence[PlacedObject]) -> set[str]:
        grid = self.grid(placed)
        if not grid.door_cells:
            return set()
        comp = component(grid, grid.door_cells[0])
        return {p.id for p in placed if p.mount == "floor" and (self._ring(p.box) & comp).any()}

    def _all_reachable(self, placed: Sequence[PlacedObject]) -> bool:
        floor = [p for p in placed if p.mount == "floor"]
        return len(self.reachable_ids(placed)) == len(floor)

    # -- candidate filtering -------------------------------------------

    def _rules_for(self, name: str) -> list[PlacementRule]:
        return [r for r in self.rules if r.subject == name]

    def _rule_mask(self, spec: ObjectSpec, room: Room, c: Candidates, placed: Sequence[PlacedObject]) -> np.ndarray:
        mask = np.ones(len(c), dtype=bool)
        for rule in self._rules_for(spec.name):
            if rule.relation == "against_wall" and spec.mount == "floor":
                back = np.zeros(len(c), dtype=bool)
                back |= (c.yawi == 0) & (np.abs(c.x - c.ex - room.xmin) < _TOL)
                back |= (c.yawi == 1) & (np.abs(c.y - c.ey - room.ymin) < _TOL)
                back |= (c.yawi == 2) & (np.abs(c.x + c.ex - room.xmax) < _TOL)
                back |= (c.yawi == 3) & (np.abs(c.y + c.ey - room.ymax) < _TOL)
                mask &= back
            elif rule.relation == "facing" and spec.mount == "floor":
                if rule.target == "room_center":
                    cx, cy = room.center
                    ang = np.arctan2(cy - c.y, cx - c.x)
                    score = np.cos(ang[:, None] - np.array(YAWS)[None, :])
                    best = np.argmax(np.round(score, 9), axis=1)
                    at_center = (np.abs(c.x - cx) < _TOL) & (np.abs(c.y - cy) < _TOL)
                    mask &= (c.yawi == best) | at_center
                else:
                    mask &= c.yawi == FACING_YAW[rule.target]
            elif rule.relation == "beside":
                targets = [p for p in placed if p.spec.name == rule.target and p.parent is None]
                if not targets:
                    continue
                lo, hi = c.lo, c.hi
                adj = np.zeros(len(c), dtype=bool)
                step = self.config.step
                for t in targets:
                    tlo, thi = t.box.aabb()
                    for a, b in ((0, 1), (1, 0)):
                        gap = np.maximum(lo[:, a] - thi[a], tlo[a] - hi[:, a])
                        ov = np.minimum(hi[:, b], thi[b]) - np.maximum(lo[:, b], tlo[b])
                        adj |= (gap > -_TOL) & (gap < step + _TOL) & (ov > _TOL)
                mask &= adj
        return mask

    def _anchor(self, spec: ObjectSpec, room: Room, placed, home: int, near=None):
        if near is not None:
            return [near]
        for rule in self._rules_for(spec.name):
            if rule.relation == "beside":
                pts = [(p.pose.x, p.pose.y) for p in placed if p.spec.name == rule.target and p.parent is None]
                if pts:
                    return pts
        axis, coord, lo, hi = room.wall(DIRECTIONS[home])
        mid = (lo + hi) / 2
        return [(coord, mid) if axis == "x" else (mid, coord)]

    @staticmethod
    def _order(c: Candidates, anchors, primary: np.ndarray | None = None) -> np.ndarray:
        pts = np.array(anchors, dtype=float)
        d = np.min(np.hypot(c.x[:, None] - pts[None, :, 0], c.y[:, None] - pts[None, :, 1]), axis=1)
        keys = [c.yawi, c.y, c.x, np.round(d, 9)]
        if primary is not None:
            keys.append(np.round(primary, 12))
        return np.lexsort(keys)

    def _clear_mask(self, room: Room, c: Candidates) -> np.ndarray:
        lo, hi = c.lo, c.hi
        ok = np.ones(len(c), dtype=bool)
        for blo, bhi in self._clearance[room.name]:
            ok &= ~_overlap_2d(lo, hi, blo, bhi)
        return ok

    def _wall_ok(self, room: Room, c: Candidates, wall_idx: np.ndarray) -> np.ndarray:
        ok = np.ones(len(c), dtype=bool)
        lo, hi = c.lo, c.hi
        along_lo = np.where(np.isin(wall_idx, (0, 2)), lo[:, 0], lo[:, 1])
        along_hi = np.where(np.isin(wall_idx, (0, 2)), hi[:, 0], hi[:, 1])
        for wi, a_lo, a_hi, z_lo, z_hi in self._blocked_wall[room.name]:
            hit = (wall_idx == wi) & (np.minimum(along_hi, a_hi) - np.maximum(along_lo, a_lo) > _TOL)
            hit &= (np.minimum(hi[:, 2], z_hi) - np.maximum(lo[:, 2], z_lo)) > _TOL
            ok &= ~hit
        return ok

    def _free_mask(self, c: Candidates, others: Sequence[PlacedObject]) -> np.ndarray:
        if not len(c):
            return np.zeros(0, dtype=bool)
        return iou_sum(c.lo, c.hi, [o.box for o in others]) == 0

    def _base_candidates(self, spec: ObjectSpec, room: Room) -> Candidates:
        if spec.mount == "wall":
            c, widx = wall_candidates(spec, room, self.config.step, self.config.wall_base)
            return c.take(self._wall_ok(room, c, widx))
        c = floor_candidates(spec, room, self.config.step)
        return c.take(self._clear_mask(room, c))

    # -- arrangement ----------------------------------------------------

    def instances(self) -> list[tuple[str, ObjectSpec]]:
        on_top = {r.subject for r in self.rules if r.relation == "on_top"}
        out = []
        for spec in self.scene.objects:
            if spec.name in on_top:
                continue
            for k in range(spec.quantity):
                out.append((f"{slug(spec.name)}_{k}", spec))
        return out

    def _floor_order(self, insts):
        level: dict[str, int] = {}

        def depth(name, seen=()):
            if name in level:
                return level[name]
            d = 0
            for r in self._rules_for(name):
                if r.relation == "beside" and r.target not in seen:
                    d = max(d, depth(r.target, seen + (name,)) + 1)
            level[name] = d
            return d

        index = {s.name: i for i, s in enumerate(self.scene.objects)}
        return sorted(insts, key=lambda it: (depth(it[1].name), -round(it[1].footprint_area, 9), index[it[1].name], it[0]))

    def arrange(self, seed: int = 0) -> SceneLayout:
        """Initial placement; may contain collisions for objects that had no candidate."""
        self._start_clock()
        rng = np.random.default_rng(seed)
        insts = self.instances()
        home = {iid: int(rng.integers(4)) for iid, _ in insts}
        floor = self._floor_order([it for it in insts if it[1].mount == "floor"])
        wall = [it for it in insts if it[1].mount == "wall"]
        layout = SceneLayout(self.scene)

        placed = self._dfs(floor, home)
        done = {p.id for p in placed}
        for iid, spec in floor:
            if iid in done:
                continue
            obj = self._place_one(iid, spec, placed, home[iid])
            if obj is None:
                layout.removed.append(_removed(iid, spec))
            else:
                placed.append(obj)
        for iid, spec in wall:
            obj = self._place_one(iid, spec, placed, home[iid])
            if obj is None:
                layout.removed.append(_removed(iid, spec))
            else:
                placed.append(obj)
        layout.placed = placed
        self._place_children(layout)
        return layout

    def _valid_for(self, iid, spec, placed, home, near=None, rules=True):
        room = self.scene.room_of(spec)
        base = self._base_candidates(spec, room)
        if not len(base):
            return base, None
        mask = self._free_mask(base, placed)
        if rules:
            mask &= self._rule_mask(spec, room, base, placed)
        c = base.take(mask)
        order = self._order(c, self._anchor(spec, room, placed, home, near))
        return c, order

    def _make(self, iid, spec, c: Candidates, i: int) -> PlacedObject:
        return PlacedObject(iid, spec, c.pose(i), spec.mount, self.scene.room_of(spec).name)

    def _blocks_walk(self, obj: PlacedObject) -> bool:
        return obj.mount == "floor" or (obj.mount == "wall" and obj.box.z_range[0] < 1.9)

    def _dfs(self, floor, home) -> list[PlacedObject]:
        best: list[PlacedObject] = []
        nodes = [0]
        state: list[PlacedObject] = []

        def visit(i: int) -> bool:
            nonlocal best
            if len(state) > len(best):
                best = list(state)
            if i == len(floor):
                return True
            iid, spec = floor[i]
            c, order = self._valid_for(iid, spec, state, home[iid])
            if order is None:
                return False
            tried = 0
            for j in order:
                if nodes[0] >= self.config.dfs_nodes or self._expired():
                    return False
                nodes[0] += 1
                obj = self._make(iid, spec, c, j)
                if self.config.reach_aware and not self._all_reachable(state + [obj]):
                    continue
                state.append(obj)
                if visit(i + 1):
                    return True
                state.pop()
                tried += 1
                if tried >= self.config.dfs_branch:
                    break
            return False

        if visit(0):
            return list(state)
        logger.info("placement search stopped after %d nodes; %d/%d floor objects placed",
                    nodes[0], len(best), len(floor))
        return best

    def _place_one(self, iid, spec, placed, home, near=None) -> PlacedObject | None:
        """Best rule-abiding free pose; otherwise the best pose ignoring collisions."""
        c, order = self._valid_for(iid, spec, placed, home, near)
        if order is None:
            return None
        limit = 200
        for j in order[:limit]:
            obj = self._make(iid, spec, c, j)
            if not self.config.reach_aware or not self._blocks_walk(obj) or self._all_reachable(placed + [obj]):
                return obj
        room = self.scene.room_of(spec)
        base = self._base_candidates(spec, room)
        rule_ok = self._rule_mask(spec, room, base, placed)
        if rule_ok.any():
            base = base.take(rule_ok)
        cost = iou_sum(base.lo, base.hi, [o.box for o in placed])
        order = self._order(base, self._anchor(spec, room, placed, home, near), cost)
        logger.info("NoCandidate: %s deferred to collision repair", iid)
        return self._make(iid, spec, base, int(order[0]))

    def _place_children(self, layout: SceneLayout, parents: Iterable[str] | None = None) -> None:
        on_top: dict[str, list] = {}
        for rule in self.rules:
            if rule.relation == "on_top":
                spec = next(s for s in self.scene.objects if s.name == rule.subject)
                on_top.setdefault(rule.target, []).append(spec)
        roots = [p for p in layout.placed if p.parent is None]
        if parents is not None:
            wanted = set(parents)
            roots = [p for p in roots if p.id in wanted]
        extra_specs: dict[str, list[tuple[str, ObjectSpec]]] = {}
        for tname, specs in on_top.items():
            holders = [p for p in roots if p.spec.name == tname]
            if not holders:
                continue
            k = 0
            for spec in specs:
                for q in range(spec.quantity):
                    h = holders[k % len(holders)]
                    extra_specs.setdefault(h.id, []).append((f"{h.id}/{slug(spec.name)}_{q}", spec))
                    k += 1
        for parent in roots:
            items = []
            for child in parent.spec.children:
                cspec = child_object_spec(child)
                for q in range(child.quantity):
                    items.append((f"{parent.id}/{slug(child.name)}_{q}", cspec))
            items += extra_specs.get(parent.id, [])
            if not items:
                continue
            placed, overflow = pack_on_top(parent, items)
            layout.placed.extend(placed)
            for iid, spec in overflow:
                layout.removed.append(_removed(iid, spec))

    # -- collision repair ----------------------------------------------

    def _unit_costs(self, layout: SceneLayout) -> dict[str, float]:
        pairs, walls = collision_terms(layout)
        root = {p.id: (p.parent or p.id) for p in layout.placed}
        costs: dict[str, float] = {}
        for a, b, v in pairs:
            if root[a] == root[b]:
                continue
            costs[root[a]] = costs.get(root[a], 0.0) + v
            costs[root[b]] = costs.get(root[b], 0.0) + v
        for a, _, v in walls:
            costs[root[a]] = costs.get(root[a], 0.0) + v
        return costs

    def _group_candidates(self, layout: SceneLayout, root: PlacedObject, c: Candidates):
        """Candidate boxes of every group member for each root candidate."""
        members = [(root, None)]
        c0, s0 = _trig(root.pose.theta)
        for ch in layout.children_of(root.id):
            dx, dy = ch.pose.x - root.pose.x, ch.pose.y - root.pose.y
            local = (c0 * dx + s0 * dy, -s0 * dx + c0 * dy)
            members.append((ch, (local, ch.pose.theta - root.pose.theta)))
        out = [(c.lo, c.hi)]
        for ch, (local, rel) in members[1:]:
            w, h, d = ch.spec.size
            cs = np.array([_trig(y)[0] for y in YAWS])[c.yawi]
            ss = np.array([_trig(y)[1] for y in YAWS])[c.yawi]
            cx = c.x + cs * local[0] - ss * local[1]
            cy = c.y + ss * local[0] + cs * local[1]
            yaw_i = (c.yawi + int(round(rel / (math.pi / 2)))) % 4
            ex = np.where(yaw_i % 2 == 0, d / 2, w / 2)
            ey = np.where(yaw_i % 2 == 0, w / 2, d / 2)
            z = np.full(len(c), ch.pose.z)
            los = np.stack([cx - ex, cy - ey, z - h / 2], axis=-1)
            his = np.stack([cx + ex, cy + ey, z + h / 2], axis=-1)
            out.append((los, his))
        return out

    def _group_cost(self, layout: SceneLayout, root: PlacedObject, c: Candidates) -> np.ndarray:
        group_ids = {p.id for p in layout.group(root.id)}
        others = [p.box for p in layout.placed if p.id not in group_ids] + self._walls[root.room]
        total = np.zeros(len(c))
        for lo, hi in self._group_candidates(layout, root, c):
            total += iou_sum(lo, hi, others)
        return total

    def move_group(self, layout: SceneLayout, root_id: str, pose: Pose) -> list[PlacedObject]:
        """New poses for an object and its children after moving the object to ``pose``."""
        root = layout.get(root_id)
        c0, s0 = _trig(root.pose.theta)
        c1, s1 = _trig(pose.theta)
        out = [root.moved(pose)]
        for ch in layout.children_of(root_id):
            dx, dy = ch.pose.x - root.pose.x, ch.pose.y - root.pose.y
            lx, ly = c0 * dx + s0 * dy, -s0 * dx + c0 * dy
            nx = pose.x + c1 * lx - s1 * ly
            ny = pose.y + s1 * lx + c1 * ly
            dz = pose.z - root.pose.z
            theta = ch.pose.theta - root.pose.theta + pose.theta
            out.append(ch.moved(Pose(round(nx, 9), round(ny, 9), round(ch.pose.z + dz, 9), theta % (2 * math.pi))))
        return out

    def _moved_layout(self, layout: SceneLayout, root_id: str, pose: Pose) -> list[PlacedObject]:
        moved = {o.id: o for o in self.move_group(layout, root_id, pose)}
        return [moved.get(p.id, p) for p in layout.placed]

    def repair_collisions(self, layout: SceneLayout, budget: int | None = None) -> SceneLayout:
        """Relocate the worst-overlapping object until the collision reward is 0.

        Each accepted move strictly lowers the total overlap and never
        lowers the number of reachable floor objects. Objects still
        colliding when the budget runs out are removed, worst first.
        """
        self._start_clock()
        layout = layout.copy()
        budget = self.config.collision_iters if budget is None else budget
        for _ in range(budget):
            if self._expired():
                break
            costs = self._unit_costs(layout)
            if not costs:
                break
            if not self._improve_one(layout, costs):
                break
        while True:
            costs = self._unit_costs(layout)
            if not costs:
                break
            order = {p.id: i for i, p in enumerate(layout.placed)}
            worst = max(costs, key=lambda r: (round(costs[r], 12), order[r]))
            logger.info("removing %s: still colliding (%.4f)", worst, costs[worst])
            layout.remove_group(worst, COLLISION_TIMEOUT)
        return layout

    def _improve_one(self, layout: SceneLayout, costs: dict[str, float]) -> bool:
        order = {p.id: i for i, p in enumerate(layout.placed)}
        reach_before = len(self.reachable_ids(layout.placed)) if self.config.reach_aware else 0
        for rid in sorted(costs, key=lambda r: (-round(costs[r], 12), -order[r])):
            root = layout.get(rid)
            room = self.scene.room(root.room)
            c = self._base_candidates(root.spec, room)
            if not len(c):
                continue
            cost = self._group_cost(layout, root, c)
            better = cost < costs[rid] - 1e-12
            if not better.any():
                continue
            c, cost = c.take(better), cost[better]
            idx = self._order(c, [(root.pose.x, root.pose.y)], cost)
            for j in idx[:50]:
                pose = c.pose(int(j))
                new = self._moved_layout(layout, rid, pose)
                if self.config.reach_aware and len(self.reachable_ids(new)) < reach_before:
                    continue
                layout.placed = new
                return True
        return False

    # -- reachability repair -------------------------------------------

    def repair_reachability(self, layout: SceneLayout, budget: int | None = None) -> SceneLayout:
        """Move unreachable floor objects within a 1 m neighbourhood; remove the rest."""
        self._start_clock()
        layout = layout.copy()
        budget = self.config.reach_iters if budget is None else budget
        evals = 0
        while True:
            status = self.reachable_ids(layout.placed)
            stuck = [p for p in layout.floor_objects if p.id not in status]
            if not stuck:
                return layout
            progress = False
            for obj in stuck:
                if obj.id in status:
                    continue
                moved, used = self._nudge(layout, obj, status, budget - evals)
                evals += used
                if moved:
                    progress = True
                    status = self.reachable_ids(layout.placed)
                if evals >= budget or self._expired():
                    break
            if not progress or evals >= budget or self._expired():
                break
        status = self.reachable_ids(layout.placed)
        for obj in list(layout.floor_objects):
            if obj.id not in status:
                logger.info("removing %s: unreachable", obj.id)
                layout.remove_group(obj.id, REACH_TIMEOUT)
                status = self.reachable_ids(layout.placed)
        return layout

    def _nudge(self, layout: SceneLayout, obj: PlacedObject, status: set[str], budget: int) -> tuple[bool, int]:
        room = self.scene.room(obj.room)
        c = self._base_candidates(obj.spec, room)
        r = self.config.reach_radius
        near = np.hypot(c.x - obj.pose.x, c.y - obj.pose.y) <= r + _TOL
        c = c.take(near)
        if not len(c):
            return False, 0
        c = c.take(self._group_cost(layout, obj, c) == 0)
        idx = self._order(c, [(obj.pose.x, obj.pose.y)])
        used = 0
        for j in idx:
            if used >= budget or self._expired():
                break
            used += 1
            new = self._moved_layout(layout, obj.id, c.pose(int(j)))
            reach = self.reachable_ids(new)
            if obj.id in reach and status <= reach:
                layout.placed = new
                return True, used
        return False, used

    # -- full pipeline ----------------------------------------------------

    def solve(self, seed: int = 0) -> SceneLayout:
        layout = self.arrange(seed)
        layout = self.repair_collisions(layout)
        return self.repair_reachability(layout)

    def rewards(self, layout: SceneLayout) -> dict:
        floor = layout.floor_objects
        reach = self.reachable_ids(layout.placed)
        frac = 1.0 if not floor else sum(p.id in reach for p in floor) / len(floor)
        return {"r_coll": collision_reward(layout), "reach_fraction": frac}

    def is_valid(self, layout: SceneLayout) -> bool:
        r = self.rewards(layout)
        return r["r_coll"] == 0 and r["reach_fraction"] == 1.0


class _Shim:
    def __init__(self, placed):
        self.placed = placed


def _removed(iid: str, spec: ObjectSpec) -> Removed:
    return Removed(iid, spec.name, COLLISION_TIMEOUT)

    return Removed(iid, spec.name, COLLISION_TIMEOUT)


def pack_on_top(parent: PlacedObject, items: list[tuple[str, ObjectSpec]], gap: float = 0.02):
    """Shelf-pack children on the parent's top face, centred; returns (placed, overflow)."""
    w, h, d = parent.spec.size
    hx, hy = d / 2, w / 2
    rows: list[list] = []
    overflow = []
    cur: list = []
    x = -hx
    y = -hy
    row_h = 0.0
    for iid, spec in items:
        cdx, cdy = spec.depth, spec.width
        if cdx > 2 * hx + _TOL or cdy > 2 * hy + _TOL:
            overflow.append((iid, spec))
            continue
        if x + cdx > hx + _TOL and cur:
            rows.append((cur, y, row_h))
            y += row_h + gap
            x, cur, row_h = -hx, [], 0.0
        if y + cdy > hy + _TOL:
            overflow.append((iid, spec))
            continue
        cur.append((iid, spec, x + cdx / 2))
        x += cdx + gap
        row_h = max(row_h, cdy)
    if cur:
        rows.append((cur, y, row_h))
    if not rows:
        return [], overflow
    used_y = rows[-1][1] + rows[-1][2] - (-hy)
    shift_y = (2 * hy - used_y) / 2
    c, s = _trig(parent.pose.theta)
    top = parent.pose.z + h / 2
    out = []
    for cur, y0, row_h in rows:
        last_iid, last_spec, last_x = cur[-1]
        used_x = last_x + last_spec.depth / 2 - (-hx)
        shift_x = (2 * hx - used_x) / 2
        for iid, spec, lx in cur:
            lx = lx + shift_x
            ly = y0 + spec.width / 2 + shift_y
            wx = parent.pose.x + c * lx - s * ly
            wy = parent.pose.y + s * lx + c * ly
            pose = Pose(round(wx, 9), round(wy, 9), round(top + spec.height / 2, 9), parent.pose.theta)
            out.append(PlacedObject(iid, spec, pose, "on_top", parent.room, parent.id))
    return out, overflow


# ---------------------------------------------------------------------------
# Functional front end


def arrange(scene: SceneDescription, rules: Sequence = (), seed: int = 0, config: ArrangeConfig | None = None) -> SceneLayout:
    return Arranger(scene, rules, config).arrange(seed)


def repair_collisions(layout: SceneLayout, budget: int | None = None, config: ArrangeConfig | None = None) -> SceneLayout:
    return Arranger(layout.scene, (), config).repair_collisions(layout, budget)


def repair_reachability(layout: SceneLayout, budget: int | None = None, config: ArrangeConfig | None = None) -> SceneLayout:
    return Arranger(layout.scene, (), config).repair_reachability(layout, budget)


def solve(scene: SceneDescription, rules: Sequence = (), seed: int = 0, config: ArrangeConfig | None = None) -> SceneLayout:
    """Arrange, then run both repair loops; the result has R_coll = 0 and full reachability."""
    return Arranger(scene, rules, config).solve(seed)


def layout_rewards(layout: SceneLayout, config: ArrangeConfig | None = None) -> dict:
    return Arranger(layout.scene, (), config).rewards(layout)


def agent_overlap(layout: SceneLayout, positions, agent: OrientedBox = DEFAULT_AGENT) -> float:
    """``-sum IoU(agent, b)`` over every placed box ``b``, with the agent
    standing (yaw 0, on the floor) at each ``(x, y)`` in ``positions``."""
    hx, hy, hz = agent.half_extents
    boxes = [p.box for p in layout.placed]
    total = 0.0
    for x, y in positions:
        a = OrientedBox((x, y, hz), (hx, hy, hz))
        total += math.fsum(iou3d(a, b) for b in boxes)
    return -total if total else 0.0


def reach_diagnostic(layout: SceneLayout, agent: OrientedBox = DEFAULT_AGENT, cell_size: float = DEFAULT_CELL) -> float:
    """Agent-object overlap summed along every floor object's approach path.

    Zero when all paths stay clear, which dilated-grid paths do by
    construction; kept as a diagnostic alongside path-existence reachability.
    """
    cfg = ArrangeConfig(cell_size=cell_size, agent=agent)
    arr = Arranger(layout.scene, (), cfg)
    grid = arr.grid(layout.placed)
    floor = layout.floor_objects
    if not floor or not grid.door_cells or grid.obstructed[grid.door_cells[0]]:
        return 0.0
    positions = []
    for res in reachable_set(grid, grid.door_cells[0], [p.box for p in floor]):
        if res.reachable:
            positions += [grid.cell_center(c) for c in res.path.cells]
    return agent_overlap(layout, positions, agent)


# ---------------------------------------------------------------------------
# Editing


def edit(layout: SceneLayout, op: dict, config: ArrangeConfig | None = None, repair: bool = True,
         seed: int = 0) -> SceneLayout:
    """Apply ``insert`` / ``delete`` / ``reposition`` and restore validity.

    ``op`` is ``{"op": "insert", "spec": ObjectSpec, "near": id | (x, y) | None}``,
    ``{"op": "delete", "id": ...}`` or ``{"op": "reposition", "id": ..., "pose": Pose}``.
    Raises :class:`EditRejected` when the result cannot be made valid
    without dropping objects.
    """
    config = config or ArrangeConfig()
    kind = op.get("op")
    layout = layout.copy()
    before = {p.id for p in layout.placed}
    if kind == "delete":
        try:
            layout.get(op["id"])
        except KeyError:
            raise EditRejected(f"unknown_id:{op['id']}") from None
        layout.remove_group(op["id"], None)
        arr = Arranger(layout.scene, (), config)
        if not arr.is_valid(layout):
            raise EditRejected("invalid_after_delete")
        return layout
    if kind == "insert":
        spec: ObjectSpec = op["spec"]
        layout, new_ids = _insert(layout, spec, op.get("near"), config, seed)
        expect = before | set(new_ids)
    elif kind == "reposition":
        try:
            obj = layout.get(op["id"])
        except KeyError:
            raise EditRejected(f"unknown_id:{op['id']}") from None
        if obj.parent is not None:
            raise EditRejected("cannot_reposition_child")
        p = op["pose"]
        if isinstance(p, dict):
            z = p.get("z", obj.pose.z)
            p = Pose(float(p["x"]), float(p["y"]), float(z), float(p.get("theta", obj.pose.theta)))
        arr = Arranger(layout.scene, (), config)
        layout.placed = arr._moved_layout(layout, obj.id, p)
        expect = before
    else:
        raise EditRejected(f"unknown_op:{kind}")
    arr = Arranger(layout.scene, (), config)
    if repair:
        layout = arr.repair_collisions(layout)
        layout = arr.repair_reachability(layout)
    lost = sorted(expect - {p.id for p in layout.placed})
    if lost:
        raise EditRejected("removed:" + ",".join(lost))
    if not arr.is_valid(layout):
        rw = arr.rewards(layout)
        raise EditRejected("collision" if rw["r_coll"] != 0 else "unreachable")
    return layout


def _insert(layout: SceneLayout, spec: ObjectSpec, near, config: ArrangeConfig, seed: int):
    scene = layout.scene
    existing = next((s for s in scene.objects if s.name == spec.name), None)
    if existing is not None and replace(existing, quantity=spec.quantity) != spec:
        raise EditRejected(f"conflicting_spec:{spec.name}")
    room = scene.room(spec.room)
    spec = replace(spec, room=room.name if spec.room is None and len(scene.rooms) > 1 else spec.room)
    if existing is None:
        objects = scene.objects + (spec,)
        start = 0
    else:
        start = existing.quantity
        objects = tuple(replace(s, quantity=s.quantity + spec.quantity) if s.name == spec.name else s
                        for s in scene.objects)
        spec = next(s for s in objects if s.name == spec.name)
    scene = SceneDescription(scene.rooms, scene.connections, scene.windows, objects)
    relinked = []
    for p in layout.placed:
        if p.parent is None and p.spec.name == spec.name:
            p = replace(p, spec=spec)
        relinked.append(p)
    layout = SceneLayout(scene, relinked, list(layout.removed))
    arr = Arranger(scene, (), config)
    if isinstance(near, str):
        anchor = (layout.get(near).pose.x, layout.get(near).pose.y)
    elif near is not None:
        anchor = (float(near[0]), float(near[1]))
    else:
        anchor = None
    rng = np.random.default_rng(seed)
    new_ids = []
    count = spec.quantity - start
    for k in range(start, start + count):
        iid = f"{slug(spec.name)}_{k}"
        obj = arr._place_one(iid, spec, layout.placed, int(rng.integers(4)), anchor)
        if obj is None:
            raise EditRejected(f"no_space:{iid}")
        layout.placed.append(obj)
        new_ids.append(iid)
    n_before = len(layout.placed)
    arr._place_children(layout, parents=new_ids)
    new_ids += [p.id for p in layout.placed[n_before:]]
    overflow = [r.id for r in layout.removed if r.id.split("/")[0] in new_ids]
    if overflow:
        raise EditRejected("removed:" + ",".join(overflow))
    return layout, new_ids
