"""Yaw-rotated boxes, convex footprints and 3D IoU."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi
AREA_EPS = 1e-12
VOLUME_EPS = 1e-12
MERGE_EPS = 1e-9
_SNAP = 1e-12


def _trig(yaw: float) -> tuple[float, float]:
    # quarter turns must give exact 0/1 so axis-aligned boxes stay axis-aligned
    c, s = math.cos(yaw), math.sin(yaw)
    if abs(c) < _SNAP:
        c = 0.0
    if abs(s) < _SNAP:
        s = 0.0
    if abs(abs(c) - 1.0) < _SNAP:
        c = math.copysign(1.0, c)
    if abs(abs(s) - 1.0) < _SNAP:
        s = math.copysign(1.0, s)
    return c, s


def normalize_yaw(yaw: float) -> float:
    y = math.fmod(float(yaw), TWO_PI)
    if y < 0:
        y += TWO_PI
    if y >= TWO_PI:
        y = 0.0
    return y


@dataclass(frozen=True)
class ConvexPolygon2D:
    """Counter-clockwise convex polygon; ``vertices`` is an (n, 2) array."""

    vertices: np.ndarray

    @property
    def area(self) -> float:
        return polygon_area(self.vertices)

    def __len__(self) -> int:
        return len(self.vertices)


@dataclass(frozen=True)
class OrientedBox:
    center: tuple[float, float, float]
    half_extents: tuple[float, float, float]
    yaw: float = 0.0

    def __post_init__(self):
        he = tuple(float(v) for v in self.half_extents)
        if len(he) != 3 or any(v < 0 or not math.isfinite(v) for v in he):
            raise ValueError(f"half extents must be three finite values >= 0, got {self.half_extents}")
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        object.__setattr__(self, "half_extents", he)
        object.__setattr__(self, "yaw", normalize_yaw(self.yaw))

    @property
    def volume(self) -> float:
        hx, hy, hz = self.half_extents
        return 8.0 * hx * hy * hz

    @property
    def z_range(self) -> tuple[float, float]:
        return (self.center[2] - self.half_extents[2], self.center[2] + self.half_extents[2])

    @property
    def axis_aligned(self) -> bool:
        c, s = _trig(self.yaw)
        return c == 0.0 or s == 0.0

    def aabb(self) -> tuple[np.ndarray, np.ndarray]:
        """Axis-aligned bounds ``(lo, hi)`` of the box, each shape (3,)."""
        c, s = _trig(self.yaw)
        hx, hy, hz = self.half_extents
        ex = abs(c) * hx + abs(s) * hy
        ey = abs(s) * hx + abs(c) * hy
        ext = np.array([ex, ey, hz])
        ctr = np.array(self.center)
        return ctr - ext, ctr + ext

    def translated(self, dx: float, dy: float, dz: float = 0.0) -> "OrientedBox":
        cx, cy, cz = self.center
        return OrientedBox((cx + dx, cy + dy, cz + dz), self.half_extents, self.yaw)


def footprint(box: OrientedBox) -> ConvexPolygon2D:
    c, s = _trig(box.yaw)
    hx, hy, _ = box.half_extents
    local = np.array([[-hx, -hy], [hx, -hy], [hx, hy], [-hx, hy]])
    rot = np.array([[c, -s], [s, c]])
    pts = local @ rot.T + np.array(box.center[:2])
    return ConvexPolygon2D(pts)


def polygon_area(vertices: np.ndarray) -> float:
    if len(vertices) < 3:
        return 0.0
    x, y = vertices[:, 0], vertices[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _clip(subject: list, edge_a, edge_b) -> list:
    ax, ay = edge_a
    bx, by = edge_b
    ex, ey = bx - ax, by - ay

    def side(p):
        return ex * (p[1] - ay) - ey * (p[0] - ax)

    out = []
    n = len(subject)
    for i in range(n):
        cur = subject[i]
        prev = subject[i - 1]
        sc, sp = side(cur), side(prev)
        if sc >= 0:
            if sp < 0:
                out.append(_intersect(prev, cur, sp, sc))
            out.append(cur)
        elif sp >= 0:
            out.append(_intersect(prev, cur, sp, sc))
    return out


def _intersect(p, q, sp, sq):
    t = sp / (sp - sq)
    return (p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1]))


def _merge_close(pts: list) -> list:
    out = []
    for p in pts:
        if not out or abs(p[0] - out[-1][0]) > MERGE_EPS or abs(p[1] - out[-1][1]) > MERGE_EPS:
            out.append(p)
    while len(out) > 1 and abs(out[0][0] - out[-1][0]) <= MERGE_EPS and abs(out[0][1] - out[-1][1]) <= MERGE_EPS:
        out.pop()
    return out


def clip_convex(subject: ConvexPolygon2D, clipper: ConvexPolygon2D) -> ConvexPolygon2D:
    """Sutherland-Hodgman clipping of ``subject`` against convex ``clipper``."""
    pts = [tuple(p) for p in subject.vertices]
    cv = [tuple(p) for p in clipper.vertices]
    for i in range(len(cv)):
        if not pts:
            break
        pts = _merge_close(_clip(pts, cv[i - 1], cv[i]))
    return ConvexPolygon2D(np.array(pts, dtype=float).reshape(-1, 2))


def convex_intersection_area(a: ConvexPolygon2D, b: ConvexPolygon2D) -> float:
    if len(a) < 3 or len(b) < 3 or a.area <= AREA_EPS or b.area <= AREA_EPS:
        return 0.0
    area = clip_convex(a, b).area
    return area if area > AREA_EPS else 0.0


def aabb_iou(lo_a: np.ndarray, hi_a: np.ndarray, lo_b: np.ndarray, hi_b: np.ndarray) -> np.ndarray:
    """IoU of axis-aligned boxes given as broadcastable ``(..., 3)`` bounds."""
    ov = np.minimum(hi_a, hi_b) - np.maximum(lo_a, lo_b)
    ov = np.clip(ov, 0.0, None)
    area = ov[..., 0] * ov[..., 1]
    area = np.where(area > AREA_EPS, area, 0.0)
    inter = area * ov[..., 2]
    inter = np.where(inter > VOLUME_EPS, inter, 0.0)
    ext_a = hi_a - lo_a
    ext_b = hi_b - lo_b
    va = ext_a[..., 0] * ext_a[..., 1] * ext_a[..., 2]
    vb = ext_b[..., 0] * ext_b[..., 1] * ext_b[..., 2]
    union = va + vb - inter
    with np.errstate(divide="ignore", invalid="ignore"):
        iou = np.where((union > 0) & (inter > 0), inter / np.where(union > 0, union, 1.0), 0.0)
    return iou


def _key(box: OrientedBox) -> tuple:
    return (box.center, box.half_extents, box.yaw)


def intersection_volume(a: OrientedBox, b: OrientedBox) -> float:
    if a.volume == 0.0 or b.volume == 0.0:
        return 0.0
    za, zb = a.z_range, b.z_range
    dz = min(za[1], zb[1]) - max(za[0], zb[0])
    if dz <= 0:
        return 0.0
    area = convex_intersection_area(footprint(a), footprint(b))
    inter = area * dz
    return inter if inter > VOLUME_EPS else 0.0


def iou3d(a: OrientedBox, b: OrientedBox) -> float:
    """Intersection over union of two yaw-rotated boxes.

    Exactly symmetric: the pair is put in a canonical order first. Boxes
    with a zero half-extent have zero volume and score 0 against anything.
    """
    if _key(b) < _key(a):
        a, b = b, a
    if a.volume == 0.0 or b.volume == 0.0:
        return 0.0
    if a.axis_aligned and b.axis_aligned:
        lo_a, hi_a = a.aabb()
        lo_b, hi_b = b.aabb()
        return float(aabb_iou(lo_a, hi_a, lo_b, hi_b))
    inter = intersection_volume(a, b)
    if inter == 0.0:
        return 0.0
    union = a.volume + b.volume - inter
    return inter / union if union > 0 else 0.0
