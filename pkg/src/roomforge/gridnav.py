"""Occupancy-grid rasterization of a scene and 8-connected A* search.

Cells are indexed ``(row, col)`` with row 0 at the grid origin's y and
col 0 at its x. A diagonal step is only allowed when both orthogonal
cells it passes are free, so a diagonal never squeezes between two
obstacles touching at a corner.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage

from .geometry import ConvexPolygon2D, OrientedBox, convex_intersection_area, footprint
from .scene import SceneDescription, shared_wall

SQRT2 = math.sqrt(2.0)
DEFAULT_CELL = 0.1
DEFAULT_AGENT = OrientedBox((0.0, 0.0, 0.85), (0.2, 0.2, 0.85))
WALL_OBJECT_CLEARANCE = 1.9
_TOL = 1e-9
_STEPS = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))


class GridError(Exception):
    pass


class EmptyScene(GridError):
    pass


class NoPath(GridError):
    pass


class StartObstructed(GridError):
    pass


class GoalObstructed(GridError):
    pass


@dataclass(frozen=True)
class OccupancyGrid:
    """Traversability map. ``obstructed`` is the agent-dilated map used for
    search; ``raw`` holds the undilated obstacles."""

    origin: tuple[float, float]
    cell_size: float
    obstructed: np.ndarray = field(repr=False)
    raw: np.ndarray = field(repr=False)
    dilation: int = 0
    door_cells: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        for arr in (self.obstructed, self.raw):
            arr.setflags(write=False)

    @property
    def height(self) -> int:
        return self.obstructed.shape[0]

    @property
    def width(self) -> int:
        return self.obstructed.shape[1]

    @property
    def free(self) -> np.ndarray:
        return ~self.obstructed

    def in_bounds(self, cell) -> bool:
        r, c = cell
        return 0 <= r < self.height and 0 <= c < self.width

    def is_free(self, cell) -> bool:
        return self.in_bounds(cell) and not self.obstructed[cell[0], cell[1]]

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        return (
            int(math.floor((y - self.origin[1]) / self.cell_size + _TOL)),
            int(math.floor((x - self.origin[0]) / self.cell_size + _TOL)),
        )

    def cell_center(self, cell) -> tuple[float, float]:
        r, c = cell
        return (self.origin[0] + (c + 0.5) * self.cell_size, self.origin[1] + (r + 0.5) * self.cell_size)

    def to_pgm(self) -> bytes:
        """Binary PGM (P5): 255 free, 0 obstructed, row-major from the origin row."""
        body = np.where(self.obstructed, 0, 255).astype(np.uint8)
        return f"P5\n{self.width} {self.height}\n255\n".encode("ascii") + body.tobytes()

    @classmethod
    def from_array(cls, obstructed, cell_size: float = 1.0, origin=(0.0, 0.0)) -> "OccupancyGrid":
        arr = np.array(obstructed, dtype=bool)
        return cls(tuple(origin), float(cell_size), arr, arr.copy())


def read_pgm(data: bytes) -> np.ndarray:
    """Parse a P5 grid written by :meth:`OccupancyGrid.to_pgm`; returns the obstructed mask."""
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError("not a binary PGM")
    w, h = (int(v) for v in parts[1].split())
    body = np.frombuffer(parts[3], dtype=np.uint8, count=w * h).reshape(h, w)
    return body == 0


def dilation_cells(agent_half_width: float, cell_size: float) -> int:
    return int(math.ceil(agent_half_width / cell_size - _TOL))


def footprint_cells(origin, cell_size: float, shape, box: OrientedBox | ConvexPolygon2D) -> np.ndarray:
    """Boolean mask of cells whose square overlaps the footprint with positive area."""
    mask = np.zeros(shape, dtype=bool)
    if isinstance(box, ConvexPolygon2D):
        lo, hi = box.vertices.min(axis=0), box.vertices.max(axis=0)
        exact = False
    else:
        lo3, hi3 = box.aabb()
        lo, hi = lo3[:2], hi3[:2]
        exact = box.axis_aligned
    s = cell_size
    x0, y0 = origin
    c0 = max(0, int(math.floor((lo[0] - x0) / s + _TOL)))
    c1 = min(shape[1], int(math.ceil((hi[0] - x0) / s - _TOL)))
    r0 = max(0, int(math.floor((lo[1] - y0) / s + _TOL)))
    r1 = min(shape[0], int(math.ceil((hi[1] - y0) / s - _TOL)))
    if r0 >= r1 or c0 >= c1:
        return mask
    if exact:
        mask[r0:r1, c0:c1] = True
        return mask
    poly = box if isinstance(box, ConvexPolygon2D) else footprint(box)
    for r in range(r0, r1):
        for c in range(c0, c1):
            cell = ConvexPolygon2D(np.array([
                [x0 + c * s, y0 + r * s], [x0 + (c + 1) * s, y0 + r * s],
                [x0 + (c + 1) * s, y0 + (r + 1) * s], [x0 + c * s, y0 + (r + 1) * s],
            ]))
            if convex_intersection_area(cell, poly) > 0:
                mask[r, c] = True
    return mask


class GridBuilder:
    """Static rasterization of a scene's structure; obstacles are added per call.

    The arranger rebuilds grids thousands of times while only furniture
    moves, so walls, doors and padding are computed once here.
    """

    def __init__(self, scene: SceneDescription, cell_size: float = DEFAULT_CELL, agent: OrientedBox = DEFAULT_AGENT):
        if not scene.rooms:
            raise EmptyScene("scene has no rooms")
        if not cell_size > 0:
            raise ValueError("cell_size must be positive")
        self.scene = scene
        self.cell_size = s = float(cell_size)
        self.agent = agent
        self.k = dilation_cells(max(agent.half_extents[0], agent.half_extents[1]), s)
        x0 = min(r.xmin for r in scene.rooms)
        y0 = min(r.ymin for r in scene.rooms)
        x1 = max(r.xmax for r in scene.rooms)
        y1 = max(r.ymax for r in scene.rooms)
        self.origin = (x0, y0)
        ncols = int(math.ceil((x1 - x0) / s - _TOL))
        nrows = int(math.ceil((y1 - y0) / s - _TOL))
        self.shape = (nrows, ncols)
        xs = x0 + (np.arange(ncols) + 0.5) * s
        ys = y0 + (np.arange(nrows) + 0.5) * s
        self._xs, self._ys = xs, ys
        inside = np.zeros(self.shape, dtype=bool)
        for room in scene.rooms:
            inside |= np.outer((ys > room.ymin) & (ys < room.ymax), (xs > room.xmin) & (xs < room.xmax))
        self.outside = ~inside
        raw = self.outside.copy()
        spans = scene.door_spans()
        rooms = scene.rooms
        for i, a in enumerate(rooms):
            for b in rooms[i + 1:]:
                seg = shared_wall(a, b)
                if seg is None:
                    continue
                axis, coord, lo, hi = seg
                openings = [
                    (sp.lo, sp.hi) for sp in spans
                    if not sp.exterior and {sp.connection.room_a, sp.connection.room_b} == {a.name, b.name}
                ]
                along = ys if axis == "x" else xs
                line = (along > lo) & (along < hi)
                for o_lo, o_hi in openings:
                    line &= ~((along > o_lo) & (along < o_hi))
                idx = int(math.floor((coord - (x0 if axis == "x" else y0)) / s + _TOL))
                if axis == "x":
                    raw[line, idx] = True
                else:
                    raw[idx, line] = True
        self.structure = raw
        pad = self.k + 1
        self.pad = pad
        self._open = np.zeros((nrows + 2 * pad, ncols + 2 * pad), dtype=bool)
        doors = []
        for sp in spans:
            if not sp.exterior:
                continue
            room = scene.room(sp.room)
            if sp.axis == "y":
                b = int(round((sp.coord - y0) / s))
                cols = np.nonzero((xs > sp.lo) & (xs < sp.hi))[0]
                south = abs(sp.coord - room.ymin) < _TOL
                rows = np.arange(b - pad, b) if south else np.arange(b, b + pad)
                self._open[np.ix_(rows + pad, cols + pad)] = True
                col = int(math.floor((sp.mid - x0) / s + _TOL))
                doors.append((b if south else b - 1, col))
            else:
                b = int(round((sp.coord - x0) / s))
                rows = np.nonzero((ys > sp.lo) & (ys < sp.hi))[0]
                west = abs(sp.coord - room.xmin) < _TOL
                cols = np.arange(b - pad, b) if west else np.arange(b, b + pad)
                self._open[np.ix_(rows + pad, cols + pad)] = True
                row = int(math.floor((sp.mid - y0) / s + _TOL))
                doors.append((row, b if west else b - 1))
        self.door_cells = tuple(doors)
        self._kernel = np.ones((2 * self.k + 1, 2 * self.k + 1), dtype=bool)

    def footprint_cells(self, box: OrientedBox | ConvexPolygon2D) -> np.ndarray:
        return footprint_cells(self.origin, self.cell_size, self.shape, box)

    def dilate(self, raw: np.ndarray) -> np.ndarray:
        p = self.pad
        padded = np.ones((raw.shape[0] + 2 * p, raw.shape[1] + 2 * p), dtype=bool)
        padded[p:-p, p:-p] = raw
        padded[self._open] = False
        grown = ndimage.binary_dilation(padded, structure=self._kernel)
        return grown[p:-p, p:-p] | self.outside | raw

    def build_from_mask(self, obstacles: np.ndarray) -> OccupancyGrid:
        raw = self.structure | obstacles
        return OccupancyGrid(self.origin, self.cell_size, self.dilate(raw), raw, self.k, self.door_cells)

    def build(self, boxes: Iterable[OrientedBox]) -> OccupancyGrid:
        mask = np.zeros(self.shape, dtype=bool)
        for b in boxes:
            mask |= self.footprint_cells(b)
        return self.build_from_mask(mask)


def obstacle_boxes(layout) -> list[OrientedBox]:
    """Boxes that block walking: floor objects and wall objects hanging below 1.9 m."""
    out = []
    for p in layout.placed:
        if p.mount == "floor":
            out.append(p.box)
        elif p.mount == "wall" and p.box.z_range[0] < WALL_OBJECT_CLEARANCE:
            out.append(p.box)
    return out


def rasterize(scene: SceneDescription, layout=None, cell_size: float = DEFAULT_CELL,
              agent: OrientedBox = DEFAULT_AGENT) -> OccupancyGrid:
    """Rasterize rooms, walls and furniture, then dilate by the agent's half-width."""
    builder = GridBuilder(scene, cell_size, agent)
    return builder.build(obstacle_boxes(layout) if layout is not None else [])


# --------------------------------------------------------------------------
# Search


@dataclass(frozen=True)
class GridPath:
    cells: tuple[tuple[int, int], ...]
    n_orth: int = 0
    n_diag: int = 0

    @property
    def cost(self) -> float:
        return self.n_orth + self.n_diag * SQRT2

    def __len__(self) -> int:
        return len(self.cells)


def octile(a, b) -> float:
    dr, dc = abs(a[0] - b[0]), abs(a[1] - b[1])
    lo, hi = min(dr, dc), max(dr, dc)
    return (hi - lo) + lo * SQRT2


def neighbors(obstructed: np.ndarray, r: int, c: int):
    h, w = obstructed.shape
    for dr, dc in _STEPS:
        nr, nc = r + dr, c + dc
        if not (0 <= nr < h and 0 <= nc < w) or obstructed[nr, nc]:
            continue
        if dr and dc and (obstructed[r + dr, c] or obstructed[r, c + dc]):
            continue
        yield nr, nc, bool(dr and dc)


def _check_endpoints(grid: OccupancyGrid, start, goal) -> None:
    for name, cell in (("start", start), ("goal", goal)):
        if not grid.in_bounds(cell):
            raise ValueError(f"{name} {cell} outside the {grid.height}x{grid.width} grid")
    if grid.obstructed[start]:
        raise StartObstructed(f"start {start} is obstructed")
    if grid.obstructed[goal]:
        raise GoalObstructed(f"goal {goal} is obstructed")


def astar(grid: OccupancyGrid, start, goal) -> GridPath:
    """Minimal-cost 8-connected path under the octile heuristic.

    Step costs are 1 (orthogonal) and sqrt(2) (diagonal); costs are tracked
    as integer step counts so comparisons are exact. Equal f-scores expand
    the lower ``(row, col)`` first.
    """
    start, goal = tuple(start), tuple(goal)
    _check_endpoints(grid, start, goal)
    obst = grid.obstructed
    counts = {start: (0, 0)}
    parent = {start: None}
    heap = [(octile(start, goal), start[0], start[1])]
    closed = set()
    while heap:
        _, r, c = heapq.heappop(heap)
        cur = (r, c)
        if cur in closed:
            continue
        if cur == goal:
            cells = []
            node = cur
            while node is not None:
                cells.append(node)
                node = parent[node]
            n1, n2 = counts[cur]
            return GridPath(tuple(reversed(cells)), n1, n2)
        closed.add(cur)
        n1, n2 = counts[cur]
        for nr, nc, diag in neighbors(obst, r, c):
            nxt = (nr, nc)
            if nxt in closed:
                continue
            cand = (n1, n2 + 1) if diag else (n1 + 1, n2)
            old = counts.get(nxt)
            if old is None or cand[0] + cand[1] * SQRT2 < old[0] + old[1] * SQRT2:
                counts[nxt] = cand
                parent[nxt] = cur
                g = cand[0] + cand[1] * SQRT2
                heapq.heappush(heap, (g + octile(nxt, goal), nr, nc))
    raise NoPath(f"no path from {start} to {goal}")


@dataclass
class DistanceField:
    """Single-source shortest-path costs over the free cells of a grid."""

    origin: tuple[int, int]
    n_orth: np.ndarray
    n_diag: np.ndarray
    parent: dict = field(repr=False)

    @property
    def cost(self) -> np.ndarray:
        c = self.n_orth + self.n_diag * SQRT2
        return np.where(self.n_orth < 0, np.inf, c)

    def path_to(self, cell) -> GridPath:
        cell = tuple(cell)
        if self.n_orth[cell] < 0:
            raise NoPath(f"{cell} is not reachable from {self.origin}")
        cells = []
        node = cell
        while node is not None:
            cells.append(node)
            node = self.parent[node]
        return GridPath(tuple(reversed(cells)), int(self.n_orth[cell]), int(self.n_diag[cell]))


def distance_field(grid: OccupancyGrid, start) -> DistanceField:
    start = tuple(start)
    if grid.obstructed[start]:
        raise StartObstructed(f"start {start} is obstructed")
    obst = grid.obstructed
    n1 = np.full(obst.shape, -1, dtype=np.int64)
    n2 = np.full(obst.shape, -1, dtype=np.int64)
    n1[start] = n2[start] = 0
    parent = {start: None}
    heap = [(0.0, start[0], start[1])]
    done = np.zeros(obst.shape, dtype=bool)
    while heap:
        _, r, c = heapq.heappop(heap)
        if done[r, c]:
            continue
        done[r, c] = True
        a, b = int(n1[r, c]), int(n2[r, c])
        for nr, nc, diag in neighbors(obst, r, c):
            if done[nr, nc]:
                continue
            ca, cb = (a, b + 1) if diag else (a + 1, b)
            g = ca + cb * SQRT2
            if n1[nr, nc] < 0 or g < n1[nr, nc] + n2[nr, nc] * SQRT2:
                n1[nr, nc], n2[nr, nc] = ca, cb
                parent[(nr, nc)] = (r, c)
                heapq.heappush(heap, (g, nr, nc))
    return DistanceField(start, n1, n2, parent)


def component(grid: OccupancyGrid, cell) -> np.ndarray:
    """Cells reachable from ``cell``.

    With corner cutting forbidden every diagonal step has a two-step
    orthogonal detour, so 4-connected labelling gives the same set.
    """
    free = ~grid.obstructed
    if not free[tuple(cell)]:
        return np.zeros(free.shape, dtype=bool)
    labels, _ = ndimage.label(free)
    return labels == labels[tuple(cell)]


def approach_mask(grid: OccupancyGrid, fp_mask: np.ndarray) -> np.ndarray:
    """Free cells from which the agent stands next to a footprint.

    A dilated grid keeps the agent's center ``dilation`` cells away from
    every obstacle, so the closest free cells are one ring beyond that.
    """
    ring = grid.dilation + 1
    kernel = np.ones((2 * ring + 1, 2 * ring + 1), dtype=bool)
    return ndimage.binary_dilation(fp_mask, structure=kernel) & ~grid.obstructed


@dataclass(frozen=True)
class Reach:
    reachable: bool
    path: GridPath | None = None

    @property
    def goal(self):
        return self.path.cells[-1] if self.path else None


def _fp_mask(grid: OccupancyGrid, target) -> np.ndarray:
    if isinstance(target, np.ndarray) and target.dtype == bool:
        return target
    return footprint_cells(grid.origin, grid.cell_size, grid.obstructed.shape, target)


def reachable_set(grid: OccupancyGrid, door_cell, targets: Sequence) -> list[Reach]:
    """For each target footprint, whether the agent can walk up to it from the door.

    Targets may be boxes, polygons or precomputed footprint masks. The
    returned path ends on the cheapest approach cell (ties: lowest cell).
    """
    field_ = distance_field(grid, door_cell)
    cost = field_.cost
    out = []
    for t in targets:
        zone = approach_mask(grid, _fp_mask(grid, t))
        zone &= np.isfinite(cost)
        if not zone.any():
            out.append(Reach(False))
            continue
        cells = np.argwhere(zone)
        costs = cost[zone]
        best = cells[np.lexsort((cells[:, 1], cells[:, 0], costs))[0]]
        out.append(Reach(True, field_.path_to(tuple(best))))
    return out
