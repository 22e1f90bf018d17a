"""Scene descriptions: rooms, connections, windows and the object manifest.

All lengths are stored in meters. The text and JSON formats written by the
planning agents use meters for room corners and centimeters for object,
window and base-height sizes; the parsers convert at the boundary.
"""

from __future__ import annotations

import ast
import json
import re
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np

EXTERIOR = "exterior"
DIRECTIONS = ("south", "east", "north", "west")
CONNECTION_KINDS = ("doorframe", "doorway", "open")
DOOR_SIZES = {"single": 1.0, "double": 2.0}
WINDOW_CATALOG: dict[str, tuple[tuple[int, int], ...]] = {
    "fixed": ((92, 120), (150, 92), (150, 120), (150, 180), (240, 120), (240, 180)),
    "hung": ((87, 160), (96, 91), (120, 160), (130, 67), (130, 87), (130, 130)),
    "slider": ((91, 92), (120, 61), (120, 91), (120, 120), (150, 92), (150, 120)),
}
MIN_SIDE, MAX_SIDE, MAX_AREA = 3.0, 8.0, 48.0
DEFAULT_WALL_HEIGHT = 2.7
DEFAULT_CHILD_SIZE = (0.2, 0.2, 0.2)
_EPS = 1e-9


class SceneError(ValueError):
    """Base class for every scene ingestion failure."""


class ParseError(SceneError):
    """The input does not have the expected shape."""


class ValidationError(SceneError):
    """The input parsed but violates a scene invariant."""


class MalformedLine(ParseError):
    pass


class MissingField(ParseError):
    pass


class NonRectangular(ValidationError):
    pass


class SizeOutOfRange(ValidationError):
    pass


class DuplicateName(ValidationError):
    pass


class OverlappingRooms(ValidationError):
    pass


class DisconnectedRooms(ValidationError):
    pass


class BadMount(ValidationError):
    pass


class NonPositiveSize(ValidationError):
    pass


class InvalidConnection(ValidationError):
    pass


class InvalidWindow(ValidationError):
    pass


def _cm(value: float) -> float:
    return round(value * 100.0, 9)


# --------------------------------------------------------------------------
# Rooms


@dataclass(frozen=True)
class Room:
    """An axis-aligned rectangular room with zero-thickness walls.

    ``corners`` are normalized counter-clockwise starting at the minimum
    (x, y) corner, so two rooms describing the same rectangle compare equal.
    """

    name: str
    floor_material: str
    wall_material: str
    corners: tuple[tuple[float, float], ...]
    wall_height: float = DEFAULT_WALL_HEIGHT

    @classmethod
    def from_corners(cls, name, floor_material, wall_material, corners, wall_height=DEFAULT_WALL_HEIGHT):
        pts = [(float(x), float(y)) for x, y in corners]
        if len(pts) != 4:
            raise NonRectangular(f"room {name!r}: expected 4 corners, got {len(pts)}")
        xs = sorted({p[0] for p in pts})
        ys = sorted({p[1] for p in pts})
        if len(xs) != 2 or len(ys) != 2 or len(set(pts)) != 4:
            raise NonRectangular(f"room {name!r}: corners {pts} are not an axis-aligned rectangle")
        x0, x1 = xs
        y0, y1 = ys
        width, depth = x1 - x0, y1 - y0
        for side in (width, depth):
            if side < MIN_SIDE - _EPS or side > MAX_SIDE + _EPS:
                raise SizeOutOfRange(f"room {name!r}: side {side:g} m outside [{MIN_SIDE:g}, {MAX_SIDE:g}]")
        if width * depth > MAX_AREA + _EPS:
            raise SizeOutOfRange(f"room {name!r}: area {width * depth:g} m^2 exceeds {MAX_AREA:g}")
        if not wall_height > 0:
            raise SizeOutOfRange(f"room {name!r}: wall height must be positive")
        canon = ((x0, y0), (x1, y0), (x1, y1), (x0, y1))
        return cls(name, floor_material, wall_material, canon, float(wall_height))

    @property
    def xmin(self) -> float:
        return self.corners[0][0]

    @property
    def ymin(self) -> float:
        return self.corners[0][1]

    @property
    def xmax(self) -> float:
        return self.corners[2][0]

    @property
    def ymax(self) -> float:
        return self.corners[2][1]

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def depth(self) -> float:
        return self.ymax - self.ymin

    @property
    def area(self) -> float:
        return self.width * self.depth

    @property
    def center(self) -> tuple[float, float]:
        return ((self.xmin + self.xmax) / 2.0, (self.ymin + self.ymax) / 2.0)

    def wall(self, direction: str) -> tuple[str, float, float, float]:
        """Return ``(axis, coord, lo, hi)`` for a wall.

        ``axis`` is ``"y"`` for walls of constant y (south, north) and ``"x"``
        for walls of constant x; ``lo..hi`` is the span along the wall.
        """
        if direction == "south":
            return ("y", self.ymin, self.xmin, self.xmax)
        if direction == "north":
            return ("y", self.ymax, self.xmin, self.xmax)
        if direction == "west":
            return ("x", self.xmin, self.ymin, self.ymax)
        if direction == "east":
            return ("x", self.xmax, self.ymin, self.ymax)
        raise ValueError(f"unknown wall direction {direction!r}")

    def contains_point(self, x: float, y: float, tol: float = _EPS) -> bool:
        return self.xmin - tol <= x <= self.xmax + tol and self.ymin - tol <= y <= self.ymax + tol


def rooms_overlap(a: Room, b: Room) -> bool:
    """True when the interiors of two rooms intersect with positive area."""
    dx = min(a.xmax, b.xmax) - max(a.xmin, b.xmin)
    dy = min(a.ymax, b.ymax) - max(a.ymin, b.ymin)
    return dx > _EPS and dy > _EPS


def shared_wall(a: Room, b: Room) -> tuple[str, float, float, float] | None:
    """The wall segment two rooms share, as ``(axis, coord, lo, hi)``, or None."""
    for axis, a_lo, a_hi, b_lo, b_hi, s_lo_a, s_hi_a, s_lo_b, s_hi_b in (
        ("x", a.xmin, a.xmax, b.xmin, b.xmax, a.ymin, a.ymax, b.ymin, b.ymax),
        ("y", a.ymin, a.ymax, b.ymin, b.ymax, a.xmin, a.xmax, b.xmin, b.xmax),
    ):
        for coord in (a_lo, a_hi):
            if abs(coord - b_lo) < _EPS or abs(coord - b_hi) < _EPS:
                lo, hi = max(s_lo_a, s_lo_b), min(s_hi_a, s_hi_b)
                if hi - lo > _EPS:
                    return (axis, coord, lo, hi)
    return None


def _wall_direction(room: Room, axis: str, coord: float) -> str:
    if axis == "y":
        return "south" if abs(coord - room.ymin) < _EPS else "north"
    return "west" if abs(coord - room.xmin) < _EPS else "east"


_FLOOR_PLAN_LINE = re.compile(r"^\s*\[.*\]\s*$")


def parse_floor_plan(text: str, wall_height: float = DEFAULT_WALL_HEIGHT) -> list[Room]:
    """Parse pipe-delimited floor plan lines into validated rooms.

    Each non-empty line reads ``name | floor | wall | [(x, y), ...]`` with
    coordinates in meters.
    """
    rooms = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        fields = [f.strip() for f in line.split("|")]
        if len(fields) != 4:
            raise MalformedLine(f"line {lineno}: expected 4 '|'-separated fields, got {len(fields)}")
        name, floor, wall, coords = fields
        if not name:
            raise MalformedLine(f"line {lineno}: empty room name")
        if not _FLOOR_PLAN_LINE.match(coords):
            raise MalformedLine(f"line {lineno}: corner list must be bracketed")
        try:
            corners = ast.literal_eval(coords)
            corners = [(float(x), float(y)) for x, y in corners]
        except (ValueError, SyntaxError, TypeError) as exc:
            raise MalformedLine(f"line {lineno}: cannot read corners {coords!r}") from exc
        if len(corners) != 4:
            raise MalformedLine(f"line {lineno}: expected 4 corner pairs, got {len(corners)}")
        rooms.append(Room.from_corners(name, floor, wall, corners, wall_height))
    validate_rooms(rooms)
    return rooms


def validate_rooms(rooms: Sequence[Room]) -> None:
    names = set()
    for room in rooms:
        if room.name == EXTERIOR:
            raise DuplicateName(f"{EXTERIOR!r} is reserved and cannot name a room")
        if room.name in names:
            raise DuplicateName(f"room name {room.name!r} appears twice")
        names.add(room.name)
    for i, a in enumerate(rooms):
        for b in rooms[i + 1:]:
            if rooms_overlap(a, b):
                raise OverlappingRooms(f"rooms {a.name!r} and {b.name!r} overlap")
    if len(rooms) > 1:
        seen = {0}
        frontier = [0]
        while frontier:
            i = frontier.pop()
            for j in range(len(rooms)):
                if j not in seen and shared_wall(rooms[i], rooms[j]) is not None:
                    seen.add(j)
                    frontier.append(j)
        if len(seen) != len(rooms):
            lonely = sorted(rooms[j].name for j in range(len(rooms)) if j not in seen)
            raise DisconnectedRooms(f"rooms not connected through shared walls: {lonely}")


# --------------------------------------------------------------------------
# Connections and windows


@dataclass(frozen=True)
class Connection:
    room_a: str
    room_b: str
    kind: str
    width: float | None = None
    style: str = ""
    wall: str | None = None
    offset: float | None = None

    @property
    def is_exterior(self) -> bool:
        return EXTERIOR in (self.room_a, self.room_b)


@dataclass(frozen=True)
class DoorSpan:
    """Resolved geometry of a connection opening on one wall line."""

    connection: Connection
    room: str
    axis: str
    coord: float
    lo: float
    hi: float
    exterior: bool

    @property
    def mid(self) -> float:
        return (self.lo + self.hi) / 2.0


@dataclass(frozen=True)
class WindowSpec:
    room: str
    wall_direction: str
    kind: str
    size: tuple[float, float]
    quantity: int = 1
    base_height: float = 0.9

    @property
    def size_cm(self) -> tuple[int, int]:
        return (int(round(self.size[0] * 100)), int(round(self.size[1] * 100)))


def parse_connections(text: str) -> list[Connection]:
    """Parse ``room 1 | room 2 | type | size | style`` lines."""
    out = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        fields = [f.strip() for f in line.split("|")]
        if len(fields) != 5:
            raise MalformedLine(f"line {lineno}: expected 5 '|'-separated fields, got {len(fields)}")
        a, b, kind, size, style = fields
        out.append(_connection(a, b, kind, size, style if style.upper() != "N/A" else ""))
    return out


def _connection(a, b, kind, size, style="", wall=None, offset=None) -> Connection:
    kind = str(kind).strip().lower()
    if kind not in CONNECTION_KINDS:
        raise InvalidConnection(f"connection kind {kind!r} not in {CONNECTION_KINDS}")
    if kind == "open":
        if size not in (None, "", "N/A", "n/a"):
            raise InvalidConnection("open connections have no size")
        width = None
    else:
        if isinstance(size, str):
            key = size.strip().lower()
            if key not in DOOR_SIZES:
                raise InvalidConnection(f"door size {size!r} must be single or double")
            width = DOOR_SIZES[key]
        elif size is None:
            raise InvalidConnection(f"{kind} between {a!r} and {b!r} needs a size")
        else:
            width = float(size)
            if width not in DOOR_SIZES.values():
                raise InvalidConnection(f"door width {width:g} m must be 1.0 or 2.0")
    if wall is not None and wall not in DIRECTIONS:
        raise InvalidConnection(f"unknown wall {wall!r}")
    return Connection(a, b, kind, width, style, wall, None if offset is None else float(offset))


def parse_windows(text: str) -> list[WindowSpec]:
    """Parse ``room | wall | type | (w, h) | quantity | base height`` lines (cm)."""
    out = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        fields = [f.strip() for f in line.split("|")]
        if len(fields) != 6:
            raise MalformedLine(f"line {lineno}: expected 6 '|'-separated fields, got {len(fields)}")
        room, wall, kind, size, qty, base = fields
        try:
            w, h = ast.literal_eval(size)
            qty_i = int(qty)
            base_f = float(base)
        except (ValueError, SyntaxError, TypeError) as exc:
            raise MalformedLine(f"line {lineno}: {exc}") from exc
        out.append(_window(room, wall, kind, (w, h), qty_i, base_f))
    return out


def _window(room, wall, kind, size_cm, quantity, base_cm) -> WindowSpec:
    kind = str(kind).strip().lower()
    wall = str(wall).strip().lower()
    if kind not in WINDOW_CATALOG:
        raise InvalidWindow(f"window type {kind!r} not in {sorted(WINDOW_CATALOG)}")
    if wall not in DIRECTIONS:
        raise InvalidWindow(f"window wall {wall!r} not in {DIRECTIONS}")
    w, h = (int(round(float(v))) for v in size_cm)
    if (w, h) not in WINDOW_CATALOG[kind]:
        raise InvalidWindow(f"size ({w}, {h}) is not in the {kind} catalog")
    if quantity < 1:
        raise InvalidWindow("window quantity must be >= 1")
    if base_cm < 0:
        raise InvalidWindow("window base height must be >= 0")
    return WindowSpec(room, wall, kind, (w / 100.0, h / 100.0), int(quantity), base_cm / 100.0)


# --------------------------------------------------------------------------
# Objects


@dataclass(frozen=True)
class ChildSpec:
    name: str
    quantity: int = 1
    variance: str = "same"
    size: tuple[float, float, float] = DEFAULT_CHILD_SIZE


@dataclass(frozen=True)
class ObjectSpec:
    """A requested object type; ``size`` is (width, height, depth) in meters."""

    name: str
    description: str
    mount: str
    size: tuple[float, float, float]
    quantity: int = 1
    variance: str = "same"
    children: tuple[ChildSpec, ...] = ()
    room: str | None = None

    @property
    def width(self) -> float:
        return self.size[0]

    @property
    def height(self) -> float:
        return self.size[1]

    @property
    def depth(self) -> float:
        return self.size[2]

    @property
    def footprint_area(self) -> float:
        return self.width * self.depth

    @property
    def size_cm(self) -> tuple[float, float, float]:
        return tuple(_cm(v) for v in self.size)


def _norm_key(key: str) -> str:
    return re.sub(r"[\s_]+", " ", str(key).strip().lower())


def _norm_entry(entry: dict) -> dict:
    return {_norm_key(k): v for k, v in entry.items()}


def _require(entry: dict, key: str, where: str):
    if key not in entry:
        raise MissingField(f"{where}: missing field {key!r}")
    return entry[key]


def _size_triple(value, where: str) -> tuple[float, float, float]:
    try:
        vals = tuple(float(v) for v in value)
    except TypeError as exc:
        raise MissingField(f"{where}: size must be a list of three numbers") from exc
    if len(vals) != 3:
        raise MissingField(f"{where}: size must have three components, got {len(vals)}")
    if any(not (v > 0) or not np.isfinite(v) for v in vals):
        raise NonPositiveSize(f"{where}: size components must be positive, got {list(vals)}")
    return tuple(v / 100.0 for v in vals)


def _quantity(value, where: str) -> int:
    try:
        q = int(value)
    except (TypeError, ValueError) as exc:
        raise MissingField(f"{where}: quantity must be an integer") from exc
    if q < 1 or q != value:
        raise NonPositiveSize(f"{where}: quantity must be a positive integer, got {value!r}")
    return q


def parse_object_entry(name: str, entry: dict) -> ObjectSpec:
    where = f"object {name!r}"
    if not isinstance(entry, dict):
        raise MissingField(f"{where}: entry must be an object")
    e = _norm_entry(entry)
    description = str(_require(e, "description", where))
    mount = str(_require(e, "location", where)).strip().lower()
    if mount not in ("floor", "wall"):
        raise BadMount(f"{where}: location {mount!r} must be floor or wall")
    size = _size_triple(_require(e, "size", where), where)
    quantity = _quantity(_require(e, "quantity", where), where)
    variance = str(_require(e, "variance type", where)).strip().lower()
    raw_children = _require(e, "objects on top", where) or []
    children = []
    for child in raw_children:
        c = _norm_entry(child)
        cname = str(_require(c, "object name", f"{where} child"))
        cwhere = f"{where} child {cname!r}"
        csize = _size_triple(c["size"], cwhere) if "size" in c else DEFAULT_CHILD_SIZE
        children.append(
            ChildSpec(
                cname,
                _quantity(_require(c, "quantity", cwhere), cwhere),
                str(c.get("variance type", "same")).strip().lower(),
                csize,
            )
        )
    room = e.get("room")
    return ObjectSpec(name, description, mount, size, quantity, variance, tuple(children), room)


def parse_object_manifest(doc: dict | str) -> list[ObjectSpec]:
    """Parse the object-selection JSON (object name -> entry) into specs."""
    if isinstance(doc, str):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise ParseError(f"manifest JSON: {exc.msg} at line {exc.lineno} column {exc.colno}") from exc
    if not isinstance(doc, dict):
        raise ParseError("object manifest must be a JSON object keyed by object name")
    return [parse_object_entry(name, entry) for name, entry in doc.items()]


def dump_object_spec(spec: ObjectSpec) -> dict:
    entry: dict[str, Any] = {
        "description": spec.description,
        "location": spec.mount,
        "size": list(spec.size_cm),
        "quantity": spec.quantity,
        "variance type": spec.variance,
        "objects on top": [
            {
                "object name": c.name,
                "quantity": c.quantity,
                "variance type": c.variance,
                "size": [_cm(v) for v in c.size],
            }
            for c in spec.children
        ],
    }
    if spec.room is not None:
        entry["room"] = spec.room
    return entry


# --------------------------------------------------------------------------
# Proxy point clouds


@dataclass(frozen=True)
class ObjectProxy:
    """Colored surface samples ``(x, y, z, c)`` of an object's box, local frame.

    Local frame: the object faces +x, so x spans the depth, y the width and
    z the height; the box is centered at the origin.
    """

    spec: ObjectSpec
    points: np.ndarray = field(repr=False, compare=False)


def sample_proxy(spec: ObjectSpec, budget: int, seed: int = 0) -> ObjectProxy:
    if budget < 1:
        raise ValueError("budget must be >= 1")
    rng = np.random.default_rng(seed)
    hx, hy, hz = spec.depth / 2, spec.width / 2, spec.height / 2
    # faces: +-x (y*z), +-y (x*z), +-z (x*y)
    areas = np.array([spec.width * spec.height] * 2 + [spec.depth * spec.height] * 2 + [spec.depth * spec.width] * 2)
    counts = rng.multinomial(budget, areas / areas.sum())
    chunks = []
    for face, n in enumerate(counts):
        if n == 0:
            continue
        u = rng.uniform(-1.0, 1.0, size=(n, 2))
        axis, sign = divmod(face, 2)
        pts = np.empty((n, 3))
        free = [a for a in range(3) if a != axis]
        half = np.array([hx, hy, hz])
        pts[:, axis] = half[axis] * (1.0 if sign == 0 else -1.0)
        pts[:, free[0]] = u[:, 0] * half[free[0]]
        pts[:, free[1]] = u[:, 1] * half[free[1]]
        chunks.append(pts)
    xyz = np.concatenate(chunks)
    color = rng.uniform(0.0, 1.0, size=(budget, 1))
    return ObjectProxy(spec, np.hstack([xyz, color]))


# --------------------------------------------------------------------------
# Scene description


@dataclass(frozen=True)
class SceneDescription:
    rooms: tuple[Room, ...]
    connections: tuple[Connection, ...] = ()
    windows: tuple[WindowSpec, ...] = ()
    objects: tuple[ObjectSpec, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "rooms", tuple(self.rooms))
        object.__setattr__(self, "connections", tuple(self.connections))
        object.__setattr__(self, "windows", tuple(self.windows))
        object.__setattr__(self, "objects", tuple(self.objects))

    def room(self, name: str | None) -> Room:
        if name is None:
            return self.rooms[0]
        for r in self.rooms:
            if r.name == name:
                return r
        raise KeyError(name)

    def room_of(self, spec: ObjectSpec) -> Room:
        return self.room(spec.room)

    def door_spans(self) -> list[DoorSpan]:
        """Openings in wall lines, one per (connection, side)."""
        spans = []
        for conn in self.connections:
            if conn.is_exterior:
                name = conn.room_b if conn.room_a == EXTERIOR else conn.room_a
                room = self.room(name)
                axis, coord, lo, hi = _exterior_wall(self, room, conn)
                width = conn.width if conn.width is not None else hi - lo
                mid = conn.offset + lo if conn.offset is not None else (lo + hi) / 2.0
                spans.append(DoorSpan(conn, name, axis, coord, mid - width / 2, mid + width / 2, True))
            else:
                a, b = self.room(conn.room_a), self.room(conn.room_b)
                axis, coord, lo, hi = shared_wall(a, b)
                if conn.width is None:
                    s_lo, s_hi = lo, hi
                else:
                    mid = conn.offset + lo if conn.offset is not None else (lo + hi) / 2.0
                    s_lo, s_hi = mid - conn.width / 2, mid + conn.width / 2
                for name in (conn.room_a, conn.room_b):
                    spans.append(DoorSpan(conn, name, axis, coord, s_lo, s_hi, False))
        return spans

    def validate(self) -> None:
        validate_rooms(self.rooms)
        names = {r.name for r in self.rooms}
        if self.rooms and not any(c.is_exterior for c in self.connections):
            raise InvalidConnection("at least one connection must reach the exterior")
        for conn in self.connections:
            for name in (conn.room_a, conn.room_b):
                if name != EXTERIOR and name not in names:
                    raise InvalidConnection(f"connection references unknown room {name!r}")
            if conn.room_a == conn.room_b:
                raise InvalidConnection(f"connection joins {conn.room_a!r} to itself")
            if conn.room_a == EXTERIOR and conn.room_b == EXTERIOR:
                raise InvalidConnection("connection between exterior and exterior")
            if not conn.is_exterior:
                seg = shared_wall(self.room(conn.room_a), self.room(conn.room_b))
                if seg is None:
                    raise InvalidConnection(f"{conn.room_a!r} and {conn.room_b!r} share no wall")
                if conn.width is not None and seg[3] - seg[2] < conn.width - _EPS:
                    raise InvalidConnection(
                        f"shared wall of {conn.room_a!r}/{conn.room_b!r} is shorter than {conn.width:g} m"
                    )
        for span in self.door_spans():
            if span.exterior:
                room = self.room(span.room)
                _, _, lo, hi = room.wall(_wall_direction(room, span.axis, span.coord))
                if span.lo < lo - _EPS or span.hi > hi + _EPS:
                    raise InvalidConnection(f"door of {span.room!r} does not fit on its wall")
            else:
                seg = shared_wall(self.room(span.connection.room_a), self.room(span.connection.room_b))
                if span.lo < seg[2] - _EPS or span.hi > seg[3] + _EPS:
                    raise InvalidConnection(f"door between {span.connection.room_a!r} and "
                                            f"{span.connection.room_b!r} does not fit on the shared wall")
        by_room: dict[str, tuple[str, tuple[float, float]]] = {}
        for win in self.windows:
            if win.room not in names:
                raise InvalidWindow(f"window references unknown room {win.room!r}")
            room = self.room(win.room)
            if win.base_height + win.size[1] > room.wall_height + _EPS:
                raise InvalidWindow(f"window in {win.room!r} rises above the wall height")
            _, _, lo, hi = room.wall(win.wall_direction)
            if win.quantity * win.size[0] > hi - lo + _EPS:
                raise InvalidWindow(f"{win.quantity} windows do not fit on the {win.wall_direction} wall of {win.room!r}")
            key = (win.kind, win.size)
            if by_room.setdefault(win.room, key) != key:
                raise InvalidWindow(f"windows in {win.room!r} must share one type and size")
        for spec in self.objects:
            if spec.room is not None and spec.room not in names:
                raise ValidationError(f"object {spec.name!r} references unknown room {spec.room!r}")
        seen = set()
        for spec in self.objects:
            if spec.name in seen:
                raise DuplicateName(f"object name {spec.name!r} appears twice")
            seen.add(spec.name)

    def window_spans(self, room_name: str) -> list[tuple[str, float, float, float, float]]:
        """Windows of a room as ``(direction, lo, hi, z_lo, z_hi)``, evenly spread on their wall."""
        out = []
        for win in self.windows:
            if win.room != room_name:
                continue
            _, _, lo, hi = self.room(room_name).wall(win.wall_direction)
            step = (hi - lo) / win.quantity
            for k in range(win.quantity):
                mid = lo + step * (k + 0.5)
                out.append((win.wall_direction, mid - win.size[0] / 2, mid + win.size[0] / 2,
                            win.base_height, win.base_height + win.size[1]))
        return out


def _exterior_wall(scene: SceneDescription, room: Room, conn: Connection) -> tuple[str, float, float, float]:
    candidates = [conn.wall] if conn.wall else list(DIRECTIONS)
    for direction in candidates:
        axis, coord, lo, hi = room.wall(direction)
        blocked = False
        for other in scene.rooms:
            if other.name == room.name:
                continue
            seg = shared_wall(room, other)
            if seg is not None and seg[0] == axis and abs(seg[1] - coord) < _EPS:
                blocked = True
                break
        if not blocked or conn.wall:
            return axis, coord, lo, hi
    raise InvalidConnection(f"room {room.name!r} has no exterior wall for its door")


# --------------------------------------------------------------------------
# Scene files


def load_scene(doc: dict | str) -> tuple[SceneDescription, list[dict]]:
    """Build a validated scene from a scene-file document.

    Returns the scene and the raw placement-rule records (interpreted by the
    arranger). Floor plans may be given either as ``rooms`` records or as
    pipe-delimited ``floor_plan`` text.
    """
    if isinstance(doc, str):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise ParseError(f"scene JSON: {exc.msg} at line {exc.lineno} column {exc.colno}") from exc
    if not isinstance(doc, dict):
        raise ParseError("scene file must be a JSON object")
    wall_height = float(doc.get("wall_height", DEFAULT_WALL_HEIGHT))
    if "rooms" in doc:
        rooms = []
        for i, r in enumerate(doc["rooms"]):
            where = f"room #{i}"
            rooms.append(
                Room.from_corners(
                    str(_require(r, "name", where)),
                    str(r.get("floor_material", "")),
                    str(r.get("wall_material", "")),
                    _require(r, "corners", where),
                    float(r.get("wall_height", wall_height)),
                )
            )
    elif "floor_plan" in doc:
        rooms = parse_floor_plan(doc["floor_plan"], wall_height)
    else:
        raise MissingField("scene needs 'rooms' or 'floor_plan'")
    raw_conn = doc.get("connections", [])
    if isinstance(raw_conn, str):
        connections = parse_connections(raw_conn)
    else:
        connections = []
        for i, c in enumerate(raw_conn):
            where = f"connection #{i}"
            connections.append(
                _connection(
                    _require(c, "room_a", where),
                    _require(c, "room_b", where),
                    _require(c, "kind", where),
                    c.get("width", c.get("size")),
                    c.get("style", ""),
                    c.get("wall"),
                    c.get("offset"),
                )
            )
    raw_win = doc.get("windows", [])
    if isinstance(raw_win, str):
        windows = parse_windows(raw_win)
    else:
        windows = []
        for i, w in enumerate(raw_win):
            where = f"window #{i}"
            windows.append(
                _window(
                    _require(w, "room", where),
                    _require(w, "wall", where),
                    _require(w, "kind", where),
                    _require(w, "size", where),
                    int(w.get("quantity", 1)),
                    float(w.get("base_height", 90)),
                )
            )
    objects = parse_object_manifest(doc.get("objects", {}))
    scene = SceneDescription(tuple(rooms), tuple(connections), tuple(windows), tuple(objects))
    scene.validate()
    return scene, list(doc.get("rules", []))


def dump_scene(scene: SceneDescription, rules: Iterable[dict] = ()) -> dict:
    doc: dict[str, Any] = {
        "rooms": [
            {
                "name": r.name,
                "floor_material": r.floor_material,
                "wall_material": r.wall_material,
                "corners": [list(c) for c in r.corners],
                "wall_height": r.wall_height,
            }
            for r in scene.rooms
        ],
        "connections": [
            {k: v for k, v in {
                "room_a": c.room_a,
                "room_b": c.room_b,
                "kind": c.kind,
                "width": c.width,
                "style": c.style,
                "wall": c.wall,
                "offset": c.offset,
            }.items() if v is not None}
            for c in scene.connections
        ],
        "windows": [
            {
                "room": w.room,
                "wall": w.wall_direction,
                "kind": w.kind,
                "size": list(w.size_cm),
                "quantity": w.quantity,
                "base_height": _cm(w.base_height),
            }
            for w in scene.windows
        ],
        "objects": {s.name: dump_object_spec(s) for s in scene.objects},
    }
    rules = list(rules)
    if rules:
        doc["rules"] = rules
    return doc
