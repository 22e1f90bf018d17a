"""Top-down SVG drawings of layouts and camera paths (100 px per meter, y up)."""

from __future__ import annotations

from .camera import Trajectory
from .geometry import footprint
from .layout import SceneLayout

PX = 100.0
MARGIN = 40.0
_FILL = {"floor": "#c9b79c", "wall": "#7fa7c9", "on_top": "#e8d36a"}
_PHASE = {"spiral": "#3465a4", "zoom_in": "#cc0000", "zoom_out": "#4e9a06"}


class _Canvas:
    def __init__(self, layout: SceneLayout):
        rooms = layout.scene.rooms
        self.x0 = min(r.xmin for r in rooms)
        self.y1 = max(r.ymax for r in rooms)
        self.w = (max(r.xmax for r in rooms) - self.x0) * PX + 2 * MARGIN
        self.h = (self.y1 - min(r.ymin for r in rooms)) * PX + 2 * MARGIN

    def pt(self, x: float, y: float) -> str:
        return f"{(x - self.x0) * PX + MARGIN:.2f},{(self.y1 - y) * PX + MARGIN:.2f}"


def _escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _body(layout: SceneLayout, cv: _Canvas) -> list[str]:
    out = []
    for r in layout.scene.rooms:
        pts = " ".join(cv.pt(x, y) for x, y in r.corners)
        out.append(f'<polygon points="{pts}" fill="#f7f4ee" stroke="#333" stroke-width="3"/>')
        cx, cy = cv.pt(*r.center).split(",")
        out.append(f'<text x="{cx}" y="{cy}" font-size="14" fill="#999" text-anchor="middle">{_escape(r.name)}</text>')
    for sp in layout.scene.door_spans():
        if sp.axis == "y":
            a, b = cv.pt(sp.lo, sp.coord), cv.pt(sp.hi, sp.coord)
        else:
            a, b = cv.pt(sp.coord, sp.lo), cv.pt(sp.coord, sp.hi)
        colour = "#f7f4ee" if sp.connection.kind == "open" else "#b5651d"
        out.append(f'<polyline points="{a} {b}" stroke="{colour}" stroke-width="5"/>')
    for r in layout.scene.rooms:
        for direction, lo, hi, _, _ in layout.scene.window_spans(r.name):
            axis, coord, _, _ = r.wall(direction)
            a, b = (cv.pt(lo, coord), cv.pt(hi, coord)) if axis == "y" else (cv.pt(coord, lo), cv.pt(coord, hi))
            out.append(f'<polyline points="{a} {b}" stroke="#6fb7ff" stroke-width="5"/>')
    for p in layout.placed:
        pts = " ".join(cv.pt(x, y) for x, y in footprint(p.box).vertices)
        out.append(f'<polygon points="{pts}" fill="{_FILL.get(p.mount, "#ccc")}" fill-opacity="0.8" '
                   f'stroke="#222" stroke-width="1"><title>{_escape(p.id)}</title></polygon>')
    for p in layout.top_level:
        x, y = cv.pt(p.pose.x, p.pose.y).split(",")
        out.append(f'<text x="{x}" y="{y}" font-size="9" text-anchor="middle">{_escape(p.id)}</text>')
    return out


def _wrap(cv: _Canvas, parts: list[str]) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{cv.w:.0f}" height="{cv.h:.0f}" '
            f'viewBox="0 0 {cv.w:.0f} {cv.h:.0f}">')
    return "\n".join([head, *parts, "</svg>"]) + "\n"


def floorplan_svg(layout: SceneLayout) -> str:
    cv = _Canvas(layout)
    return _wrap(cv, _body(layout, cv))


def overlay_svg(layout: SceneLayout, traj: Trajectory) -> str:
    """Floor plan with the camera path drawn on top, one polyline per segment."""
    cv = _Canvas(layout)
    parts = _body(layout, cv)
    runs: dict[int, list] = {}
    phase_of: dict[int, str] = {}
    for pose, ph, seg in zip(traj.poses, traj.phases, traj.segments):
        runs.setdefault(seg, []).append(pose)
        phase_of[seg] = ph
    for seg in sorted(runs):
        pts = " ".join(cv.pt(p.position[0], p.position[1]) for p in runs[seg])
        colour = _PHASE.get(phase_of[seg], "#555")
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{colour}" stroke-width="2"/>')
    return _wrap(cv, parts)
