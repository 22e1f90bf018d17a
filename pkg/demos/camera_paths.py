"""Plan the three camera modes through the solved workplace and compare them.

    python demos/camera_paths.py [out_dir]
"""

import math
import sys
from pathlib import Path

from roomforge import fixtures
from roomforge.arrange import Arranger
from roomforge.camera import MODES, plan, room_center
from roomforge.gridnav import rasterize
from roomforge.render import overlay_svg

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")
out.mkdir(parents=True, exist_ok=True)

scene, rules = fixtures.load("workplace")
layout = Arranger(scene, rules).solve(seed=0)
grid = rasterize(layout.scene, layout)
center = room_center(layout)
print("room center", tuple(round(v, 2) for v in center))

for mode in MODES:
    traj, skipped = plan(layout, grid, mode, seed=1)
    radii = [math.dist(p.position, center) for p, ph in zip(traj.poses, traj.phases) if ph == "spiral"]
    legs = {ph: traj.phase_count(ph) for ph in ("spiral", "zoom_in", "zoom_out")}
    print(f"\n{mode}: {len(traj)} poses, legs {legs}")
    if radii:
        print(f"  spiral radius {min(radii):.3f} .. {max(radii):.3f}")
    fov = [p.fovy for p in traj.poses]
    print(f"  fovy {min(fov):.1f} .. {max(fov):.1f}; skipped {skipped or 'none'}")
    (out / f"workplace_{mode}.svg").write_text(overlay_svg(layout, traj))
    (out / f"workplace_{mode}.csv").write_text(traj.to_csv())

# Zoom-in legs walk the dilated grid, so every position sits on a free cell.
traj, _ = plan(layout, grid, "hybrid", seed=1)
walk = [p for p, ph in zip(traj.poses, traj.phases) if ph == "zoom_in"]
print(f"\n{sum(grid.is_free(grid.cell_of(*p.position[:2])) for p in walk)}/{len(walk)} zoom-in poses on free cells")
