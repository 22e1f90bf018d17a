"""Arrange the bundled bedroom, then show what the repair loops do to a
deliberately broken copy of it.

    python demos/arrange_bedroom.py [out_dir]
"""

import sys
from pathlib import Path

from roomforge import fixtures
from roomforge.arrange import Arranger
from roomforge.gridnav import rasterize
from roomforge.layout import Pose, collision_reward
from roomforge.render import floorplan_svg

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")
out.mkdir(parents=True, exist_ok=True)

scene, rules = fixtures.load("bedroom")
print(f"{len(scene.objects)} object kinds, {len(rules)} placement rules")
for r in rules:
    print("  ", r["subject"], r["relation"], r.get("target", ""))

arr = Arranger(scene, rules)
layout = arr.solve(seed=0)
print("\nsolved layout:", arr.rewards(layout))
for p in layout.top_level:
    print(f"  {p.id:<14} x={p.pose.x:5.2f} y={p.pose.y:5.2f}  yaw={p.pose.theta:4.2f}")
(out / "bedroom.svg").write_text(floorplan_svg(layout))

# Drop the dresser onto the bed. The collision term goes negative.
broken = layout.copy()
bed = broken.get("bed_0").pose
broken.replace(arr.move_group(broken, "dresser_0", Pose(bed.x, bed.y, 0.4, 0.0)))
print("\nafter dropping the dresser on the bed: R_coll =", round(collision_reward(broken), 4))

fixed = arr.repair_collisions(broken)
d = fixed.get("dresser_0").pose
print(f"collision repair moved it to ({d.x:.2f}, {d.y:.2f}); R_coll = {collision_reward(fixed)}")
print("removed:", fixed.removed or "nothing")

grid = rasterize(fixed.scene, fixed)
print(f"\nnavigation grid {grid.width}x{grid.height}, {int(grid.free.sum())} free cells, door at {grid.door_cells[0]}")
(out / "bedroom_grid.pgm").write_bytes(grid.to_pgm())
print("wrote", out / "bedroom.svg", "and", out / "bedroom_grid.pgm")
