"""Insert a side table with three cups into the living room, move the sofa
into a wall, then delete the table.

    python demos/edit_living_room.py
"""

from roomforge import fixtures
from roomforge.arrange import Arranger, EditRejected, edit

scene, rules = fixtures.load("living_room")
layout = Arranger(scene, rules).solve(seed=0)
print("start:", len(layout.placed), "objects")

table = fixtures.table_with_cups()
layout = edit(layout, {"op": "insert", "spec": table})
t = next(p for p in layout.top_level if p.spec.name == table.name)
print(f"\ninserted {t.id} at ({t.pose.x:.2f}, {t.pose.y:.2f})")
for cup in layout.children_of(t.id):
    print(f"  {cup.id:<22} z={cup.box.z_range[0]:.3f} (table top {t.box.z_range[1]:.3f})")

sofa = next(p for p in layout.top_level if p.spec.name == "sofa")
into_wall = {"op": "reposition", "id": sofa.id, "pose": {"x": 0.0, "y": sofa.pose.y}}
try:
    edit(layout, into_wall, repair=False)
except EditRejected as exc:
    print("\nmoving the sofa into the wall without repair is rejected:", exc.reason)
moved = edit(layout, into_wall)
s = moved.get(sofa.id).pose
print(f"with repair it lands at ({s.x:.2f}, {s.y:.2f}) and nothing is dropped")

after = edit(moved, {"op": "delete", "id": t.id})
left = [p.id for p in after.placed if p.id.startswith(t.id)]
print("\ndeleted the table; leftovers:", left or "none", "| valid:", Arranger(after.scene, ()).is_valid(after))
