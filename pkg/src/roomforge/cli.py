"""``roomforge`` command line: arrange, cameras, edit, itfs-check, rerun.

Every command writes ``config.json`` next to its outputs. Feeding that
file to ``roomforge rerun`` repeats the run and reproduces the outputs
byte for byte.

Exit codes: 0 ok, 1 parse error, 2 validation error, 3 invariant
violation, 4 edit rejected, 5 failed numeric check.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import fixtures
from .arrange import ArrangeConfig, Arranger, EditRejected, edit
from .camera import MODES, CameraParams, plan
from .distill import N_STEPS, CheckConfig, IntervalSchedule
from .distill import run_checks
from .gridnav import rasterize
from .layout import Pose, SceneLayout
from .render import floorplan_svg, overlay_svg
from .scene import ParseError, SceneError, ValidationError, load_scene, parse_object_manifest

logger = logging.getLogger("roomforge")

EXIT_OK, EXIT_PARSE, EXIT_INVALID, EXIT_INVARIANT, EXIT_REJECTED, EXIT_CHECK = range(6)
CONFIG_NAME = "config.json"


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _write(out: Path, name: str, data: str | bytes) -> None:
    path = out / name
    if isinstance(data, bytes):
        path.write_bytes(data)
    else:
        path.write_text(data)


def _read_json(path: str):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError(EXIT_PARSE, f"cannot read {path}: {exc.strerror}") from exc
    try:
        return json.loads(text), text
    except json.JSONDecodeError as exc:
        raise CliError(EXIT_PARSE, f"{path}: {exc.msg} at line {exc.lineno} column {exc.colno}") from exc


def _sha(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    return int(os.environ.get("ROOMFORGE_SEED", "0"))


def _arrange_config(args) -> ArrangeConfig:
    cfg = ArrangeConfig(cell_size=args.cell_size)
    if args.budget_iters is not None:
        cfg.collision_iters = args.budget_iters
        cfg.reach_iters = args.budget_iters
    cfg.seconds = getattr(args, "seconds", None)
    return cfg


def _budgets(cfg: ArrangeConfig) -> dict:
    return {"dfs_nodes": cfg.dfs_nodes, "collision_iters": cfg.collision_iters, "reach_iters": cfg.reach_iters}


def _run_config(command: str, args, inputs: dict, extra: dict) -> dict:
    doc = {"command": command, "inputs": inputs, "seed": _seed(args)}
    doc.update(extra)
    return doc


def _input(path: str) -> dict:
    return {"path": str(Path(path).resolve()), "sha256": _sha(Path(path).read_text())}


# ---------------------------------------------------------------------------


def cmd_arrange(args) -> int:
    doc, _ = _read_json(args.scene) if not args.scene.startswith("fixture:") else (
        fixtures.scene_doc(args.scene.split(":", 1)[1]), None)
    try:
        scene, rules = load_scene(doc)
        cfg = _arrange_config(args)
        arranger = Arranger(scene, rules, cfg)
    except ParseError as exc:
        raise CliError(EXIT_PARSE, f"parse error: {exc}") from exc
    except (ValidationError, ValueError) as exc:
        raise CliError(EXIT_INVALID, f"invalid scene: {exc}") from exc
    seed = _seed(args)
    layout = arranger.solve(seed)
    rewards = arranger.rewards(layout)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write(out, "layout.json", layout.to_json(rewards))
    _write(out, "floorplan.svg", floorplan_svg(layout))
    _write(out, "grid.pgm", arranger.grid(layout.placed).to_pgm())
    inputs = {"scene": args.scene} if args.scene.startswith("fixture:") else {"scene": _input(args.scene)}
    _write(out, CONFIG_NAME, _dump(_run_config("arrange", args, inputs, {
        "cell_size": cfg.cell_size, "budgets": _budgets(cfg), "budget_iters": args.budget_iters,
        "seconds": args.seconds})))
    print(f"placed {len(layout.placed)} removed {len(layout.removed)} "
          f"r_coll {rewards['r_coll']} reach_fraction {rewards['reach_fraction']}")
    if rewards["r_coll"] != 0 or rewards["reach_fraction"] != 1.0:
        raise CliError(EXIT_INVARIANT, "final layout is not valid")
    return EXIT_OK


def _load_layout(path: str) -> SceneLayout:
    doc, _ = _read_json(path)
    try:
        return SceneLayout.from_dict(doc)
    except ParseError as exc:
        raise CliError(EXIT_PARSE, f"parse error: {exc}") from exc
    except (SceneError, KeyError, TypeError, StopIteration) as exc:
        raise CliError(EXIT_INVALID, f"invalid layout: {exc!r}") from exc


def _camera_params(args) -> CameraParams:
    return CameraParams(turns=args.turns, poses_per_turn=args.poses_per_turn, eye_height=args.eye_height,
                        transfer_poses=args.transfer_poses)


def cmd_cameras(args) -> int:
    layout = _load_layout(args.layout)
    cfg = ArrangeConfig(cell_size=args.cell_size)
    arranger = Arranger(layout.scene, (), cfg)
    if not arranger.is_valid(layout):
        raise CliError(EXIT_INVALID, "layout is not valid (collisions or unreachable objects)")
    if args.room is not None:
        try:
            layout.scene.room(args.room)
        except KeyError as exc:
            raise CliError(EXIT_INVALID, f"unknown room {args.room!r}") from exc
    grid = rasterize(layout.scene, layout, args.cell_size)
    params = _camera_params(args)
    traj, skipped = plan(layout, grid, args.mode, _seed(args), params, args.room)
    for obj_id in skipped:
        logger.warning("no path to %s; skipped", obj_id)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write(out, "trajectory.json", traj.to_json())
    _write(out, "trajectory.csv", traj.to_csv())
    _write(out, "overlay.svg", overlay_svg(layout, traj))
    _write(out, CONFIG_NAME, _dump(_run_config("cameras", args, {"layout": _input(args.layout)}, {
        "cell_size": args.cell_size, "mode": args.mode, "room": args.room, "camera": params.as_dict()})))
    print(f"{args.mode}: {len(traj)} poses, {traj.phase_count('zoom_in')} approaches, {len(skipped)} skipped")
    return EXIT_OK


def _edit_op(doc: dict, layout: SceneLayout) -> dict:
    kind = doc.get("op")
    if kind == "insert":
        if "fixture" in doc:
            spec = parse_object_manifest(fixtures.scene_doc(doc["fixture"]))[0]
        else:
            specs = parse_object_manifest(doc["spec"])
            if len(specs) != 1:
                raise ParseError("insert needs exactly one object entry")
            spec = specs[0]
        return {"op": "insert", "spec": spec, "near": doc.get("near")}
    if kind == "reposition":
        return {"op": "reposition", "id": doc["id"], "pose": doc["pose"]}
    if kind == "delete":
        return {"op": "delete", "id": doc["id"]}
    raise ParseError(f"unknown edit op {kind!r}")


def cmd_edit(args) -> int:
    layout = _load_layout(args.layout)
    doc, _ = _read_json(args.edit)
    try:
        op = _edit_op(doc, layout)
    except (SceneError, KeyError) as exc:
        raise CliError(EXIT_PARSE, f"bad edit spec: {exc!r}") from exc
    cfg = _arrange_config(args)
    try:
        result = edit(layout, op, cfg, repair=not args.no_repair, seed=_seed(args))
    except EditRejected as exc:
        raise CliError(EXIT_REJECTED, f"edit rejected: {exc.reason}") from exc
    rewards = Arranger(result.scene, (), cfg).rewards(result)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write(out, "layout.json", result.to_json(rewards))
    _write(out, "floorplan.svg", floorplan_svg(result))
    _write(out, CONFIG_NAME, _dump(_run_config("edit", args, {"layout": _input(args.layout), "edit": _input(args.edit)}, {
        "cell_size": cfg.cell_size, "budgets": _budgets(cfg), "budget_iters": args.budget_iters,
        "seconds": args.seconds, "repair": not args.no_repair})))
    print(f"{op['op']}: placed {len(result.placed)} removed {len(result.removed)}")
    return EXIT_OK


def _schedule(args) -> IntervalSchedule:
    weights = None
    if args.weights:
        doc, _ = _read_json(args.weights)
        weights = np.asarray(doc, dtype=float)
        if weights.shape != (N_STEPS,):
            raise CliError(EXIT_PARSE, f"weight table needs {N_STEPS} entries")
    try:
        if args.intervals:
            sched = IntervalSchedule.parse(args.intervals, weights)
            if args.m is not None and args.m != sched.m:
                raise CliError(EXIT_INVALID, f"--m {args.m} disagrees with {sched.m} intervals")
            return sched
        return IntervalSchedule.even(args.m or 3, weights=weights)
    except ValueError as exc:
        raise CliError(EXIT_INVALID, f"bad schedule: {exc}") from exc


def cmd_itfs_check(args) -> int:
    sched = _schedule(args)
    cfg = CheckConfig(schedule=sched, weights=sched.weights, seed=_seed(args))
    report, curve = run_checks(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write(out, "report.json", _dump(report))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "distance", "closed_form"])
    for s, d, c in curve:
        w.writerow([s, repr(d), repr(c)])
    _write(out, "curves.csv", buf.getvalue())
    inputs = {"weights": _input(args.weights)} if args.weights else {}
    _write(out, CONFIG_NAME, _dump(_run_config("itfs-check", args, inputs, {
        "schedule": {"intervals": [list(iv) for iv in sched.intervals], "m": sched.m,
                     "weights": "table" if args.weights else "constant"}})))
    failed = [name for name, c in report["checks"].items() if not c["passed"]]
    for name, c in report["checks"].items():
        print(f"{'PASS' if c['passed'] else 'FAIL'} {name}")
    if failed:
        raise CliError(EXIT_CHECK, "failed checks: " + ", ".join(failed))
    return EXIT_OK


def cmd_rerun(args) -> int:
    doc, _ = _read_json(args.config)
    argv = config_to_argv(doc) + ["--out", args.out]
    return main(argv)


def config_to_argv(doc: dict) -> list[str]:
    """Command line equivalent to a written ``config.json``."""
    cmd = doc["command"]
    inp = doc.get("inputs", {})
    argv = [cmd, "--seed", str(doc["seed"])]

    def path(key):
        v = inp[key]
        return v if isinstance(v, str) else v["path"]

    if doc.get("seconds") is not None:
        argv += ["--seconds", repr(doc["seconds"])]
    if cmd == "arrange":
        argv += [path("scene"), "--cell-size", repr(doc["cell_size"])]
        if doc.get("budget_iters") is not None:
            argv += ["--budget-iters", str(doc["budget_iters"])]
    elif cmd == "cameras":
        cam = doc["camera"]
        argv += [path("layout"), "--mode", doc["mode"], "--cell-size", repr(doc["cell_size"]),
                 "--turns", str(cam["turns"]), "--poses-per-turn", str(cam["poses_per_turn"]),
                 "--eye-height", repr(cam["eye_height"]), "--transfer-poses", str(cam["transfer_poses"])]
        if doc.get("room") is not None:
            argv += ["--room", doc["room"]]
    elif cmd == "edit":
        argv += [path("layout"), path("edit"), "--cell-size", repr(doc["cell_size"])]
        if doc.get("budget_iters") is not None:
            argv += ["--budget-iters", str(doc["budget_iters"])]
        if not doc.get("repair", True):
            argv.append("--no-repair")
    elif cmd == "itfs-check":
        sched = doc["schedule"]
        argv += ["--intervals", ",".join(f"{a}:{b}" for a, b in sched["intervals"])]
        if "weights" in inp:
            argv += ["--weights", path("weights")]
    else:
        raise CliError(EXIT_PARSE, f"unknown command {cmd!r} in config")
    return argv


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="roomforge", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, cell=True):
        sp.add_argument("--seed", type=int, default=None, help="defaults to $ROOMFORGE_SEED or 0")
        sp.add_argument("--out", default="out")
        if cell:
            sp.add_argument("--cell-size", type=float, default=0.1)

    a = sub.add_parser("arrange", help="place the objects of a scene file")
    a.add_argument("scene", help="scene JSON, or fixture:<name>")
    a.add_argument("--budget-iters", type=int, default=None)
    a.add_argument("--seconds", type=float, default=None, help="extra wall-clock cap (not reproducible)")
    common(a)
    a.set_defaults(func=cmd_arrange)

    c = sub.add_parser("cameras", help="camera trajectory for a layout")
    c.add_argument("layout")
    c.add_argument("--mode", choices=MODES, default="hybrid")
    c.add_argument("--room", default=None)
    c.add_argument("--turns", type=int, default=2)
    c.add_argument("--poses-per-turn", type=int, default=60)
    c.add_argument("--eye-height", type=float, default=1.6)
    c.add_argument("--transfer-poses", type=int, default=10)
    common(c)
    c.set_defaults(func=cmd_cameras)

    e = sub.add_parser("edit", help="insert, delete or reposition an object")
    e.add_argument("layout")
    e.add_argument("edit", help="edit spec JSON")
    e.add_argument("--no-repair", action="store_true")
    e.add_argument("--budget-iters", type=int, default=None)
    e.add_argument("--seconds", type=float, default=None, help="extra wall-clock cap (not reproducible)")
    common(e)
    e.set_defaults(func=cmd_edit)

    i = sub.add_parser("itfs-check", help="numeric checks of the distillation estimators")
    i.add_argument("--m", type=int, default=None)
    i.add_argument("--intervals", default=None, help="lo:hi,lo:hi,...")
    i.add_argument("--weights", default=None, help="JSON list of 1000 weights")
    common(i, cell=False)
    i.set_defaults(func=cmd_itfs_check)

    r = sub.add_parser("rerun", help="repeat a run from its config.json")
    r.add_argument("config")
    r.add_argument("--out", default="out")
    r.set_defaults(func=cmd_rerun)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {exc!r}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
