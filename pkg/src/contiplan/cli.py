"""Command line entry point: ``contiplan <command> ...`` (or ``python -m contiplan``)."""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from contiplan.controller import FORMATS, ControllerModel, save_dataset
from contiplan.harness import (
    METHODS,
    ablation_suite,
    desk_sweep,
    load_results,
    run_trial,
    suite,
    summarize,
    summary_csv,
    tau_sweep,
    train_desk_controller,
    write_outputs,
)
from contiplan.kinematics import ArmGeometry, default_geometry, tip_pose
from contiplan.occupancy import ARCHETYPES, SceneParams, SceneSpec, generate_scene, goal_candidates, rasterize_scene
from contiplan.planner import PlannerConfig, PlanningFailure, plan, shortcut


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    return int(os.environ.get("CONTIPLAN_SEED", "0"))


def _planner_cfg(args) -> PlannerConfig:
    cfg = PlannerConfig()
    if args.config:
        d = json.loads(Path(args.config).read_text())
        cfg = PlannerConfig.from_dict(d.get("planner", d))
    if getattr(args, "tau", None) is not None:
        cfg = replace(cfg, tau=args.tau)
    if getattr(args, "max_iterations", None) is not None:
        cfg = replace(cfg, max_iterations=args.max_iterations)
    return cfg


def _geometry(args) -> ArmGeometry:
    return ArmGeometry.load(args.geometry) if getattr(args, "geometry", None) else default_geometry()


def _controller(args, geometry):
    src = getattr(args, "model", None)
    if src is None or src == "oracle":
        return "oracle"
    if src == "train":
        return train_desk_controller(geometry, seed=_seed(args))
    return ControllerModel.load(src)


def _out(args) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _archetypes(args):
    if not args.archetype or "all" in args.archetype:
        return ARCHETYPES
    return tuple(args.archetype)


def cmd_scene_gen(args) -> int:
    geo = _geometry(args)
    spec = generate_scene(args.archetype[0] if args.archetype else "Open", _seed(args), SceneParams.for_geometry(geo))
    out = _out(args)
    path = out / f"{spec.scene_id}.json"
    path.write_text(spec.to_json())
    if args.grid:
        rasterize_scene(spec, args.voxel).export(out / f"{spec.scene_id}.grid")
    print(path)
    return 0


def _load_scene(args, geo) -> SceneSpec:
    if args.scene:
        return SceneSpec.from_json(Path(args.scene).read_text())
    return generate_scene(args.archetype[0] if args.archetype else "Open", _seed(args), SceneParams.for_geometry(geo))


def cmd_plan(args) -> int:
    geo = _geometry(args)
    spec = _load_scene(args, geo)
    cfg = _planner_cfg(args)
    grid = rasterize_scene(spec)
    cands = goal_candidates(spec.goal_position, 0.01, grid, home_tip=tip_pose(geo, geo.home()).translation)
    if not cands:
        print("no free goal candidate", file=sys.stderr)
        return 2
    try:
        p = plan(geo.home(), cands, grid, geo, cfg, seed=_seed(args))
    except PlanningFailure as exc:
        print(str(exc), file=sys.stderr)
        return 1
    if args.shortcut:
        p = shortcut(p, grid, geo, cfg, seed=_seed(args), n_attempts=args.shortcut)
    path = _out(args) / f"plan_{spec.scene_id}_tau{cfg.tau}.json"
    path.write_text(p.to_json())
    print(f"{len(p)} waypoints, cost {p.cost:.4f}, {p.iterations_used} iterations -> {path}")
    return 0


def cmd_train(args) -> int:
    geo = _geometry(args)
    out = _out(args)
    if args.dataset:
        save_dataset(desk_sweep(geo, _seed(args)), out / args.dataset)
    model = train_desk_controller(geo, seed=_seed(args), input_format=args.input_format, epochs=args.epochs)
    path = out / f"model_{args.input_format}.json"
    model.save(path)
    print(f"final loss {model.final_loss:.5f} -> {path}")
    return 0


def cmd_trial(args) -> int:
    geo = _geometry(args)
    spec = _load_scene(args, geo)
    method = args.method[0] if args.method else "Ours"
    r = run_trial(spec, method, _planner_cfg(args), _controller(args, geo), _seed(args), geo)
    print(json.dumps(r.canonical(), sort_keys=True))
    return 0


def _finish(args, results, summary, meta) -> int:
    paths = write_outputs(_out(args), results, summary, meta, fmt=args.format)
    sys.stdout.write(summary_csv(summary))
    print(f"results -> {paths['results']}")
    return 0


def cmd_suite(args) -> int:
    geo = _geometry(args)
    methods = tuple(args.method) if args.method else ("Ours",)
    results = suite(_archetypes(args), methods, args.trials, _seed(args), _planner_cfg(args),
                    _controller(args, geo), geo, workers=args.workers)
    return _finish(args, results, summarize(results), {"command": "suite"})


def cmd_sweep_tau(args) -> int:
    geo = _geometry(args)
    base = _seed(args)
    results, _ = tau_sweep(_archetypes(args), args.taus, range(base, base + args.trials), _planner_cfg(args),
                           _controller(args, geo), geo, workers=args.workers)
    return _finish(args, results, summarize(results, by_tau=True), {"command": "sweep-tau"})


def cmd_ablate(args) -> int:
    geo = _geometry(args)
    base = _seed(args)
    archetypes = None if not args.archetype else _archetypes(args)
    results, summary = ablation_suite(args.kind, range(base, base + args.trials), archetypes, _planner_cfg(args),
                                      _controller(args, geo), geo, workers=args.workers)
    return _finish(args, results, summary, {"command": "ablate", "kind": args.kind})


def cmd_report(args) -> int:
    results = load_results(args.results)
    summary = summarize(results, by_tau=args.by_tau)
    return _finish(args, results, summary, {"command": "report", "source": str(args.results)})


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="base seed (falls back to $CONTIPLAN_SEED, then 0)")
    common.add_argument("--config", help="JSON file with planner settings")
    common.add_argument("--geometry", help="arm geometry JSON (default: bundled arm)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--trials", type=int, default=11)
    common.add_argument("--tau", type=int, default=None)
    common.add_argument("--max-iterations", type=int, default=None)
    common.add_argument("--archetype", action="append", choices=list(ARCHETYPES) + ["all"])
    common.add_argument("--method", action="append", choices=METHODS)
    common.add_argument("--format", choices=("json", "csv"), default="json", help="results file format")
    common.add_argument("--model", help="controller: model file, 'oracle' (default) or 'train'")
    common.add_argument("--workers", type=int, default=1)

    p = argparse.ArgumentParser(prog="contiplan", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    scene = sub.add_parser("scene", help="scene utilities")
    scene_sub = scene.add_subparsers(dest="scene_command", required=True)
    gen = scene_sub.add_parser("gen", parents=[common], help="generate a scene spec")
    gen.add_argument("--grid", action="store_true", help="also export the rasterized grid")
    gen.add_argument("--voxel", type=float, default=0.01)
    gen.set_defaults(func=cmd_scene_gen)

    pl = sub.add_parser("plan", parents=[common], help="plan in one scene")
    pl.add_argument("--scene", help="scene spec JSON (default: generate from --archetype/--seed)")
    pl.add_argument("--shortcut", type=int, default=0, metavar="N", help="shortcut attempts after planning")
    pl.set_defaults(func=cmd_plan)

    tr = sub.add_parser("train", parents=[common], help="train the desk-scale controller")
    tr.add_argument("--input-format", choices=FORMATS, default="CurrentPlusRelative")
    tr.add_argument("--epochs", type=int, default=60)
    tr.add_argument("--dataset", help="also save the sweep under this file name (.csv or .jsonl)")
    tr.set_defaults(func=cmd_train)

    t = sub.add_parser("trial", parents=[common], help="run one end-to-end trial")
    t.add_argument("--scene")
    t.set_defaults(func=cmd_trial)

    s = sub.add_parser("suite", parents=[common], help="archetypes x methods x trials")
    s.set_defaults(func=cmd_suite)

    sw = sub.add_parser("sweep-tau", parents=[common], help="collision-threshold sweep")
    sw.add_argument("--taus", type=int, nargs="+", default=[0, 5, 12])
    sw.set_defaults(func=cmd_sweep_tau)

    ab = sub.add_parser("ablate", parents=[common], help="NoShape / RigidOnly / InputFormat ablations")
    ab.add_argument("--kind", choices=("NoShape", "RigidOnly", "InputFormat"), required=True)
    ab.set_defaults(func=cmd_ablate)

    rp = sub.add_parser("report", parents=[common], help="summarize an existing results file")
    rp.add_argument("results", help="results.jsonl")
    rp.add_argument("--by-tau", action="store_true")
    rp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
