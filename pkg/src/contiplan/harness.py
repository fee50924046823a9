"""Experiment runner: scene -> candidates -> plan -> execute -> metrics.

Canonical result files (JSON lines and CSV summaries) hold only
deterministic fields; wall-clock timings and host details go to a
``run_meta.json`` sidecar so reruns with the same seeds are byte-identical.
"""

from __future__ import annotations

import csv
import io
import json
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

import numpy as np

from contiplan.controller import (
    ControllerModel,
    LearnedController,
    OracleController,
    TrainConfig,
    collect_sweep,
    execute_waypoints,
    train,
)
from contiplan.kinematics import ArmGeometry, default_geometry, tip_pose
from contiplan.occupancy import (
    ARCHETYPES,
    SceneParams,
    SceneSpec,
    generate_scene,
    goal_candidates,
    rasterize_scene,
)
from contiplan.planner import (
    PlannerConfig,
    PlanningFailure,
    plan,
    plan_end_effector_only,
    validate_plan,
)

METHODS = ("Ours", "RigidOnly", "NoShape", "OracleController")
STANDOFF = 0.01
VOXEL = 0.01

# desk-scale sweep: shoulder, elbow and wrist pitch plus the chambers; wrist and flange roll held at 0
DESK_STEPS = (5, 4, 4, 1, 3, 1, 3, 3, 2)
DESK_RANGES = ((-1.0, 1.0), (-0.6, 0.9), (0.6, 2.4), (0.0, 0.0), (-1.2, 1.2), (0.0, 0.0))


@dataclass
class TrialResult:
    trial_index: int
    scene_id: str
    archetype: str
    seed: int
    method: str
    tau: int
    plan_found: bool
    success_2cm: bool
    success_touch: bool
    trans_err: float
    init_delta: float
    line_of_sight: bool
    rigid_contact_violations: int
    validator_violations: int
    soft_contacts: int
    exec_rigid_contacts: int
    n_waypoints: int
    plan_cost: float
    iterations: int
    times: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.trans_err < 0:
            raise ValueError("trans_err must be >= 0")
        if self.success_2cm and self.trans_err > 0.02:
            raise ValueError("success_2cm requires trans_err <= 0.02")

    def canonical(self) -> dict:
        """Deterministic fields only (no timings), floats rounded to 1e-12 m."""
        d = asdict(self)
        d.pop("times")
        for k in ("trans_err", "init_delta", "plan_cost"):
            d[k] = round(float(d[k]), 12)
        return d


@dataclass
class GroupSummary:
    archetype: str
    method: str
    n_trials: int
    sr_2cm: float
    sr_touch: float
    trans_err_mean: float
    trans_err_std: float
    init_delta_mean: float
    plan_found_rate: float
    violation_rate: float
    rigid_contact_violations: int
    soft_contacts: int
    tau: int | None = None


@dataclass
class MetricsSummary:
    groups: list

    def get(self, archetype: str, method: str, tau: int | None = None) -> GroupSummary:
        for g in self.groups:
            if g.archetype == archetype and g.method == method and (tau is None or g.tau == tau):
                return g
        raise KeyError((archetype, method, tau))

    @property
    def n_trials(self) -> int:
        return sum(g.n_trials for g in self.groups)


# ---------------------------------------------------------------------------
# controller preset
# ---------------------------------------------------------------------------


def desk_sweep(geometry: ArmGeometry, seed: int = 0, steps=DESK_STEPS):
    """The shipped ~4,300-sample sweep (jittered grid) over the reaching envelope."""
    lo = np.concatenate([[r[0] for r in DESK_RANGES], np.zeros(3)])
    hi = np.concatenate([[r[1] for r in DESK_RANGES], np.ones(3)])
    lo[:6] = np.clip(lo[:6], geometry.lower, geometry.upper)
    hi[:6] = np.clip(hi[:6], geometry.lower, geometry.upper)
    return collect_sweep(geometry, steps, seed=seed, ranges=(lo, hi), jitter=0.3)


def train_desk_controller(geometry: ArmGeometry | None = None, seed: int = 0,
                          input_format: str = "CurrentPlusRelative", epochs: int = 60) -> ControllerModel:
    geometry = geometry or default_geometry()
    data = desk_sweep(geometry, seed)
    return train(data, "mixed", TrainConfig(epochs=epochs, seed=seed, input_format=input_format), geometry)


# ---------------------------------------------------------------------------
# single trial
# ---------------------------------------------------------------------------


def line_of_sight(grid, tip, goal) -> bool:
    """Ray-march from tip to goal; clear if no occupied voxel is crossed."""
    return grid.segment_hits(tip, goal) == 0


def touches(grid, tip, goal) -> bool:
    """Tip within the goal voxel dilated by one voxel (26-neighbourhood)."""
    a = np.floor((np.asarray(tip) - grid.origin) / grid.voxel_size)
    b = np.floor((np.asarray(goal) - grid.origin) / grid.voxel_size)
    return bool(np.all(np.abs(a - b) <= 1))


def _controller_for(method: str, controller, geometry):
    if method == "OracleController" or controller is None or controller == "oracle":
        return OracleController(geometry)
    if isinstance(controller, ControllerModel):
        return LearnedController(controller)
    return controller


def run_trial(scene: SceneSpec, method: str, planner_cfg: PlannerConfig, controller=None, seed: int = 0,
              geometry: ArmGeometry | None = None, trial_index: int = 0, execute: bool = True,
              max_steps_per_waypoint: int = 10, keep_plan: bool = False):
    """One end-to-end trial. ``controller`` is a model, ``"oracle"``/None, or a callable.

    Returns a :class:`TrialResult`, or ``(TrialResult, Plan | None)`` with ``keep_plan``.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    geometry = geometry or default_geometry()
    geo = geometry.as_rigid_only() if method == "RigidOnly" else geometry
    times = {}
    t0 = time.perf_counter()
    grid = rasterize_scene(scene, VOXEL)
    home_tip = geo.home()
    start_tip = tip_pose(geo, home_tip).translation
    goal = np.asarray(scene.goal_position, dtype=float)
    cands = goal_candidates(goal, STANDOFF, grid, home_tip=start_tip)
    times["scene"] = time.perf_counter() - t0
    init_delta = float(np.linalg.norm(start_tip - goal))

    def result(**kw):
        base = dict(
            trial_index=trial_index, scene_id=scene.scene_id, archetype=scene.archetype, seed=seed,
            method=method, tau=planner_cfg.tau, plan_found=False, success_2cm=False, success_touch=False,
            trans_err=init_delta, init_delta=init_delta, line_of_sight=line_of_sight(grid, start_tip, goal),
            rigid_contact_violations=0, validator_violations=0, soft_contacts=0, exec_rigid_contacts=0,
            n_waypoints=0, plan_cost=0.0, iterations=0, times=times,
        )
        base.update(kw)
        return base

    p = None
    if not cands:
        out = TrialResult(**result())
        return (out, None) if keep_plan else out
    t0 = time.perf_counter()
    try:
        planner = plan_end_effector_only if method == "NoShape" else plan
        p = planner(geo.home(), cands, grid, geo, planner_cfg, seed=seed)
    except PlanningFailure as exc:
        times["plan"] = time.perf_counter() - t0
        out = TrialResult(**result(iterations=exc.iterations))
        return (out, None) if keep_plan else out
    times["plan"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    report = validate_plan(p, grid, geo, planner_cfg.tau, planner_cfg.edge_check_resolution,
                           planner_cfg.n_backbone, weights=planner_cfg.metric_weights)
    times["validate"] = time.perf_counter() - t0
    fields = dict(
        plan_found=True,
        validator_violations=report.violations,
        rigid_contact_violations=report.rigid_violations,
        soft_contacts=report.soft_contacts,
        n_waypoints=len(p),
        plan_cost=p.cost,
        iterations=p.iterations_used,
    )
    if execute:
        t0 = time.perf_counter()
        ctl = _controller_for(method, controller, geo)
        trace = execute_waypoints(p, ctl, geo, grid, tolerance=0.002,
                                  max_steps_per_waypoint=max_steps_per_waypoint, n_backbone=planner_cfg.n_backbone)
        times["execute"] = time.perf_counter() - t0
        tip = trace.final_tip
        err = float(np.linalg.norm(tip - goal))
        los = line_of_sight(grid, tip, goal)
        fields.update(
            trans_err=err,
            line_of_sight=los,
            success_2cm=bool(err <= 0.02 and los),
            success_touch=touches(grid, tip, goal),
            exec_rigid_contacts=int(sum(1 for s in trace.contacts if s.c_rigid > 0)),
        )
    out = TrialResult(**result(**fields))
    return (out, p) if keep_plan else out


# ---------------------------------------------------------------------------
# aggregation
# ---------------------------------------------------------------------------


def summarize(results: Sequence[TrialResult], success_threshold: float | None = None,
              by_tau: bool = False) -> MetricsSummary:
    """Group by (archetype, method[, tau]); rates in percent, population std of trans_err.

    ``success_threshold`` re-derives SR@2cm at another distance (line of
    sight still required).
    """
    if not results:
        raise ValueError("no results to summarize")
    groups: dict = {}
    for r in results:
        key = (r.archetype, r.method, r.tau if by_tau else None)
        groups.setdefault(key, []).append(r)
    order = {a: i for i, a in enumerate(ARCHETYPES)}
    morder = {m: i for i, m in enumerate(METHODS)}
    out = []
    for key in sorted(groups, key=lambda k: (order.get(k[0], 99), k[0], morder.get(k[1], 99), k[2] or 0)):
        rs = groups[key]
        if not rs:
            raise ValueError(f"empty group {key}")
        errs = np.array([r.trans_err for r in rs])
        if success_threshold is None:
            s2 = [r.success_2cm for r in rs]
        else:
            s2 = [r.trans_err <= success_threshold and r.line_of_sight for r in rs]
        found = [r for r in rs if r.plan_found]
        out.append(GroupSummary(
            archetype=key[0], method=key[1], n_trials=len(rs),
            sr_2cm=100.0 * float(np.mean(s2)),
            sr_touch=100.0 * float(np.mean([r.success_touch for r in rs])),
            trans_err_mean=float(errs.mean()),
            trans_err_std=float(errs.std(ddof=0)),
            init_delta_mean=float(np.mean([r.init_delta for r in rs])),
            plan_found_rate=100.0 * len(found) / len(rs),
            violation_rate=100.0 * (sum(r.validator_violations > 0 for r in found) / len(found) if found else 0.0),
            rigid_contact_violations=int(sum(r.rigid_contact_violations for r in rs)),
            soft_contacts=int(sum(r.soft_contacts for r in found)),
            tau=key[2],
        ))
    return MetricsSummary(out)


# ---------------------------------------------------------------------------
# suites
# ---------------------------------------------------------------------------


def trial_seed(suite_seed: int, trial_index: int) -> int:
    return int(np.random.SeedSequence([suite_seed, trial_index]).generate_state(1)[0])


@dataclass
class TrialSpec:
    index: int
    archetype: str
    seed: int
    method: str
    cfg: PlannerConfig


def _run_spec(args):
    spec, controller, geometry, execute, keep_plan, params = args
    scene = generate_scene(spec.archetype, spec.seed, params)
    return run_trial(scene, spec.method, spec.cfg, controller, spec.seed, geometry, spec.index,
                     execute=execute, keep_plan=keep_plan)


def run_specs(specs: Sequence[TrialSpec], controller=None, geometry=None, workers: int = 1,
              execute: bool = True, keep_plan: bool = False):
    """Run trial specs (optionally in a process pool); results come back sorted by trial index."""
    geometry = geometry or default_geometry()
    params = SceneParams.for_geometry(geometry)
    jobs = [(s, controller, geometry, execute, keep_plan, params) for s in specs]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            out = list(ex.map(_run_spec, jobs))
    else:
        out = [_run_spec(j) for j in jobs]
    key = (lambda r: r[0].trial_index) if keep_plan else (lambda r: r.trial_index)
    return sorted(out, key=key)


def suite(archetypes=ARCHETYPES, methods=("Ours",), trials: int = 11, suite_seed: int = 0,
          cfg: PlannerConfig | None = None, controller=None, geometry=None, workers: int = 1,
          execute: bool = True, per_scene_seeds: bool = False):
    """Cross product of archetypes x methods x trials.

    Trial ``k`` of each archetype uses scene seed ``trial_seed(suite_seed, k)``
    (or simply ``suite_seed + k`` with ``per_scene_seeds``), shared across
    methods so methods see identical scenes.
    """
    cfg = cfg or PlannerConfig()
    specs, idx = [], 0
    for a in archetypes:
        for k in range(trials):
            s = suite_seed + k if per_scene_seeds else trial_seed(suite_seed, k)
            for m in methods:
                specs.append(TrialSpec(idx, a, s, m, cfg))
                idx += 1
    return run_specs(specs, controller, geometry, workers, execute)


def tau_sweep(archetypes=ARCHETYPES, taus=(0, 5, 12), seeds: Sequence[int] = range(5),
              cfg: PlannerConfig | None = None, controller=None, geometry=None, workers: int = 1,
              execute: bool = True, keep_plan: bool = False):
    """Run every (tau, archetype, seed); returns (results, per-tau summary dict)."""
    cfg = cfg or PlannerConfig()
    specs, idx = [], 0
    for tau in taus:
        c = replace(cfg, tau=tau)
        for a in archetypes:
            for s in seeds:
                specs.append(TrialSpec(idx, a, int(s), "Ours", c))
                idx += 1
    results = run_specs(specs, controller, geometry, workers, execute, keep_plan)
    flat = [r[0] for r in results] if keep_plan else results
    per_tau = {tau: summarize([r for r in flat if r.tau == tau]) for tau in taus}
    return results, per_tau


def ablation_suite(kind: str, seeds: Sequence[int] = range(11), archetypes=None, cfg: PlannerConfig | None = None,
                   controller=None, geometry=None, workers: int = 1, execute: bool = True, **params):
    """NoShape / RigidOnly comparisons against Ours, or the controller input-format study.

    Returns ``(results, summary)``. For ``InputFormat`` the summary has one
    group per format (method field carries the format name) built from
    closed-loop reaching on Open scenes; ``params`` may pass ``models`` (a
    dict format -> model) to skip training.
    """
    cfg = cfg or PlannerConfig()
    geometry = geometry or default_geometry()
    if kind in ("NoShape", "RigidOnly"):
        archetypes = archetypes or (("Obstacle", "Clutter") if kind == "NoShape" else ("Holes",))
        specs, idx = [], 0
        for a in archetypes:
            for s in seeds:
                for m in ("Ours", kind):
                    specs.append(TrialSpec(idx, a, int(s), m, cfg))
                    idx += 1
        results = run_specs(specs, controller, geometry, workers, execute)
        return results, summarize(results)
    if kind == "InputFormat":
        from contiplan.controller import FORMATS

        models = params.get("models") or {
            f: train_desk_controller(geometry, params.get("train_seed", 0), f) for f in FORMATS
        }
        results = []
        scene_params = SceneParams.for_geometry(geometry)
        for f in FORMATS:
            for k, s in enumerate(seeds):
                scene = generate_scene("Open", int(s), scene_params)
                r = run_trial(scene, "Ours", cfg, models[f], int(s), geometry, trial_index=k)
                results.append(replace(r, method=f))
        summary = MetricsSummary([
            replace(g, method=f)
            for f in FORMATS
            for g in summarize([r for r in results if r.method == f]).groups
        ])
        return results, summary
    raise ValueError(f"unknown ablation kind {kind!r}")


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def results_jsonl(results: Sequence[TrialResult]) -> str:
    rows = sorted(results, key=lambda r: r.trial_index)
    return "".join(json.dumps(r.canonical(), sort_keys=True) + "\n" for r in rows)


def load_results(path) -> list[TrialResult]:
    out = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            out.append(TrialResult(**json.loads(line)))
    return out


SUMMARY_COLUMNS = ["archetype", "method", "tau", "n_trials", "SR@2cm (%)", "SR@Touch (%)", "Trans. Err mean (m)",
                   "Trans. Err std (m)", "Init. Delta (m)", "plan found (%)", "violation rate (%)",
                   "rigid contact violations", "soft contacts"]


def summary_csv(summary: MetricsSummary) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for g in summary.groups:
        w.writerow([g.archetype, g.method, "" if g.tau is None else g.tau, g.n_trials, f"{g.sr_2cm:.1f}",
                    f"{g.sr_touch:.1f}", f"{g.trans_err_mean:.6f}", f"{g.trans_err_std:.6f}",
                    f"{g.init_delta_mean:.6f}", f"{g.plan_found_rate:.1f}", f"{g.violation_rate:.1f}",
                    g.rigid_contact_violations, g.soft_contacts])
    return buf.getvalue()


def long_csv(summary: MetricsSummary) -> str:
    """Plot-ready long format: one (archetype, method, tau, metric, value) row per number."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["archetype", "method", "tau", "metric", "value"])
    for g in summary.groups:
        tau = "" if g.tau is None else g.tau
        for metric in ("sr_2cm", "sr_touch", "trans_err_mean", "trans_err_std", "init_delta_mean",
                       "plan_found_rate", "violation_rate"):
            w.writerow([g.archetype, g.method, tau, metric, f"{getattr(g, metric):.6f}"])
    return buf.getvalue()


def write_outputs(out_dir, results: Sequence[TrialResult], summary: MetricsSummary,
                  meta: dict | None = None, fmt: str = "json") -> dict:
    """Write canonical files plus the timing/host sidecar; returns the paths written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    if fmt == "json":
        paths["results"] = out / "results.jsonl"
        paths["results"].write_text(results_jsonl(results))
    else:
        paths["results"] = out / "results.csv"
        paths["results"].write_text(results_csv(results))
    paths["summary"] = out / "summary.csv"
    paths["summary"].write_text(summary_csv(summary))
    paths["long"] = out / "summary_long.csv"
    paths["long"].write_text(long_csv(summary))
    sidecar = {
        "written_at": datetime.now(timezone.utc).isoformat(),
        "host": platform.node(),
        "python": platform.python_version(),
        "times": {str(r.trial_index): r.times for r in results},
    }
    sidecar.update(meta or {})
    paths["meta"] = out / "run_meta.json"
    paths["meta"].write_text(json.dumps(sidecar, indent=2, default=str))
    return paths


def results_csv(results: Sequence[TrialResult]) -> str:
    rows = [r.canonical() for r in sorted(results, key=lambda r: r.trial_index)]
    buf = io.StringIO()
    if rows:
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    return buf.getvalue()
