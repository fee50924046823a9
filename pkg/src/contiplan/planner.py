"""Shape-aware RRT* over hybrid configurations.

Every configuration the tree touches is checked along the whole backbone:
rigid-tagged points must be collision-free, soft-tagged points may touch at
most ``tau`` occupied voxels. Configurations are 8-vectors
``[j1..j6, kappa, phi]`` internally; :class:`~contiplan.kinematics.HybridConfig`
appears only at the API boundary.

Edge checks are conservative: edges are subdivided until no backbone point
moves more than ``max_point_travel`` between checked samples, and those
samples are counted against the grid dilated by ``safety_margin_voxels``.
Any configuration between two checked samples then has at most the counts
of its nearest sample, so plans survive re-validation at any finer
interpolation.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace
from typing import Sequence

import numpy as np
from scipy import ndimage
from scipy.optimize import brentq

from contiplan.ik import solve_dls
from contiplan.kinematics import (
    ArmGeometry,
    BackboneSampler,
    HybridConfig,
    hybrid_backbone,
    wrap_angle,
)
from contiplan.occupancy import GoalCandidate, OccupancyGrid

DEFAULT_WEIGHTS = (1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.25, 0.25)


class PlanningFailure(RuntimeError):
    """No goal connection within the iteration budget; the caller should replan."""

    def __init__(self, iterations: int, reason: str = "max_iterations reached"):
        super().__init__(f"planning failed after {iterations} iterations: {reason}")
        self.iterations = iterations
        self.reason = reason


@dataclass(frozen=True)
class CollisionStats:
    c_rigid: int
    c_soft: int

    def __post_init__(self):
        if self.c_rigid < 0 or self.c_soft < 0:
            raise ValueError("collision counts must be non-negative")

    @property
    def total(self) -> int:
        return self.c_rigid + self.c_soft


@dataclass(frozen=True)
class PlannerConfig:
    tau: int = 5
    n_backbone: int = 50
    step_size: float = 0.15
    goal_bias: float = 0.1
    rewire_radius: float | None = None
    max_iterations: int = 20000
    edge_check_resolution: float | None = None
    goal_tolerance_pos: float = 0.015
    goal_tolerance_angle: float = 0.35
    metric_weights: tuple = DEFAULT_WEIGHTS
    tau_mode: str = "per_config"
    safety_margin_voxels: int = 1
    max_point_travel: float = 0.012
    greedy_goal_extension: bool = True
    ik_pool_size: int = 4
    ik_attempts: int = 12

    def __post_init__(self):
        if not 0 <= self.tau <= self.n_backbone:
            raise ValueError(f"tau must lie in [0, {self.n_backbone}]")
        if self.n_backbone < 2:
            raise ValueError("n_backbone must be >= 2")
        if not 0.0 <= self.goal_bias <= 1.0:
            raise ValueError("goal_bias must be a probability")
        for name in ("step_size", "goal_tolerance_pos", "goal_tolerance_angle", "max_point_travel"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.rewire_radius is None:
            object.__setattr__(self, "rewire_radius", 2.0 * self.step_size)
        if self.edge_check_resolution is None:
            object.__setattr__(self, "edge_check_resolution", self.step_size / 4.0)
        if not self.rewire_radius > 0 or not self.edge_check_resolution > 0:
            raise ValueError("rewire_radius and edge_check_resolution must be > 0")
        if len(self.metric_weights) != 8:
            raise ValueError("metric_weights needs 8 entries")
        if self.tau_mode not in ("per_config", "per_path"):
            raise ValueError("tau_mode must be 'per_config' or 'per_path'")
        object.__setattr__(self, "metric_weights", tuple(float(w) for w in self.metric_weights))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["metric_weights"] = list(self.metric_weights)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PlannerConfig":
        d = dict(d)
        if "metric_weights" in d:
            d["metric_weights"] = tuple(d["metric_weights"])
        return cls(**d)


@dataclass
class Plan:
    waypoints: list
    stats: list
    cost: float
    iterations_used: int
    seed: int | None = None
    goal_index: int | None = None
    config: PlannerConfig | None = None
    method: str = "shape"

    def __len__(self) -> int:
        return len(self.waypoints)

    def vectors(self) -> np.ndarray:
        return np.array([w.to_vector() for w in self.waypoints])

    def to_dict(self) -> dict:
        return {
            "waypoints": [
                {"joints": list(w.rigid.joints), "kappa": w.soft.kappa, "phi": w.soft.phi,
                 "arc_length": w.soft.arc_length}
                for w in self.waypoints
            ],
            "stats": [{"c_rigid": s.c_rigid, "c_soft": s.c_soft} for s in self.stats],
            "cost": self.cost,
            "iterations_used": self.iterations_used,
            "seed": self.seed,
            "goal_index": self.goal_index,
            "method": self.method,
            "config": None if self.config is None else self.config.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "Plan":
        from contiplan.kinematics import RigidConfig, SoftConfig

        wps = [
            HybridConfig(RigidConfig(tuple(w["joints"])), SoftConfig(w["kappa"], w["phi"], w["arc_length"]))
            for w in d["waypoints"]
        ]
        return cls(
            waypoints=wps,
            stats=[CollisionStats(s["c_rigid"], s["c_soft"]) for s in d["stats"]],
            cost=float(d["cost"]),
            iterations_used=int(d["iterations_used"]),
            seed=d.get("seed"),
            goal_index=d.get("goal_index"),
            config=None if d.get("config") is None else PlannerConfig.from_dict(d["config"]),
            method=d.get("method", "shape"),
        )

    @classmethod
    def from_json(cls, text: str) -> "Plan":
        return cls.from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# metric and interpolation
# ---------------------------------------------------------------------------


def _distances(a: np.ndarray, b: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Weighted distance between config vectors; broadcasts over leading axes."""
    d = b - a
    kbar = 0.5 * (a[..., 6] + b[..., 6])
    dphi = wrap_angle(d[..., 7]) * kbar
    sq = np.sum((w[:6] * d[..., :6]) ** 2, axis=-1) + (w[6] * d[..., 6]) ** 2 + (w[7] * dphi) ** 2
    return np.sqrt(sq)


def config_distance(a: HybridConfig, b: HybridConfig, weights: Sequence[float] = DEFAULT_WEIGHTS) -> float:
    """Weighted Euclidean over joint deltas, curvature delta and curvature-scaled wrapped phi delta."""
    return float(_distances(a.to_vector(), b.to_vector(), np.asarray(weights, dtype=float)))


def _interpolate(a: np.ndarray, b: np.ndarray, t) -> np.ndarray:
    """Linear in joints and kappa, shorter arc in phi. ``t`` may be an array."""
    t = np.asarray(t, dtype=float)[..., None]
    d = b - a
    d[7] = wrap_angle(d[7])
    out = a + t * d
    out[..., 7] = wrap_angle(out[..., 7])
    return out


def _clamp(q: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    out = np.clip(q, lo, hi)
    out[..., 7] = wrap_angle(q[..., 7])
    return out


def steer(from_config: HybridConfig, toward: HybridConfig, step_size: float,
          geometry: ArmGeometry | None = None, weights: Sequence[float] = DEFAULT_WEIGHTS) -> HybridConfig:
    """Move from ``from_config`` toward ``toward`` by at most ``step_size``."""
    if not step_size > 0:
        raise ValueError("step_size must be > 0")
    a, b = from_config.to_vector(), toward.to_vector()
    q = _steer_vec(a, b, step_size, np.asarray(weights, dtype=float))
    if geometry is not None:
        lo, hi = geometry.config_bounds()
        q = _clamp(q, lo, hi)
    return HybridConfig.from_vector(q, from_config.soft.arc_length)


def _steer_vec(a, b, step, w):
    d = float(_distances(a, b, w))
    if d <= step:
        return b.copy()
    # the phi term is scaled by mean kappa, so distance is not linear in t; along the interpolation
    # it is t * sqrt(lin + (w7 * dphi * (ka + t * dk / 2))^2), which is monotone in t
    diff = b - a
    lin = float(np.sum((w[:7] * diff[:7]) ** 2))
    c = float(w[7] * wrap_angle(diff[7]))
    ka, dk = float(a[6]), float(diff[6])
    t = brentq(lambda t: t * math.sqrt(lin + (c * (ka + 0.5 * t * dk)) ** 2) - step, 0.0, 1.0, xtol=1e-12)
    return _interpolate(a, b, t)


# ---------------------------------------------------------------------------
# collision counting
# ---------------------------------------------------------------------------


def collision_count(grid: OccupancyGrid, geometry: ArmGeometry, config: HybridConfig,
                    n_backbone: int = 50) -> CollisionStats:
    """Occupied-voxel hits of the rigid- and soft-tagged backbone points."""
    sample = hybrid_backbone(geometry, config, n_backbone)
    hits = grid.occupied(sample.points)
    mask = sample.rigid_mask
    return CollisionStats(int(hits[mask].sum()), int(hits[~mask].sum()))


def feasible(stats: CollisionStats, tau: int) -> bool:
    """Rigid points strictly free, soft points at most ``tau`` contacts."""
    return stats.c_rigid == 0 and stats.c_soft <= tau


class CollisionChecker:
    """Batched backbone collision counts for one (grid, geometry) pair.

    ``tip_only`` restricts checking to the tip point, the way end-effector
    only planners do. ``margin_voxels`` dilates the grid used for decisions.
    """

    def __init__(self, grid: OccupancyGrid, geometry: ArmGeometry, cfg: PlannerConfig,
                 tip_only: bool = False):
        self.grid = grid
        self.geometry = geometry
        self.cfg = cfg
        self.tip_only = tip_only
        self.sampler = BackboneSampler(geometry, cfg.n_backbone)
        self.rigid_mask = self.sampler.rigid_mask
        self.tip_rigid = bool(self.rigid_mask[-1])
        k = int(cfg.safety_margin_voxels)
        if k > 0:
            cells = ndimage.binary_dilation(grid.cells, structure=np.ones((3, 3, 3), bool), iterations=k)
            self.check_grid = grid.with_cells(cells)
        else:
            self.check_grid = grid
        self.weights = np.asarray(cfg.metric_weights, dtype=float)
        self.lo, self.hi = geometry.config_bounds()

    def counts(self, q: np.ndarray, grid: OccupancyGrid | None = None):
        """(c_rigid, c_soft, points) for config vectors ``q`` (B, 8)."""
        grid = grid or self.check_grid
        pts = self.sampler.points(q)
        if self.tip_only:
            hit = grid.occupied(pts[:, -1])
            zero = np.zeros_like(hit, dtype=np.int64)
            if self.tip_rigid:
                return hit.astype(np.int64), zero, pts
            return zero, hit.astype(np.int64), pts
        hits = grid.occupied(pts)
        return hits[:, self.rigid_mask].sum(axis=1), hits[:, ~self.rigid_mask].sum(axis=1), pts

    def true_stats(self, q: np.ndarray) -> list[CollisionStats]:
        cr, cs, _ = self.counts(np.atleast_2d(q), self.grid)
        return [CollisionStats(int(a), int(b)) for a, b in zip(cr, cs)]

    def ok(self, cr, cs) -> np.ndarray:
        return (np.asarray(cr) == 0) & (np.asarray(cs) <= self.cfg.tau)

    def edge(self, a: np.ndarray, b: np.ndarray):
        """Check the open edge (a, b]; returns (feasible, worst c_rigid, worst c_soft)."""
        d = float(_distances(a, b, self.weights))
        if d == 0.0:
            cr, cs, _ = self.counts(a[None, :])
            return bool(self.ok(cr, cs)[0]), int(cr[0]), int(cs[0])
        n = max(1, int(math.ceil(d / self.cfg.edge_check_resolution)))
        for _ in range(4):
            ts = np.linspace(0.0, 1.0, n + 1)
            qs = _interpolate(a, b, ts)
            cr, cs, pts = self.counts(qs[1:])
            good = self.ok(cr, cs)
            if not good.all():
                return False, int(cr.max()), int(cs.max())
            a_pts = self.sampler.points(a[None, :])
            all_pts = np.concatenate([a_pts, pts], axis=0)
            travel = np.linalg.norm(np.diff(all_pts, axis=0), axis=-1).max()
            if travel <= self.cfg.max_point_travel:
                return True, int(cr.max()), int(cs.max())
            n = int(math.ceil(n * travel / self.cfg.max_point_travel * 1.1))
        return True, int(cr.max()), int(cs.max())


def edge_feasible(grid: OccupancyGrid, geometry: ArmGeometry, a: HybridConfig, b: HybridConfig,
                  cfg: PlannerConfig) -> tuple[bool, CollisionStats]:
    """Check every interpolated configuration between ``a`` and ``b``.

    Returns the verdict and the worst counts seen (against the checking grid,
    i.e. dilated when ``cfg.safety_margin_voxels > 0``).
    """
    checker = CollisionChecker(grid, geometry, cfg)
    qa, qb = a.to_vector(), b.to_vector()
    cr, cs, _ = checker.counts(qa[None, :])
    ok, wr, ws = checker.edge(qa, qb)
    ok = ok and bool(checker.ok(cr, cs)[0])
    return ok, CollisionStats(max(wr, int(cr[0])), max(ws, int(cs[0])))


# ---------------------------------------------------------------------------
# goal handling
# ---------------------------------------------------------------------------


def _tip_errors(tips: np.ndarray, goals: Sequence[GoalCandidate]):
    """Position and approach-angle errors, shape (B, G)."""
    pos = np.array([g.position for g in goals])
    app = np.array([g.approach_direction for g in goals])
    dp = np.linalg.norm(tips[:, None, :3, 3] - pos[None], axis=-1)
    cosang = np.clip(np.einsum("bi,gi->bg", tips[:, :3, 2], app), -1.0, 1.0)
    return dp, np.arccos(cosang)


class _GoalSampler:
    """Lazily built pools of IK solutions that put the tip on a goal candidate."""

    def __init__(self, goals, checker: CollisionChecker, rng, cfg: PlannerConfig):
        self.goals = goals
        self.checker = checker
        self.rng = rng
        self.cfg = cfg
        self.pools = [[] for _ in goals]
        self.attempts = [0] * len(goals)
        self.periodic = np.zeros(8, bool)
        self.periodic[7] = True

    def _solve(self, k: int, seed_q: np.ndarray):
        goal = self.goals[k]
        target = goal.position
        app = goal.approach_direction
        side = goal.pose.rotation[:, 0]
        sampler = self.checker.sampler

        # the full candidate frame is matched so final tip poses keep a predictable roll
        def residual(q):
            tips = sampler.tip(q)
            return np.concatenate(
                [tips[:, :3, 3] - target, 0.3 * (tips[:, :3, 2] - app), 0.1 * (tips[:, :3, 0] - side)], axis=1
            )

        def done(r):
            return (np.linalg.norm(r[:3]) < 0.004 and np.linalg.norm(r[3:6]) < 0.3 * 0.15
                    and np.linalg.norm(r[6:]) < 0.1 * 0.2)

        res = solve_dls(residual, seed_q, self.checker.lo, self.checker.hi, converged=done,
                        periodic=self.periodic, max_iter=60)
        return res.x if res.converged else None

    def sample(self, tree_q: np.ndarray, n_nodes: int):
        k = int(self.rng.integers(len(self.goals)))
        pool = self.pools[k]
        if len(pool) < self.cfg.ik_pool_size and self.attempts[k] < self.cfg.ik_attempts:
            self.attempts[k] += 1
            if self.attempts[k] == 1:
                seed_q = tree_q[0]
            elif self.rng.random() < 0.5:
                seed_q = tree_q[int(self.rng.integers(n_nodes))]
            else:
                seed_q = self.rng.uniform(self.checker.lo, self.checker.hi)
            q = self._solve(k, seed_q)
            if q is not None:
                cr, cs, _ = self.checker.counts(q[None, :])
                if self.checker.ok(cr, cs)[0]:
                    pool.append(q)
                    return q
        if pool:
            return pool[int(self.rng.integers(len(pool)))]
        return None


# ---------------------------------------------------------------------------
# RRT*
# ---------------------------------------------------------------------------


class _Tree:
    def __init__(self, root: np.ndarray, root_soft: int, capacity: int = 1024):
        self.q = np.empty((capacity, 8))
        self.cost = np.empty(capacity)
        self.parent = np.empty(capacity, dtype=np.int64)
        self.acc_soft = np.empty(capacity, dtype=np.int64)
        self.children: list[list[int]] = []
        self.n = 0
        self.add(root, -1, 0.0, root_soft)

    def add(self, q, parent, cost, acc_soft) -> int:
        if self.n == self.q.shape[0]:
            for name in ("q", "cost", "parent", "acc_soft"):
                arr = getattr(self, name)
                setattr(self, name, np.concatenate([arr, np.empty_like(arr)]))
        i = self.n
        self.q[i] = q
        self.parent[i] = parent
        self.cost[i] = cost
        self.acc_soft[i] = acc_soft
        self.children.append([])
        if parent >= 0:
            self.children[parent].append(i)
        self.n += 1
        return i

    def reparent(self, i: int, new_parent: int, new_cost: float, new_acc: int) -> None:
        old = int(self.parent[i])
        self.children[old].remove(i)
        self.children[new_parent].append(i)
        self.parent[i] = new_parent
        dc = new_cost - self.cost[i]
        da = new_acc - self.acc_soft[i]
        stack = [i]
        while stack:
            j = stack.pop()
            self.cost[j] += dc
            self.acc_soft[j] += da
            stack.extend(self.children[j])

    def path(self, i: int) -> list[int]:
        out = []
        while i >= 0:
            out.append(i)
            i = int(self.parent[i])
        return out[::-1]


def _plan(start: HybridConfig, goals: Sequence[GoalCandidate], grid: OccupancyGrid,
          geometry: ArmGeometry, cfg: PlannerConfig, seed: int, tip_only: bool) -> Plan:
    if not goals:
        raise ValueError("plan needs at least one goal candidate")
    checker = CollisionChecker(grid, geometry, cfg, tip_only=tip_only)
    rng = np.random.default_rng(seed)
    w = checker.weights
    lo, hi = checker.lo, checker.hi
    q0 = _clamp(start.to_vector(), lo, hi)
    if geometry.rigid_only:
        q0[6] = 0.0
    cr0, cs0, _ = checker.counts(q0[None, :], grid)
    if not checker.ok(cr0, cs0)[0]:
        raise ValueError("start configuration is infeasible")
    per_path = cfg.tau_mode == "per_path"
    tree = _Tree(q0, int(cs0[0]))
    goal_sampler = _GoalSampler(goals, checker, rng, cfg)

    def reached(q):
        tips = checker.sampler.tip(q[None, :])
        dp, ang = _tip_errors(tips, goals)
        ok = (dp[0] <= cfg.goal_tolerance_pos) & (ang[0] <= cfg.goal_tolerance_angle)
        return int(np.argmax(ok)) if ok.any() else None

    def insert(q_new, i_near):
        """Add q_new with the cheapest feasible parent among its neighbors; rewire around it."""
        cr, cs, _ = checker.counts(q_new[None, :])
        if not checker.ok(cr, cs)[0]:
            return None
        soft_here = int(cs[0])
        d_all = _distances(tree.q[: tree.n], q_new[None, :], w)
        near = np.flatnonzero(d_all <= cfg.rewire_radius)
        if i_near not in near:
            near = np.append(near, i_near)
        order = near[np.argsort(tree.cost[near] + d_all[near], kind="stable")]
        parent = -1
        for j in order:
            if per_path and tree.acc_soft[j] + soft_here > cfg.tau:
                continue
            ok, _, _ = checker.edge(tree.q[j], q_new)
            if ok:
                parent = int(j)
                break
        if parent < 0:
            return None
        new_cost = tree.cost[parent] + d_all[parent]
        i_new = tree.add(q_new, parent, new_cost, tree.acc_soft[parent] + soft_here)
        for j in near:
            j = int(j)
            if j == parent or j == 0:
                continue
            c = new_cost + d_all[j]
            if c >= tree.cost[j] - 1e-12:
                continue
            if per_path:
                own = tree.acc_soft[j] - tree.acc_soft[tree.parent[j]]
                if tree.acc_soft[i_new] + own > tree.acc_soft[j]:
                    continue
            ok, _, _ = checker.edge(q_new, tree.q[j])
            if ok:
                own = tree.acc_soft[j] - tree.acc_soft[tree.parent[j]]
                tree.reparent(j, i_new, c, tree.acc_soft[i_new] + own)
        return i_new

    def finish(i_goal, k_goal, iters):
        idx = tree.path(i_goal)
        qs = tree.q[idx].copy()
        wps = [HybridConfig.from_vector(q, geometry.soft_length) for q in qs]
        return Plan(
            waypoints=wps,
            stats=checker.true_stats(qs),
            cost=float(np.sum(_distances(qs[:-1], qs[1:], w))) if len(qs) > 1 else 0.0,
            iterations_used=iters,
            seed=seed,
            goal_index=k_goal,
            config=cfg,
            method="tip" if tip_only else "shape",
        )

    k = reached(q0)
    if k is not None:
        return finish(0, k, 0)

    for it in range(1, cfg.max_iterations + 1):
        biased = rng.random() < cfg.goal_bias
        target = goal_sampler.sample(tree.q, tree.n) if biased else None
        if target is None:
            biased = False
            target = rng.uniform(lo, hi)
        if geometry.rigid_only:
            target = target.copy()
            target[6] = 0.0
        d_all = _distances(tree.q[: tree.n], target[None, :], w)
        i_near = int(np.argmin(d_all))  # argmin returns the lowest index on ties
        while True:
            q_new = _clamp(_steer_vec(tree.q[i_near], target, cfg.step_size, w), lo, hi)
            i_new = insert(q_new, i_near)
            if i_new is None:
                break
            k = reached(q_new)
            if k is not None:
                return finish(i_new, k, it)
            if not (biased and cfg.greedy_goal_extension):
                break
            if float(_distances(q_new, target, w)) < 1e-9:
                break
            i_near = i_new
    raise PlanningFailure(cfg.max_iterations)


def plan(start: HybridConfig, goals: Sequence[GoalCandidate], grid: OccupancyGrid,
         geometry: ArmGeometry, cfg: PlannerConfig | None = None, seed: int = 0) -> Plan:
    """Shape-aware RRT* from ``start`` to any goal candidate tip pose.

    Raises :class:`PlanningFailure` when ``cfg.max_iterations`` samples pass
    without a goal connection.
    """
    return _plan(start, goals, grid, geometry, cfg or PlannerConfig(), seed, tip_only=False)


def plan_end_effector_only(start: HybridConfig, goals: Sequence[GoalCandidate], grid: OccupancyGrid,
                           geometry: ArmGeometry, cfg: PlannerConfig | None = None, seed: int = 0) -> Plan:
    """Same search, but collisions are only counted at the tip point."""
    return _plan(start, goals, grid, geometry, cfg or PlannerConfig(), seed, tip_only=True)


def shortcut(plan_in: Plan, grid: OccupancyGrid, geometry: ArmGeometry, cfg: PlannerConfig | None = None,
             seed: int = 0, n_attempts: int = 200, tip_only: bool | None = None) -> Plan:
    """Randomized shortcutting: splice out waypoints when a direct edge is feasible and cheaper."""
    cfg = cfg or plan_in.config or PlannerConfig()
    if len(plan_in) < 3:
        return plan_in
    if tip_only is None:
        tip_only = plan_in.method == "tip"
    checker = CollisionChecker(grid, geometry, cfg, tip_only=tip_only)
    w = checker.weights
    rng = np.random.default_rng(seed)
    qs = plan_in.vectors()
    for _ in range(n_attempts):
        if len(qs) < 3:
            break
        i, j = sorted(rng.choice(len(qs), size=2, replace=False))
        if j - i < 2:
            continue
        seg = float(np.sum(_distances(qs[i:j], qs[i + 1 : j + 1], w)))
        direct = float(_distances(qs[i], qs[j], w))
        if direct > seg + 1e-12:
            continue
        ok, _, _ = checker.edge(qs[i], qs[j])
        if ok:
            qs = np.concatenate([qs[: i + 1], qs[j:]], axis=0)
    wps = [plan_in.waypoints[0]] + [HybridConfig.from_vector(q, geometry.soft_length) for q in qs[1:-1]]
    wps.append(plan_in.waypoints[-1])
    cost = float(np.sum(_distances(qs[:-1], qs[1:], w)))
    return replace(plan_in, waypoints=wps, stats=checker.true_stats(qs), cost=cost)


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


@dataclass
class ValidationReport:
    checked: int
    violations: int
    rigid_violations: int
    max_c_rigid: int
    max_c_soft: int
    soft_contacts: int

    @property
    def ok(self) -> bool:
        return self.violations == 0


def validate_plan(plan_in: Plan, grid: OccupancyGrid, geometry: ArmGeometry, tau: int,
                  resolution: float, n_backbone: int = 50, factor: int = 10,
                  weights: Sequence[float] = DEFAULT_WEIGHTS) -> ValidationReport:
    """Re-check every waypoint and edge at ``resolution / factor`` using full-backbone counts."""
    w = np.asarray(weights, dtype=float)
    qs = plan_in.vectors()
    sampler = BackboneSampler(geometry, n_backbone)
    fine = resolution / factor
    samples = [qs[:1]]
    for a, b in zip(qs[:-1], qs[1:]):
        n = max(1, int(math.ceil(float(_distances(a, b, w)) / fine)))
        samples.append(_interpolate(a, b, np.arange(1, n + 1) / n))
    allq = np.concatenate(samples, axis=0)
    hits = grid.occupied(sampler.points(allq))
    cr = hits[:, sampler.rigid_mask].sum(axis=1)
    cs = hits[:, ~sampler.rigid_mask].sum(axis=1)
    bad = (cr > 0) | (cs > tau)
    soft_wp = sum(s.c_soft for s in plan_in.stats)
    return ValidationReport(
        checked=int(allq.shape[0]),
        violations=int(bad.sum()),
        rigid_violations=int((cr > 0).sum()),
        max_c_rigid=int(cr.max()),
        max_c_soft=int(cs.max()),
        soft_contacts=int(soft_wp),
    )
