"""Pose-to-actuation controller: sweep data, a residual MLP in numpy, closed-loop execution.

Actuations are 9-vectors: six rigid joint targets followed by three soft
chamber commands in [0, 1]. The simulated plant is instantaneous: an
actuation maps straight through the kinematics to a configuration.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from contiplan.ik import solve_dls
from contiplan.kinematics import (
    ArmGeometry,
    BackboneSampler,
    HybridConfig,
    Pose,
    soft_to_actuation,
)

FORMATS = ("CurrentPlusRelative", "GoalOnly", "CurrentPlusGoal", "RelativeOnly")
MODEL_VERSION = 1
N_ACT = 9


@dataclass(frozen=True)
class Actuation:
    rigid_targets: tuple
    soft_commands: tuple

    def __post_init__(self):
        r = tuple(float(x) for x in self.rigid_targets)
        s = tuple(float(x) for x in self.soft_commands)
        if len(r) != 6 or len(s) != 3:
            raise ValueError("actuation needs 6 rigid targets and 3 soft commands")
        if not all(math.isfinite(x) for x in r + s):
            raise ValueError("actuation values must be finite")
        if any(x < 0.0 or x > 1.0 for x in s):
            raise ValueError(f"soft commands must lie in [0, 1], got {s}")
        object.__setattr__(self, "rigid_targets", r)
        object.__setattr__(self, "soft_commands", s)

    def to_vector(self) -> np.ndarray:
        return np.array(self.rigid_targets + self.soft_commands)

    @classmethod
    def from_vector(cls, u) -> "Actuation":
        u = np.asarray(u, dtype=float)
        return cls(tuple(u[:6]), tuple(u[6:9]))

    def check_limits(self, geometry: ArmGeometry, tol: float = 1e-12) -> None:
        q = np.asarray(self.rigid_targets)
        if np.any(q < geometry.lower - tol) or np.any(q > geometry.upper + tol):
            raise ValueError("rigid targets outside joint limits")


@dataclass(frozen=True)
class PoseSample:
    pose: Pose
    actuation: Actuation


def actuation_limits(geometry: ArmGeometry) -> tuple[np.ndarray, np.ndarray]:
    lo = np.concatenate([geometry.lower, np.zeros(3)])
    hi = np.concatenate([geometry.upper, np.ones(3)])
    return lo, hi


def actuation_to_config_vectors(geometry: ArmGeometry, u: np.ndarray) -> np.ndarray:
    """Batched actuation (B, 9) -> configuration vectors (B, 8)."""
    u = np.atleast_2d(np.asarray(u, dtype=float))
    e = u[:, 6:9] - u[:, 6:9].mean(axis=1, keepdims=True)
    norm = np.linalg.norm(e, axis=1)
    phi = np.arctan2(math.sqrt(3.0) * (e[:, 1] - e[:, 2]), 2.0 * e[:, 0] - e[:, 1] - e[:, 2])
    kappa = np.minimum(geometry.actuation_gain * norm, geometry.kappa_limit)
    straight = norm < 1e-12
    phi = np.where(straight, 0.0, phi)
    kappa = np.where(straight, 0.0, kappa)
    return np.concatenate([u[:, :6], kappa[:, None], phi[:, None]], axis=1)


def actuation_to_config(geometry: ArmGeometry, actuation: Actuation) -> HybridConfig:
    q = actuation_to_config_vectors(geometry, actuation.to_vector()[None, :])[0]
    return HybridConfig.from_vector(q, geometry.soft_length)


def config_to_actuation(geometry: ArmGeometry, config: HybridConfig) -> Actuation:
    """Actuation whose plant configuration is ``config`` (curvature saturates if unreachable)."""
    kappa = min(config.soft.kappa, geometry.kappa_limit)
    try:
        soft = soft_to_actuation(kappa, config.soft.phi, geometry.actuation_gain)
    except ValueError:
        r = kappa / (geometry.actuation_gain * math.sqrt(1.5))
        e = r * np.cos(config.soft.phi - np.array([0.0, 2 * np.pi / 3, -2 * np.pi / 3]))
        e = e - e.min()
        soft = e / e.max()
    return Actuation(tuple(config.rigid.joints), tuple(np.clip(soft, 0.0, 1.0)))


class Plant:
    """Instantaneous simulated arm: actuation in, tip pose out."""

    def __init__(self, geometry: ArmGeometry, n_backbone: int = 50):
        self.geometry = geometry
        self.sampler = BackboneSampler(geometry, n_backbone)

    def tips(self, u: np.ndarray) -> np.ndarray:
        return self.sampler.tip(actuation_to_config_vectors(self.geometry, u))

    def tip(self, actuation: Actuation) -> Pose:
        return Pose.from_matrix(self.tips(actuation.to_vector()[None, :])[0])


# ---------------------------------------------------------------------------
# data collection
# ---------------------------------------------------------------------------


def collect_sweep(geometry: ArmGeometry, steps: Sequence[int], seed: int = 0, cap: int = 50000,
                  ranges: tuple | None = None, jitter: float = 0.0) -> list[PoseSample]:
    """Grid sweep over the nine actuation dimensions; last dimension varies fastest.

    ``ranges`` optionally narrows the swept box to ``(lo, hi)`` 9-vectors
    inside the actuation limits. ``jitter`` moves every grid point by a
    seeded uniform fraction of its cell width.
    """
    steps = [int(s) for s in steps]
    if len(steps) != N_ACT:
        raise ValueError("need one step count per actuation dimension")
    if any(s < 1 for s in steps):
        raise ValueError("step counts must be >= 1")
    total = math.prod(steps)
    if total > cap:
        raise ValueError(f"sweep of {total} samples exceeds cap {cap}")
    lim_lo, lim_hi = actuation_limits(geometry)
    lo, hi = (lim_lo, lim_hi) if ranges is None else (np.asarray(ranges[0], float), np.asarray(ranges[1], float))
    if np.any(lo < lim_lo - 1e-12) or np.any(hi > lim_hi + 1e-12) or np.any(lo > hi):
        raise ValueError("sweep ranges must lie inside the actuation limits")
    axes = [np.linspace(lo[i], hi[i], steps[i]) if steps[i] > 1 else np.array([lo[i]]) for i in range(N_ACT)]
    u = np.array(list(itertools.product(*axes)))
    if jitter > 0:
        width = np.where(np.array(steps) > 1, (hi - lo) / np.maximum(np.array(steps) - 1, 1), 0.0)
        rng = np.random.default_rng(seed)
        u = np.clip(u + rng.uniform(-jitter, jitter, u.shape) * width, lo, hi)
    tips = Plant(geometry).tips(u)
    return [PoseSample(Pose.from_matrix(t), Actuation.from_vector(a)) for t, a in zip(tips, u)]


def samples_to_arrays(data: Sequence[PoseSample]) -> tuple[np.ndarray, np.ndarray]:
    poses = np.array([s.pose.as_matrix() for s in data])
    acts = np.array([s.actuation.to_vector() for s in data])
    return poses, acts


CSV_COLUMNS = ["j1", "j2", "j3", "j4", "j5", "j6", "c1", "c2", "c3", "x", "y", "z"] + [
    f"r{i}{j}" for i in range(3) for j in range(3)
]


def save_dataset(data: Sequence[PoseSample], path) -> None:
    """CSV (``.csv``) or JSON lines (anything else). CSV columns are ``CSV_COLUMNS``."""
    path = Path(path)
    if path.suffix == ".csv":
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_COLUMNS)
            for s in data:
                r = s.pose.rotation.reshape(-1)
                w.writerow([repr(float(v)) for v in (*s.actuation.to_vector(), *s.pose.translation, *r)])
        return
    with open(path, "w") as fh:
        for s in data:
            fh.write(json.dumps({
                "actuation": {"rigid_targets": list(s.actuation.rigid_targets),
                              "soft_commands": list(s.actuation.soft_commands)},
                "pose": {"translation": s.pose.translation.tolist(), "rotation": s.pose.rotation.tolist()},
            }) + "\n")


def load_dataset(path) -> list[PoseSample]:
    path = Path(path)
    out = []
    if path.suffix == ".csv":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if rows[0] != CSV_COLUMNS:
            raise ValueError(f"unexpected dataset header in {path}")
        for row in rows[1:]:
            v = np.array([float(x) for x in row])
            out.append(PoseSample(Pose(v[12:21].reshape(3, 3), v[9:12]), Actuation.from_vector(v[:9])))
        return out
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            d = json.loads(line)
            a = d["actuation"]
            out.append(PoseSample(Pose.from_dict(d["pose"]), Actuation(a["rigid_targets"], a["soft_commands"])))
    return out


# ---------------------------------------------------------------------------
# features
# ---------------------------------------------------------------------------


def encode_poses(T: np.ndarray) -> np.ndarray:
    """(N, 4, 4) -> (N, 9): translation then the first two rotation columns."""
    return np.concatenate([T[:, :3, 3], T[:, :3, 0], T[:, :3, 1]], axis=1)


def _relative(Tc: np.ndarray, Tg: np.ndarray) -> np.ndarray:
    Rc = Tc[:, :3, :3]
    out = np.zeros_like(Tg)
    out[:, :3, :3] = np.einsum("nji,njk->nik", Rc, Tg[:, :3, :3])
    out[:, :3, 3] = np.einsum("nji,nj->ni", Rc, Tg[:, :3, 3] - Tc[:, :3, 3])
    out[:, 3, 3] = 1.0
    return out


def input_size(fmt: str) -> int:
    _check_format(fmt)
    return 9 if fmt in ("GoalOnly", "RelativeOnly") else 18


def _check_format(fmt: str) -> None:
    if fmt not in FORMATS:
        raise ValueError(f"unknown input format {fmt!r}; expected one of {FORMATS}")


def features(Tc: np.ndarray, Tg: np.ndarray, fmt: str) -> np.ndarray:
    """Batched raw (unnormalized) controller inputs."""
    _check_format(fmt)
    if fmt == "GoalOnly":
        return encode_poses(Tg)
    if fmt == "CurrentPlusGoal":
        return np.concatenate([encode_poses(Tc), encode_poses(Tg)], axis=1)
    rel = encode_poses(_relative(Tc, Tg))
    if fmt == "RelativeOnly":
        return rel
    return np.concatenate([encode_poses(Tc), rel], axis=1)


def build_input(current: Pose, goal: Pose, fmt: str = "CurrentPlusRelative") -> np.ndarray:
    """Raw feature vector for one (current, goal) pair; the model normalizes it."""
    return features(current.as_matrix()[None], goal.as_matrix()[None], fmt)[0]


# ---------------------------------------------------------------------------
# network
# ---------------------------------------------------------------------------


@dataclass
class TrainConfig:
    batch_size: int = 256
    learning_rate: float = 1e-3
    epochs: int = 60
    seed: int = 0
    hidden_size: int = 256
    n_layers: int = 6
    input_format: str = "CurrentPlusRelative"
    pairs_per_epoch: int | None = None
    optimizer: str = "adam"
    lr_decay: float = 0.05
    local_fraction: float = 0.5
    n_neighbors: int = 16

    def __post_init__(self):
        for name in ("batch_size", "epochs", "hidden_size", "n_layers", "n_neighbors"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.n_layers < 2 or (self.n_layers - 2) % 2:
            raise ValueError("n_layers must be 2 plus a whole number of 2-layer residual blocks")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError("optimizer must be 'adam' or 'sgd'")
        if not 0.0 < self.lr_decay <= 1.0:
            raise ValueError("lr_decay must lie in (0, 1]")
        if not 0.0 <= self.local_fraction <= 1.0:
            raise ValueError("local_fraction must lie in [0, 1]")
        _check_format(self.input_format)

    @classmethod
    def paper_preset(cls, **kw) -> "TrainConfig":
        """Full-size reference setting (20 layers, hidden 15000, batch 2000, lr 1e-4)."""
        return cls(batch_size=2000, learning_rate=1e-4, hidden_size=15000, n_layers=20, **kw)


def layer_shapes(n_in: int, hidden: int, n_layers: int, n_out: int = N_ACT) -> list[tuple[int, int]]:
    """Input layer, residual blocks contracting to hidden/2 and back, output layer."""
    mid = max(1, hidden // 2)
    shapes = [(n_in, hidden)]
    for _ in range((n_layers - 2) // 2):
        shapes += [(hidden, mid), (mid, hidden)]
    shapes.append((hidden, n_out))
    return shapes


def init_params(shapes, rng) -> list:
    params = []
    n_blocks = (len(shapes) - 2) // 2
    for k, (a, b) in enumerate(shapes):
        scale = 1.0 / math.sqrt(a)
        if 1 <= k <= 2 * n_blocks and k % 2 == 0:
            scale *= 0.5  # second layer of each block starts small so blocks begin near identity
        params.append([rng.normal(0.0, scale, (a, b)), np.zeros(b)])
    return params


def forward(params, x, keep: bool = False):
    """MLP forward pass on normalized inputs; returns outputs (and the cache if ``keep``)."""
    W, b = params[0]
    h = np.tanh(x @ W + b)
    cache = [(x, h)]
    n_blocks = (len(params) - 2) // 2
    for k in range(n_blocks):
        W1, b1 = params[1 + 2 * k]
        W2, b2 = params[2 + 2 * k]
        z = np.tanh(h @ W1 + b1)
        cache.append((h, z))
        h = h + z @ W2 + b2
    W, b = params[-1]
    y = h @ W + b
    cache.append(h)
    return (y, cache) if keep else y


def backward(params, cache, dy) -> list:
    """Gradients of sum(dy * y) with respect to every (W, b)."""
    grads = [None] * len(params)
    h = cache[-1]
    W, _ = params[-1]
    grads[-1] = [h.T @ dy, dy.sum(axis=0)]
    dh = dy @ W.T
    n_blocks = (len(params) - 2) // 2
    for k in reversed(range(n_blocks)):
        h_in, z = cache[1 + k]
        W1, _ = params[1 + 2 * k]
        W2, _ = params[2 + 2 * k]
        grads[2 + 2 * k] = [z.T @ dh, dh.sum(axis=0)]
        dz = (dh @ W2.T) * (1.0 - z * z)
        grads[1 + 2 * k] = [h_in.T @ dz, dz.sum(axis=0)]
        dh = dh + dz @ W1.T
    x, h0 = cache[0]
    da = dh * (1.0 - h0 * h0)
    grads[0] = [x.T @ da, da.sum(axis=0)]
    return grads


def mse_loss(params, x, target) -> float:
    """Mean over samples of the squared actuation error, the training objective."""
    r = forward(params, x) - target
    return float(np.mean(np.sum(r * r, axis=1)))


def loss_and_grad(params, x, target):
    y, cache = forward(params, x, keep=True)
    r = y - target
    n = x.shape[0]
    loss = float(np.sum(r * r) / n)
    return loss, backward(params, cache, 2.0 * r / n)


@dataclass
class ControllerModel:
    input_format: str
    params: list
    in_mean: np.ndarray
    in_scale: np.ndarray
    out_mean: np.ndarray
    out_scale: np.ndarray
    act_lo: np.ndarray
    act_hi: np.ndarray
    final_loss: float = float("nan")
    history: list = field(default_factory=list)

    def __post_init__(self):
        _check_format(self.input_format)
        sizes = self.layer_sizes
        for (_, b), (c, _) in zip(sizes[:-1], sizes[1:]):
            if b != c:
                raise ValueError("layer dimensions do not chain")
        if len(sizes) < 2 or len(sizes) % 2:
            raise ValueError("expected input layer, 2-layer residual blocks and output layer")
        if sizes[0][0] != input_size(self.input_format) or sizes[-1][1] != N_ACT:
            raise ValueError("layer sizes do not match the input format / actuation size")
        if np.any(self.in_scale <= 0) or np.any(self.out_scale <= 0):
            raise ValueError("normalization scales must be positive")

    @property
    def layer_sizes(self) -> list[tuple[int, int]]:
        return [tuple(W.shape) for W, _ in self.params]

    def normalize(self, x):
        return (x - self.in_mean) / self.in_scale

    def denormalize_output(self, y):
        return y * self.out_scale + self.out_mean

    def normalize_output(self, u):
        return (u - self.out_mean) / self.out_scale

    def predict_raw(self, Tc: np.ndarray, Tg: np.ndarray) -> np.ndarray:
        """Batched unclamped actuation predictions."""
        x = self.normalize(features(Tc, Tg, self.input_format))
        return self.denormalize_output(forward(self.params, x))

    def clamp(self, u):
        return np.clip(u, self.act_lo, self.act_hi)

    def to_dict(self) -> dict:
        return {
            "format_version": MODEL_VERSION,
            "input_format": self.input_format,
            "layers": [{"W": W.tolist(), "b": b.tolist()} for W, b in self.params],
            "in_mean": self.in_mean.tolist(),
            "in_scale": self.in_scale.tolist(),
            "out_mean": self.out_mean.tolist(),
            "out_scale": self.out_scale.tolist(),
            "act_lo": self.act_lo.tolist(),
            "act_hi": self.act_hi.tolist(),
            "final_loss": self.final_loss,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ControllerModel":
        if d.get("format_version") != MODEL_VERSION:
            raise ValueError(f"model file version {d.get('format_version')!r}, expected {MODEL_VERSION}")
        arr = lambda k: np.asarray(d[k], dtype=float)  # noqa: E731
        return cls(
            input_format=d["input_format"],
            params=[[np.asarray(l["W"], float), np.asarray(l["b"], float)] for l in d["layers"]],
            in_mean=arr("in_mean"), in_scale=arr("in_scale"),
            out_mean=arr("out_mean"), out_scale=arr("out_scale"),
            act_lo=arr("act_lo"), act_hi=arr("act_hi"),
            final_loss=float(d.get("final_loss", float("nan"))),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "ControllerModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _safe_scale(x: np.ndarray) -> np.ndarray:
    s = x.std(axis=0)
    return np.where(s > 1e-12, s, 1.0)


class TrainingDiverged(FloatingPointError):
    pass


def make_pairs(acts: np.ndarray, n_pairs: int, rng, local_fraction: float, n_neighbors: int):
    """(current, goal) index pairs: a mix of nearest-neighbour pairs in actuation space and random pairs."""
    n = acts.shape[0]
    i = rng.integers(n, size=n_pairs)
    j = rng.integers(n, size=n_pairs)
    n_local = int(round(local_fraction * n_pairs))
    if n_local and n > 1:
        k = min(n_neighbors, n)
        scaled = acts / _safe_scale(acts)
        _, nbr = cKDTree(scaled).query(scaled, k=k)
        nbr = nbr.reshape(n, k)
        pick = rng.integers(k, size=n_local)
        j[:n_local] = nbr[i[:n_local], pick]
    return i, j


def train(data: Sequence[PoseSample], goal_pairing: str = "mixed", cfg: TrainConfig | None = None,
          geometry: ArmGeometry | None = None) -> ControllerModel:
    """Fit the pose-to-actuation network with a mean-squared actuation loss.

    ``goal_pairing`` is ``"random"`` (current and goal drawn independently),
    ``"local"`` (goal among the current sample's nearest neighbours in
    actuation space) or ``"mixed"`` (``cfg.local_fraction`` local, rest random).
    The label is always the goal sample's actuation.
    """
    cfg = cfg or TrainConfig()
    if len(data) < cfg.batch_size:
        raise ValueError(f"need at least batch_size={cfg.batch_size} samples, got {len(data)}")
    frac = {"random": 0.0, "local": 1.0, "mixed": cfg.local_fraction}.get(goal_pairing)
    if frac is None:
        raise ValueError(f"unknown goal pairing {goal_pairing!r}")
    poses, acts = samples_to_arrays(data)
    rng = np.random.default_rng(cfg.seed)
    n_pairs = cfg.pairs_per_epoch or 4 * len(data)

    # normalization statistics from one representative pairing
    i, j = make_pairs(acts, min(n_pairs, 20000), rng, frac, cfg.n_neighbors)
    x_ref = features(poses[i], poses[j], cfg.input_format)
    in_mean, in_scale = x_ref.mean(axis=0), _safe_scale(x_ref)
    out_mean, out_scale = acts.mean(axis=0), _safe_scale(acts)
    if geometry is not None:
        act_lo, act_hi = actuation_limits(geometry)
    else:
        act_lo = np.concatenate([np.full(6, -np.pi), np.zeros(3)])
        act_hi = np.concatenate([np.full(6, np.pi), np.ones(3)])

    shapes = layer_shapes(x_ref.shape[1], cfg.hidden_size, cfg.n_layers)
    params = init_params(shapes, rng)
    m = [[np.zeros_like(W), np.zeros_like(b)] for W, b in params]
    v = [[np.zeros_like(W), np.zeros_like(b)] for W, b in params]
    b1, b2, eps = 0.9, 0.999, 1e-8
    step = 0
    n_steps = cfg.epochs * max(1, n_pairs // cfg.batch_size)
    history = []
    for epoch in range(cfg.epochs):
        i, j = make_pairs(acts, n_pairs, rng, frac, cfg.n_neighbors)
        x_all = (features(poses[i], poses[j], cfg.input_format) - in_mean) / in_scale
        t_all = (acts[j] - out_mean) / out_scale
        total = 0.0
        for s in range(0, n_pairs - cfg.batch_size + 1, cfg.batch_size):
            loss, grads = loss_and_grad(params, x_all[s : s + cfg.batch_size], t_all[s : s + cfg.batch_size])
            if not math.isfinite(loss):
                raise TrainingDiverged(f"loss became {loss} at epoch {epoch}, step {step}")
            total += loss
            step += 1
            # cosine decay from lr to lr * lr_decay
            lr = cfg.learning_rate * (cfg.lr_decay + (1 - cfg.lr_decay) * 0.5 * (1 + math.cos(math.pi * step / n_steps)))
            for p, g, mm, vv in zip(params, grads, m, v):
                for k in range(2):
                    if cfg.optimizer == "sgd":
                        p[k] -= lr * g[k]
                        continue
                    mm[k] = b1 * mm[k] + (1 - b1) * g[k]
                    vv[k] = b2 * vv[k] + (1 - b2) * g[k] * g[k]
                    p[k] -= lr * (mm[k] / (1 - b1**step)) / (np.sqrt(vv[k] / (1 - b2**step)) + eps)
        history.append(total / max(1, n_pairs // cfg.batch_size))

    i, j = make_pairs(acts, min(n_pairs, 20000), rng, frac, cfg.n_neighbors)
    pred = forward(params, (features(poses[i], poses[j], cfg.input_format) - in_mean) / in_scale)
    r = pred * out_scale + out_mean - acts[j]
    final = float(np.mean(np.sum(r * r, axis=1)))
    if not math.isfinite(final):
        raise TrainingDiverged("final loss is not finite")
    return ControllerModel(cfg.input_format, params, in_mean, in_scale, out_mean, out_scale,
                           act_lo, act_hi, final_loss=final, history=history)


def infer(model: ControllerModel, current: Pose, goal: Pose) -> Actuation:
    """Predicted actuation for reaching ``goal`` from ``current``, clamped to the limits."""
    u = model.predict_raw(current.as_matrix()[None], goal.as_matrix()[None])[0]
    return Actuation.from_vector(model.clamp(u))


# ---------------------------------------------------------------------------
# oracle
# ---------------------------------------------------------------------------


@dataclass
class OracleResult:
    actuation: Actuation
    position_error: float
    angle_error: float
    converged: bool


def _angle_between(Ra: np.ndarray, Rb: np.ndarray) -> float:
    c = (np.trace(Ra.T @ Rb) - 1.0) / 2.0
    return float(math.acos(min(1.0, max(-1.0, c))))


def oracle_actuation(geometry: ArmGeometry, target_tip: Pose, init: Actuation, pos_tol: float = 1e-4,
                     ang_tol: float = 1e-3, restarts: int = 4, seed: int = 0,
                     rot_weight: float = 0.2) -> OracleResult:
    """Damped least squares on the tip pose error over the actuation box.

    Falls back to a few seeded restarts when the first solve stalls and
    returns the best attempt with its residual otherwise.
    """
    plant = Plant(geometry)
    lo, hi = actuation_limits(geometry)
    Rt = target_tip.rotation
    pt = target_tip.translation

    def residual(u):
        T = plant.tips(u)
        dR = np.einsum("ji,njk->nik", Rt, T[:, :3, :3])  # target^T @ current
        vee = 0.5 * np.stack([dR[:, 2, 1] - dR[:, 1, 2], dR[:, 0, 2] - dR[:, 2, 0], dR[:, 1, 0] - dR[:, 0, 1]], axis=1)
        # vee loses sign information past 90 degrees; the trace term keeps those poses penalized
        far = np.clip(1.0 - (np.einsum("nii->n", dR) - 1.0) / 2.0, 0.0, None)
        return np.concatenate([T[:, :3, 3] - pt, rot_weight * vee, rot_weight * far[:, None]], axis=1)

    def errors(u):
        T = plant.tips(u[None, :])[0]
        return float(np.linalg.norm(T[:3, 3] - pt)), _angle_between(T[:3, :3], Rt)

    def done(r):
        return np.linalg.norm(r[:3]) < pos_tol * 0.5 and np.linalg.norm(r[3:6]) < rot_weight * ang_tol * 0.5

    rng = np.random.default_rng(seed)
    u0 = np.clip(init.to_vector(), lo, hi)
    best = None
    for attempt in range(restarts + 1):
        start = u0 if attempt == 0 else np.clip(u0 + rng.normal(0, 0.3, u0.shape) * (hi - lo) / 2, lo, hi)
        res = solve_dls(residual, start, lo, hi, converged=done, max_iter=200, step_limit=0.5)
        pe, ae = errors(res.x)
        ok = pe <= pos_tol and ae <= ang_tol
        if best is None or (ok and not best.converged) or (ok == best.converged and pe + 0.1 * ae < best.position_error + 0.1 * best.angle_error):
            best = OracleResult(Actuation.from_vector(res.x), pe, ae, ok)
        if ok:
            break
    return best


# ---------------------------------------------------------------------------
# closed loop
# ---------------------------------------------------------------------------


class LearnedController:
    """Closed-loop policy around a trained model.

    ``mode="absolute"`` applies the model's prediction directly.
    ``mode="incremental"`` adds the difference between the prediction for
    the goal and the prediction for holding the current pose to the
    current actuation, which cancels the model's smooth systematic error.
    """

    def __init__(self, model: ControllerModel, mode: str = "incremental", gain: float = 1.0):
        if mode not in ("absolute", "incremental"):
            raise ValueError("mode must be 'absolute' or 'incremental'")
        self.model = model
        self.mode = mode
        self.gain = gain

    def __call__(self, current: Pose, goal: Pose, actuation: Actuation) -> Actuation:
        Tc, Tg = current.as_matrix()[None], goal.as_matrix()[None]
        if self.mode == "absolute":
            return Actuation.from_vector(self.model.clamp(self.model.predict_raw(Tc, Tg)[0]))
        pred = self.model.predict_raw(np.concatenate([Tc, Tc]), np.concatenate([Tg, Tc]))
        u = actuation.to_vector() + self.gain * (pred[0] - pred[1])
        return Actuation.from_vector(self.model.clamp(u))


class OracleController:
    def __init__(self, geometry: ArmGeometry):
        self.geometry = geometry

    def __call__(self, current: Pose, goal: Pose, actuation: Actuation) -> Actuation:
        return oracle_actuation(self.geometry, goal, actuation).actuation


@dataclass
class ExecutionTrace:
    reached: bool
    waypoint_errors: list
    waypoint_steps: list
    waypoint_converged: list
    final_tip: np.ndarray
    final_error: float
    contacts: list
    actuations: list

    def to_dict(self) -> dict:
        return {
            "reached": self.reached,
            "waypoint_errors": list(self.waypoint_errors),
            "waypoint_steps": list(self.waypoint_steps),
            "waypoint_converged": list(self.waypoint_converged),
            "final_tip": [float(x) for x in self.final_tip],
            "final_error": self.final_error,
            "contacts": [[s.c_rigid, s.c_soft] for s in self.contacts],
        }


def execute_waypoints(plan, controller, geometry: ArmGeometry, grid=None, tolerance: float = 0.005,
                      max_steps_per_waypoint: int = 10, start: Actuation | None = None,
                      n_backbone: int = 50) -> ExecutionTrace:
    """Drive the simulated arm through the plan's waypoint tip poses.

    ``controller`` is a :class:`ControllerModel` (wrapped in an incremental
    :class:`LearnedController`) or any callable ``(current, goal, actuation)
    -> Actuation``. The arm starts at ``start`` or at the first waypoint's
    actuation. Each waypoint gets up to ``max_steps_per_waypoint`` updates;
    execution moves on regardless and records whether each converged.
    """
    from contiplan.planner import collision_count  # planner imports nothing from here

    waypoints = plan.waypoints if hasattr(plan, "waypoints") else list(plan)
    if not waypoints:
        raise ValueError("plan has no waypoints")
    if isinstance(controller, ControllerModel):
        controller = LearnedController(controller)
    plant = Plant(geometry, n_backbone)
    u = start or config_to_actuation(geometry, waypoints[0])
    sampler = plant.sampler
    goals = sampler.tip(np.array([w.to_vector() for w in waypoints]))

    def observe(act):
        tip = plant.tip(act)
        stats = None
        if grid is not None:
            stats = collision_count(grid, geometry, actuation_to_config(geometry, act), n_backbone)
        return tip, stats

    tip, stats = observe(u)
    contacts = [stats] if stats is not None else []
    acts = [u]
    errs, steps, conv = [], [], []
    for T in goals:
        goal = Pose.from_matrix(T)
        err = float(np.linalg.norm(tip.translation - goal.translation))
        n = 0
        while err > tolerance and n < max_steps_per_waypoint:
            u = controller(tip, goal, u)
            tip, stats = observe(u)
            if stats is not None:
                contacts.append(stats)
            acts.append(u)
            err = float(np.linalg.norm(tip.translation - goal.translation))
            n += 1
        errs.append(err)
        steps.append(n)
        conv.append(err <= tolerance)
    return ExecutionTrace(
        reached=bool(conv[-1]),
        waypoint_errors=errs,
        waypoint_steps=steps,
        waypoint_converged=conv,
        final_tip=tip.translation.copy(),
        final_error=errs[-1],
        contacts=contacts,
        actuations=acts,
    )
