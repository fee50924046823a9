"""Forward kinematics for a rigid 6-joint arm carrying a constant-curvature soft segment.

Conventions used throughout the package:

* Poses are rigid transforms; ``Pose.rotation`` is a 3x3 orthonormal matrix and
  ``Pose.translation`` is in meters.
* The soft segment starts at its base frame pointing along local +z and bends,
  for ``phi = 0``, toward local -x.
* A hybrid configuration packs into an 8-vector ``[j1..j6, kappa, phi]``; the
  planner works on these vectors directly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.spatial.transform import Rotation

SMALL_BEND = 1e-6  # below this kappa*l the series form of the arc is used
N_JOINTS = 6
CONFIG_DIM = N_JOINTS + 2
CHAMBER_ANGLES = np.array([0.0, 2.0 * np.pi / 3.0, -2.0 * np.pi / 3.0])


def wrap_angle(a):
    """Wrap angle(s) into [-pi, pi)."""
    return (np.asarray(a) + np.pi) % (2.0 * np.pi) - np.pi


def rot_z(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rot_y(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def axis_angle(axis, angle) -> np.ndarray:
    """Rotation matrices for a unit ``axis`` and (possibly batched) ``angle``."""
    axis = np.asarray(axis, dtype=float)
    angle = np.asarray(angle, dtype=float)
    k = np.array(
        [[0.0, -axis[2], axis[1]], [axis[2], 0.0, -axis[0]], [-axis[1], axis[0], 0.0]]
    )
    s = np.sin(angle)[..., None, None]
    c = np.cos(angle)[..., None, None]
    return np.eye(3) + s * k + (1.0 - c) * (k @ k)


@dataclass(frozen=True)
class Pose:
    """Rigid-body transform."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        r = np.array(self.rotation, dtype=float).reshape(3, 3)
        t = np.array(self.translation, dtype=float).reshape(3)
        if not np.all(np.isfinite(r)) or not np.all(np.isfinite(t)):
            raise ValueError("pose contains non-finite values")
        if np.abs(r.T @ r - np.eye(3)).max() > 1e-9 or abs(np.linalg.det(r) - 1.0) > 1e-9:
            raise ValueError("rotation is not orthonormal")
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls()

    @classmethod
    def from_matrix(cls, m) -> "Pose":
        m = np.asarray(m, dtype=float)
        return cls(m[:3, :3], m[:3, 3])

    @classmethod
    def from_translation(cls, t) -> "Pose":
        return cls(np.eye(3), t)

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def inverse(self) -> "Pose":
        rt = self.rotation.T
        return Pose(rt, -rt @ self.translation)

    def __matmul__(self, other: "Pose") -> "Pose":
        return Pose(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def apply(self, points) -> np.ndarray:
        """Map point(s) given in this frame into the parent frame."""
        return np.asarray(points, dtype=float) @ self.rotation.T + self.translation

    @property
    def approach(self) -> np.ndarray:
        """Local +z axis expressed in the parent frame."""
        return self.rotation[:, 2].copy()

    def to_dict(self) -> dict:
        return {"translation": self.translation.tolist(), "rotation": self.rotation.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Pose":
        t = d.get("translation", [0.0, 0.0, 0.0])
        if "rotation" in d:
            r = np.asarray(d["rotation"], dtype=float)
        elif "rpy" in d:
            r = Rotation.from_euler("xyz", d["rpy"]).as_matrix()
        else:
            r = np.eye(3)
        return cls(r, t)


@dataclass(frozen=True)
class SoftConfig:
    kappa: float
    phi: float
    arc_length: float

    def __post_init__(self):
        if not self.kappa >= 0.0:
            raise ValueError(f"kappa must be >= 0, got {self.kappa}")
        if not self.arc_length > 0.0:
            raise ValueError(f"arc_length must be > 0, got {self.arc_length}")
        object.__setattr__(self, "phi", float(wrap_angle(self.phi)))


@dataclass(frozen=True)
class RigidConfig:
    joints: tuple

    def __post_init__(self):
        j = tuple(float(x) for x in self.joints)
        if len(j) != N_JOINTS:
            raise ValueError(f"expected {N_JOINTS} joint angles, got {len(j)}")
        object.__setattr__(self, "joints", j)


@dataclass(frozen=True)
class HybridConfig:
    rigid: RigidConfig
    soft: SoftConfig

    def to_vector(self) -> np.ndarray:
        return np.array([*self.rigid.joints, self.soft.kappa, self.soft.phi])

    @classmethod
    def from_vector(cls, q, arc_length: float) -> "HybridConfig":
        q = np.asarray(q, dtype=float)
        return cls(RigidConfig(tuple(q[:N_JOINTS])), SoftConfig(q[6], q[7], arc_length))


@dataclass(frozen=True)
class JointSpec:
    """One revolute joint: fixed transform from the previous frame, then rotation about ``axis``."""

    name: str
    origin: Pose
    axis: tuple
    lower: float
    upper: float

    def __post_init__(self):
        a = np.asarray(self.axis, dtype=float)
        n = np.linalg.norm(a)
        if n == 0:
            raise ValueError(f"joint {self.name}: zero axis")
        object.__setattr__(self, "axis", tuple(a / n))
        if not self.lower <= self.upper:
            raise ValueError(f"joint {self.name}: lower limit above upper limit")


@dataclass(frozen=True)
class ArmGeometry:
    """Rigid chain description plus soft-segment parameters.

    ``rigid_only`` switches the soft segment for a straight rigid link of
    ``rigid_only_substitute_length``; use :meth:`as_rigid_only` to get that variant.
    """

    joints: tuple
    flange: Pose
    soft_mount: Pose
    soft_length: float
    rigid_only_substitute_length: float
    kappa_max: float = 8.0
    theta_max: float = 3.0 * np.pi / 4.0
    actuation_gain: float = 12.0
    home_joints: tuple = (0.0,) * N_JOINTS
    home_kappa: float = 0.0
    home_phi: float = 0.0
    rigid_only: bool = False
    name: str = "arm"

    def __post_init__(self):
        if len(self.joints) != N_JOINTS:
            raise ValueError(f"expected {N_JOINTS} joints, got {len(self.joints)}")
        if self.soft_length <= 0:
            raise ValueError("soft_length must be > 0")
        if not math.isclose(self.rigid_only_substitute_length, self.soft_length):
            raise ValueError("rigid_only_substitute_length must equal soft_length")
        object.__setattr__(self, "joints", tuple(self.joints))
        object.__setattr__(self, "home_joints", tuple(float(x) for x in self.home_joints))

    @property
    def lower(self) -> np.ndarray:
        return np.array([j.lower for j in self.joints])

    @property
    def upper(self) -> np.ndarray:
        return np.array([j.upper for j in self.joints])

    @property
    def kappa_limit(self) -> float:
        """Largest admissible curvature: min(kappa_max, theta_max / l)."""
        if self.rigid_only:
            return 0.0
        return min(self.kappa_max, self.theta_max / self.soft_length)

    def config_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.concatenate([self.lower, [0.0, -np.pi]])
        hi = np.concatenate([self.upper, [self.kappa_limit, np.pi]])
        return lo, hi

    def home(self) -> HybridConfig:
        kappa = 0.0 if self.rigid_only else self.home_kappa
        return HybridConfig(
            RigidConfig(self.home_joints), SoftConfig(kappa, self.home_phi, self.soft_length)
        )

    def as_rigid_only(self) -> "ArmGeometry":
        return replace(self, rigid_only=True, name=self.name + "-rigid-only")

    def check_config(self, config: HybridConfig, tol: float = 1e-12) -> None:
        q = np.asarray(config.rigid.joints)
        bad = np.flatnonzero((q < self.lower - tol) | (q > self.upper + tol))
        if bad.size:
            i = int(bad[0])
            raise ValueError(
                f"joint {self.joints[i].name} = {q[i]:.6g} outside "
                f"[{self.joints[i].lower:.6g}, {self.joints[i].upper:.6g}]"
            )
        if config.soft.kappa > self.kappa_max + tol:
            raise ValueError(f"kappa {config.soft.kappa:.6g} exceeds kappa_max {self.kappa_max}")
        if config.soft.kappa * config.soft.arc_length > self.theta_max + tol:
            raise ValueError("kappa * arc_length exceeds theta_max")

    def soft_from_actuation(self, actuation) -> SoftConfig:
        return actuation_to_soft(
            actuation, gain=self.actuation_gain, kappa_max=self.kappa_limit,
            arc_length=self.soft_length,
        )

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "joints": [
                {
                    "name": j.name,
                    "origin": j.origin.to_dict(),
                    "axis": list(j.axis),
                    "limits": [j.lower, j.upper],
                }
                for j in self.joints
            ],
            "flange": self.flange.to_dict(),
            "soft_mount": self.soft_mount.to_dict(),
            "soft_length": self.soft_length,
            "rigid_only_substitute_length": self.rigid_only_substitute_length,
            "kappa_max": self.kappa_max,
            "theta_max": self.theta_max,
            "actuation_gain": self.actuation_gain,
            "home": {"joints": list(self.home_joints), "kappa": self.home_kappa, "phi": self.home_phi},
            "rigid_only": self.rigid_only,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ArmGeometry":
        joints = tuple(
            JointSpec(
                name=j.get("name", f"j{i + 1}"),
                origin=Pose.from_dict(j.get("origin", {})),
                axis=tuple(j["axis"]),
                lower=float(j["limits"][0]),
                upper=float(j["limits"][1]),
            )
            for i, j in enumerate(d["joints"])
        )
        home = d.get("home", {})
        soft_length = float(d["soft_length"])
        return cls(
            joints=joints,
            flange=Pose.from_dict(d.get("flange", {})),
            soft_mount=Pose.from_dict(d.get("soft_mount", {})),
            soft_length=soft_length,
            rigid_only_substitute_length=float(d.get("rigid_only_substitute_length", soft_length)),
            kappa_max=float(d.get("kappa_max", 8.0)),
            theta_max=float(d.get("theta_max", 3.0 * np.pi / 4.0)),
            actuation_gain=float(d.get("actuation_gain", 12.0)),
            home_joints=tuple(home.get("joints", (0.0,) * N_JOINTS)),
            home_kappa=float(home.get("kappa", 0.0)),
            home_phi=float(home.get("phi", 0.0)),
            rigid_only=bool(d.get("rigid_only", False)),
            name=d.get("name", "arm"),
        )

    @classmethod
    def load(cls, path) -> "ArmGeometry":
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))


def default_geometry() -> ArmGeometry:
    """The shipped 6-joint arm (about 0.9 m reach) with a 0.25 m soft segment."""
    text = resources.files("contiplan").joinpath("data/default_arm.json").read_text()
    return ArmGeometry.from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# soft segment
# ---------------------------------------------------------------------------


def _arc_offsets(kappa, phi, s):
    """Arc positions in the soft base frame; broadcasts over kappa/phi and s."""
    kappa = np.asarray(kappa, dtype=float)
    phi = np.asarray(phi, dtype=float)
    s = np.asarray(s, dtype=float)
    theta = kappa * s
    small = np.abs(theta) < SMALL_BEND
    safe_k = np.where(small, 1.0, kappa)
    # 1 - cos(x) = 2 sin^2(x/2) avoids cancellation near zero
    radial = np.where(small, kappa * s * s / 2.0, 2.0 * np.sin(theta / 2.0) ** 2 / safe_k)
    axial = np.where(small, s, np.sin(theta) / safe_k)
    return np.stack([-radial * np.cos(phi), -radial * np.sin(phi), axial], axis=-1)


def _arc_rotations(kappa, phi, s):
    """Rz(phi) Ry(-kappa s) Rz(-phi), broadcast over inputs."""
    theta = np.asarray(kappa, dtype=float) * np.asarray(s, dtype=float)
    phi = np.broadcast_to(np.asarray(phi, dtype=float), theta.shape)
    cp, sp = np.cos(phi), np.sin(phi)
    ct, st = np.cos(theta), np.sin(theta)
    vt = 1.0 - ct
    r = np.empty(theta.shape + (3, 3))
    r[..., 0, 0] = 1.0 - vt * cp * cp
    r[..., 0, 1] = -vt * cp * sp
    r[..., 0, 2] = -st * cp
    r[..., 1, 0] = -vt * cp * sp
    r[..., 1, 1] = 1.0 - vt * sp * sp
    r[..., 1, 2] = -st * sp
    r[..., 2, 0] = st * cp
    r[..., 2, 1] = st * sp
    r[..., 2, 2] = ct
    return r


def soft_transform(soft: SoftConfig) -> Pose:
    """Base-to-tip transform of a constant-curvature segment.

    Translation ``(-(1-cos kl) cos(phi)/k, -(1-cos kl) sin(phi)/k, sin(kl)/k)``;
    rotation ``Rz(phi) Ry(-kl) Rz(-phi)``, whose third column is the arc tangent
    at the tip. Below ``kl = 1e-6`` the translation uses its series limit.
    """
    if not soft.kappa >= 0.0:
        raise ValueError("kappa must be >= 0")
    if not soft.arc_length > 0.0:
        raise ValueError("arc_length must be > 0")
    t = _arc_offsets(soft.kappa, soft.phi, soft.arc_length)
    r = _arc_rotations(soft.kappa, soft.phi, soft.arc_length)
    return Pose(r, t)


def actuation_to_soft(actuation, gain: float = 12.0, kappa_max: float = 8.0,
                      arc_length: float = 0.25) -> SoftConfig:
    """Map three normalized chamber commands (chambers 120 deg apart) to (kappa, phi).

    Only the deviation from the mean command bends the segment; equal commands
    give a straight segment with ``phi = 0``.
    """
    a = np.asarray(actuation, dtype=float)
    if a.shape != (3,):
        raise ValueError("actuation must have 3 components")
    if np.any(~np.isfinite(a)) or np.any(a < 0.0) or np.any(a > 1.0):
        raise ValueError(f"chamber commands must lie in [0, 1], got {a.tolist()}")
    e = a - a.mean()
    norm = float(np.linalg.norm(e))
    if norm < 1e-12:
        return SoftConfig(0.0, 0.0, arc_length)
    phi = math.atan2(math.sqrt(3.0) * (e[1] - e[2]), 2.0 * e[0] - e[1] - e[2])
    kappa = min(max(gain * norm, 0.0), kappa_max)
    return SoftConfig(kappa, phi, arc_length)


def soft_to_actuation(kappa: float, phi: float, gain: float = 12.0) -> np.ndarray:
    """Chamber commands reproducing (kappa, phi), lowest chamber at zero.

    Inverse of :func:`actuation_to_soft` for unsaturated curvatures.
    """
    r = kappa / (gain * math.sqrt(1.5))
    e = r * np.cos(phi - CHAMBER_ANGLES)
    a = e - e.min()
    if a.max() > 1.0 + 1e-12:
        raise ValueError(f"kappa={kappa} not reachable with gain {gain}")
    return np.clip(a, 0.0, 1.0)


# ---------------------------------------------------------------------------
# rigid chain
# ---------------------------------------------------------------------------


def rigid_forward(geometry: ArmGeometry, rigid: RigidConfig) -> list[Pose]:
    """World poses of the six joint frames followed by the flange."""
    q = np.asarray(rigid.joints, dtype=float)
    lo, hi = geometry.lower, geometry.upper
    if np.any(q < lo - 1e-12) or np.any(q > hi + 1e-12):
        i = int(np.flatnonzero((q < lo - 1e-12) | (q > hi + 1e-12))[0])
        raise ValueError(f"joint {geometry.joints[i].name} = {q[i]:.6g} outside its limits")
    frames = _rigid_frames(geometry, q[None, :])[0]
    return [Pose(f[:3, :3], f[:3, 3]) for f in frames]


def _skew(v) -> np.ndarray:
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


class _Chain:
    """Per-joint constants of the rigid chain, precomputed for batched evaluation."""

    def __init__(self, geometry: ArmGeometry):
        self.r0 = np.array([j.origin.rotation for j in geometry.joints])
        self.t0 = np.array([j.origin.translation for j in geometry.joints])
        k = np.array([_skew(j.axis) for j in geometry.joints])
        self.k = k
        self.kk = k @ k
        self.rf = np.array(geometry.flange.rotation)
        self.tf = np.array(geometry.flange.translation)

    def frames(self, q: np.ndarray):
        """Rotations (B, 7, 3, 3) and origins (B, 7, 3) of the six joint frames and the flange."""
        b = q.shape[0]
        s = np.sin(q)[..., None, None]
        v = (1.0 - np.cos(q))[..., None, None]
        # Rodrigues for all joints at once, premultiplied by each joint's fixed origin rotation
        local = self.r0 @ (_EYE3 + s * self.k + v * self.kk)
        rot = np.empty((b, N_JOINTS + 1, 3, 3))
        pos = np.empty((b, N_JOINTS + 1, 3))
        r = local[:, 0]
        t = np.broadcast_to(self.t0[0], (b, 3))
        rot[:, 0], pos[:, 0] = r, t
        for i in range(1, N_JOINTS):
            t = t + r @ self.t0[i]
            r = r @ local[:, i]
            rot[:, i], pos[:, i] = r, t
        pos[:, N_JOINTS] = t + r @ self.tf
        rot[:, N_JOINTS] = r @ self.rf
        return rot, pos


_EYE3 = np.eye(3)


def _rigid_frames(geometry: ArmGeometry, q: np.ndarray) -> np.ndarray:
    """Batched chain evaluation: ``q`` (B, 6) -> (B, 7, 4, 4) joint frames + flange."""
    rot, pos = _Chain(geometry).frames(np.asarray(q, dtype=float))
    out = np.zeros(rot.shape[:2] + (4, 4))
    out[..., :3, :3] = rot
    out[..., :3, 3] = pos
    out[..., 3, 3] = 1.0
    return out


# ---------------------------------------------------------------------------
# backbone discretization
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BackboneSample:
    points: np.ndarray
    tags: tuple
    tip_pose: Pose

    @property
    def rigid_mask(self) -> np.ndarray:
        return np.array([t == "rigid" for t in self.tags])


class BackboneSampler:
    """Precomputed arc-length layout of ``n_total`` backbone points for one geometry.

    Link lengths of a serial chain do not depend on the joint angles, so which
    segment each point falls on (and where along it) is fixed; only the frame
    positions change per configuration. :meth:`points` evaluates whole batches.
    """

    def __init__(self, geometry: ArmGeometry, n_total: int = 50):
        if n_total < 2:
            raise ValueError("n_total must be >= 2")
        self.geometry = geometry
        self.n_total = n_total
        self._chain = _Chain(geometry)
        self._mount_r = np.array(geometry.soft_mount.rotation)
        self._mount_t = np.array(geometry.soft_mount.translation)
        verts = self._vertices(*self._frames(np.zeros((1, 8))))[0]
        seg = np.linalg.norm(np.diff(verts, axis=0), axis=1)
        self.rigid_length = float(seg.sum())
        self.soft_length = (
            geometry.rigid_only_substitute_length if geometry.rigid_only else geometry.soft_length
        )
        self.total_length = self.rigid_length + self.soft_length
        s = np.linspace(0.0, self.total_length, n_total)
        self.rigid_mask = s <= self.rigid_length + 1e-12
        s_rigid = s[self.rigid_mask]
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        idx = np.clip(np.searchsorted(cum, s_rigid, side="right") - 1, 0, len(seg) - 1)
        # skip zero-length segments so fractions stay finite
        frac = np.where(seg[idx] > 0, (s_rigid - cum[idx]) / np.where(seg[idx] > 0, seg[idx], 1.0), 0.0)
        self._seg_index = idx
        self._seg_frac = np.clip(frac, 0.0, 1.0)
        self.s_soft = s[~self.rigid_mask] - self.rigid_length
        self.n_rigid = int(self.rigid_mask.sum())
        self.n_soft = n_total - self.n_rigid
        self.tags = ("rigid",) * self.n_rigid + ("soft",) * self.n_soft

    def _frames(self, q: np.ndarray):
        """Chain frames plus the soft-segment base (rotation, origin) for config vectors (B, 8)."""
        rot, pos = self._chain.frames(q[:, :N_JOINTS])
        base_r = rot[:, N_JOINTS] @ self._mount_r
        base_t = pos[:, N_JOINTS] + rot[:, N_JOINTS] @ self._mount_t
        return pos, base_r, base_t

    @staticmethod
    def _vertices(pos, base_r, base_t) -> np.ndarray:
        # polyline: base origin, six joint frames, flange, soft base
        b = pos.shape[0]
        return np.concatenate([np.zeros((b, 1, 3)), pos, base_t[:, None, :]], axis=1)

    def _tip(self, q, base_r, base_t) -> np.ndarray:
        b = q.shape[0]
        kappa = np.zeros(b) if self.geometry.rigid_only else q[:, 6]
        tip = np.zeros((b, 4, 4))
        tip[:, 3, 3] = 1.0
        tip[:, :3, :3] = base_r @ _arc_rotations(kappa, q[:, 7], self.soft_length)
        off = _arc_offsets(kappa, q[:, 7], self.soft_length)
        tip[:, :3, 3] = base_t + np.einsum("bij,bj->bi", base_r, off)
        return tip

    def evaluate(self, q: np.ndarray):
        """Backbone points (B, n, 3) and soft-tip transforms (B, 4, 4) for config vectors (B, 8)."""
        q = np.atleast_2d(np.asarray(q, dtype=float))
        b = q.shape[0]
        pos, base_r, base_t = self._frames(q)
        verts = self._vertices(pos, base_r, base_t)
        a = verts[:, self._seg_index]
        c = verts[:, self._seg_index + 1]
        rigid_pts = a + self._seg_frac[None, :, None] * (c - a)
        kappa = np.zeros(b) if self.geometry.rigid_only else q[:, 6]
        local = _arc_offsets(kappa[:, None], q[:, 7, None], self.s_soft[None, :])
        soft_pts = local @ base_r.transpose(0, 2, 1) + base_t[:, None, :]
        points = np.concatenate([rigid_pts, soft_pts], axis=1)
        return points, self._tip(q, base_r, base_t)

    def points(self, q: np.ndarray) -> np.ndarray:
        return self.evaluate(q)[0]

    def tip(self, q: np.ndarray) -> np.ndarray:
        """Soft-tip transforms only; skips the backbone interpolation."""
        q = np.atleast_2d(np.asarray(q, dtype=float))
        _, base_r, base_t = self._frames(q)
        return self._tip(q, base_r, base_t)


def hybrid_backbone(geometry: ArmGeometry, config: HybridConfig, n_total: int = 50) -> BackboneSample:
    """Points spaced uniformly by arc length from the arm base to the soft tip.

    Rigid points interpolate the polyline through the joint frame origins,
    flange and soft base; soft points evaluate the arc at fractions of its
    length. ``tip_pose`` equals flange @ soft_mount @ soft_transform(soft).
    """
    geometry.check_config(config)
    sampler = BackboneSampler(geometry, n_total)
    pts, _ = sampler.evaluate(config.to_vector()[None, :])
    flange = rigid_forward(geometry, config.rigid)[-1]
    if geometry.rigid_only:
        segment = Pose.from_translation([0.0, 0.0, geometry.rigid_only_substitute_length])
    else:
        segment = soft_transform(config.soft)
    tip = flange @ geometry.soft_mount @ segment
    return BackboneSample(points=pts[0], tags=sampler.tags, tip_pose=tip)


def tip_pose(geometry: ArmGeometry, config: HybridConfig) -> Pose:
    flange = rigid_forward(geometry, config.rigid)[-1]
    if geometry.rigid_only:
        segment = Pose.from_translation([0.0, 0.0, geometry.rigid_only_substitute_length])
    else:
        segment = soft_transform(config.soft)
    return flange @ geometry.soft_mount @ segment


def config_vector(config: HybridConfig) -> np.ndarray:
    return config.to_vector()


def as_config(q: Sequence[float], geometry: ArmGeometry) -> HybridConfig:
    return HybridConfig.from_vector(q, geometry.soft_length)
