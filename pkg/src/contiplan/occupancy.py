"""Voxel occupancy grids, synthetic tabletop scenes and goal candidate poses.

Voxels use half-open intervals ``[lo, hi)`` along every axis, so a point on a
shared face belongs to the voxel with the larger index. Anything outside the
grid is free.
"""

from __future__ import annotations

import csv
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from contiplan.kinematics import Pose

ARCHETYPES = ("Open", "Obstacle", "Clutter", "Holes")
GRID_MAGIC = b"CPGRID01"
APPROACH_DIRECTIONS = np.array(
    [[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, -1.0, 0.0]]
)


@dataclass(frozen=True)
class AABB:
    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if len(lo) != 3 or len(hi) != 3:
            raise ValueError("bounds need three coordinates")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def extent(self) -> np.ndarray:
        return np.asarray(self.hi) - np.asarray(self.lo)

    def contains(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        return np.all((p >= self.lo) & (p <= self.hi), axis=-1)

    def contains_box(self, other: "AABB", tol: float = 1e-9) -> bool:
        return bool(
            np.all(np.asarray(other.lo) >= np.asarray(self.lo) - tol)
            and np.all(np.asarray(other.hi) <= np.asarray(self.hi) + tol)
        )

    def to_dict(self) -> dict:
        return {"lo": list(self.lo), "hi": list(self.hi)}

    @classmethod
    def from_dict(cls, d) -> "AABB":
        return cls(d["lo"], d["hi"])


@dataclass
class PointCloud:
    points: np.ndarray
    confidence: np.ndarray | None = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(self.points)):
            raise ValueError("point cloud has non-finite coordinates")
        if self.confidence is not None:
            self.confidence = np.asarray(self.confidence, dtype=float).reshape(-1)
            if self.confidence.shape[0] != self.points.shape[0]:
                raise ValueError("confidence length does not match point count")
            if np.any((self.confidence < 0) | (self.confidence > 1)):
                raise ValueError("confidence values must lie in [0, 1]")

    def __len__(self) -> int:
        return self.points.shape[0]


# ---------------------------------------------------------------------------
# grid
# ---------------------------------------------------------------------------


class OccupancyGrid:
    """Dense boolean voxel grid. Cells are read-only once constructed."""

    def __init__(self, origin, voxel_size: float, cells: np.ndarray):
        if not voxel_size > 0:
            raise ValueError("voxel_size must be > 0")
        cells = np.array(cells, dtype=bool)
        if cells.ndim != 3 or min(cells.shape) < 1:
            raise ValueError("cells must be a non-empty 3-D array")
        cells.setflags(write=False)
        self.origin = np.asarray(origin, dtype=float).reshape(3)
        self.origin.setflags(write=False)
        self.voxel_size = float(voxel_size)
        self.cells = cells
        self.dims = tuple(int(d) for d in cells.shape)

    @classmethod
    def empty(cls, bounds: AABB, voxel_size: float) -> "OccupancyGrid":
        return cls(bounds.lo, voxel_size, np.zeros(_dims_for(bounds, voxel_size), dtype=bool))

    @property
    def upper(self) -> np.ndarray:
        return self.origin + self.voxel_size * np.asarray(self.dims)

    @property
    def n_occupied(self) -> int:
        return int(self.cells.sum())

    def index(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Integer voxel indices (N, 3) and an in-bounds mask (N,)."""
        p = np.asarray(points, dtype=float).reshape(-1, 3)
        idx = np.floor((p - self.origin) / self.voxel_size).astype(np.int64)
        inside = np.all((idx >= 0) & (idx < np.asarray(self.dims)), axis=1)
        return idx, inside

    def occupied(self, points) -> np.ndarray:
        """Vectorized occupancy lookup; out-of-bounds points are free."""
        p = np.asarray(points, dtype=float)
        shape = p.shape[:-1]
        idx, inside = self.index(p)
        out = np.zeros(idx.shape[0], dtype=bool)
        if inside.any():
            i = idx[inside]
            out[inside] = self.cells[i[:, 0], i[:, 1], i[:, 2]]
        return out.reshape(shape)

    def voxel_center(self, idx) -> np.ndarray:
        return self.origin + (np.asarray(idx, dtype=float) + 0.5) * self.voxel_size

    def voxel_centers(self) -> np.ndarray:
        axes = [self.origin[k] + (np.arange(self.dims[k]) + 0.5) * self.voxel_size for k in range(3)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def with_cells(self, cells) -> "OccupancyGrid":
        return OccupancyGrid(self.origin, self.voxel_size, cells)

    def segment_hits(self, a, b, step: float | None = None) -> int:
        """Number of distinct occupied voxels met while marching from ``a`` to ``b``."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        step = step or self.voxel_size / 4.0
        n = max(int(math.ceil(np.linalg.norm(b - a) / step)), 1)
        pts = a + np.linspace(0.0, 1.0, n + 1)[:, None] * (b - a)
        idx, inside = self.index(pts)
        idx = idx[inside]
        if idx.size == 0:
            return 0
        hit = self.cells[idx[:, 0], idx[:, 1], idx[:, 2]]
        return int(np.unique(idx[hit], axis=0).shape[0]) if hit.any() else 0

    def __eq__(self, other) -> bool:
        if not isinstance(other, OccupancyGrid):
            return NotImplemented
        return (
            self.voxel_size == other.voxel_size
            and np.array_equal(self.origin, other.origin)
            and np.array_equal(self.cells, other.cells)
        )

    def __repr__(self) -> str:
        return (
            f"OccupancyGrid(origin={self.origin.tolist()}, voxel_size={self.voxel_size}, "
            f"dims={self.dims}, occupied={self.n_occupied})"
        )

    # -- debug export ---------------------------------------------------------

    def export(self, path) -> None:
        """Write run-length encoded cells plus a JSON sidecar ``<path>.json``.

        Binary layout: 8-byte magic, uint64 run count, then alternating runs
        (uint32 length) starting with a free run, over C-ordered cells.
        """
        flat = self.cells.ravel(order="C").astype(np.int8)
        change = np.flatnonzero(np.diff(flat)) + 1
        bounds = np.concatenate([[0], change, [flat.size]])
        runs = np.diff(bounds).astype(np.uint32)
        if flat[0] == 1:
            runs = np.concatenate([[0], runs]).astype(np.uint32)
        path = Path(path)
        with open(path, "wb") as f:
            f.write(GRID_MAGIC)
            f.write(struct.pack("<Q", runs.size))
            f.write(runs.astype("<u4").tobytes())
        sidecar = {"origin": self.origin.tolist(), "voxel_size": self.voxel_size, "dims": list(self.dims)}
        Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2))

    @classmethod
    def load(cls, path) -> "OccupancyGrid":
        path = Path(path)
        meta = json.loads(Path(str(path) + ".json").read_text())
        data = path.read_bytes()
        if data[:8] != GRID_MAGIC:
            raise ValueError(f"{path}: bad magic header")
        (n_runs,) = struct.unpack("<Q", data[8:16])
        runs = np.frombuffer(data[16 : 16 + 4 * n_runs], dtype="<u4")
        values = np.arange(n_runs) % 2
        flat = np.repeat(values, runs).astype(bool)
        dims = tuple(meta["dims"])
        if flat.size != int(np.prod(dims)):
            raise ValueError(f"{path}: run lengths do not cover dims {dims}")
        return cls(meta["origin"], meta["voxel_size"], flat.reshape(dims))


def _dims_for(bounds: AABB, voxel_size: float) -> tuple:
    ext = bounds.extent
    if np.any(ext <= 0):
        raise ValueError("bounds must have positive extent on every axis")
    return tuple(int(max(1, math.ceil(e / voxel_size - 1e-9))) for e in ext)


def voxelize(cloud: PointCloud, voxel_size: float, bounds: AABB, min_points_per_voxel: int = 1) -> OccupancyGrid:
    """Occupy every voxel holding at least ``min_points_per_voxel`` cloud points.

    Points outside ``bounds`` (half-open on the upper side) are ignored.
    """
    if len(cloud) == 0:
        raise ValueError("cannot voxelize an empty point cloud")
    if not voxel_size > 0:
        raise ValueError("voxel_size must be > 0")
    dims = _dims_for(bounds, voxel_size)
    p = cloud.points
    keep = np.all((p >= bounds.lo) & (p < bounds.hi), axis=1)
    idx = np.floor((p[keep] - np.asarray(bounds.lo)) / voxel_size).astype(np.int64)
    idx = np.clip(idx, 0, np.asarray(dims) - 1)
    counts = np.zeros(dims, dtype=np.int64)
    np.add.at(counts, (idx[:, 0], idx[:, 1], idx[:, 2]), 1)
    return OccupancyGrid(bounds.lo, voxel_size, counts >= max(1, int(min_points_per_voxel)))


def occ(grid: OccupancyGrid, p) -> int:
    """1 if ``p`` lies in an occupied voxel, else 0."""
    return int(grid.occupied(np.asarray(p, dtype=float).reshape(1, 3))[0])


# ---------------------------------------------------------------------------
# point cloud ingestion
# ---------------------------------------------------------------------------


def read_ply(path) -> PointCloud:
    """ASCII PLY with ``x y z`` and an optional fourth confidence property."""
    with open(path) as f:
        if f.readline().strip() != "ply":
            raise ValueError(f"{path}: not a PLY file")
        n_vertex = None
        props = []
        in_vertex = False
        for line in f:
            tok = line.split()
            if not tok:
                continue
            if tok[0] == "format" and tok[1] != "ascii":
                raise ValueError(f"{path}: only ASCII PLY is supported")
            if tok[0] == "element":
                in_vertex = tok[1] == "vertex"
                if in_vertex:
                    n_vertex = int(tok[2])
            elif tok[0] == "property" and in_vertex:
                props.append(tok[-1])
            elif tok[0] == "end_header":
                break
        if n_vertex is None:
            raise ValueError(f"{path}: no vertex element")
        rows = [next(f).split() for _ in range(n_vertex)]
    data = np.array(rows, dtype=float).reshape(n_vertex, -1)
    cols = {name: i for i, name in enumerate(props)}
    xyz = data[:, [cols.get("x", 0), cols.get("y", 1), cols.get("z", 2)]]
    conf = None
    for key in ("confidence", "conf", "quality"):
        if key in cols:
            conf = data[:, cols[key]]
    if conf is None and data.shape[1] == 4 and len(props) == 4:
        conf = data[:, 3]
    return PointCloud(xyz, conf)


def write_ply(cloud: PointCloud, path) -> None:
    has_conf = cloud.confidence is not None
    lines = ["ply", "format ascii 1.0", f"element vertex {len(cloud)}",
             "property float x", "property float y", "property float z"]
    if has_conf:
        lines.append("property float confidence")
    lines.append("end_header")
    for i, p in enumerate(cloud.points):
        vals = [repr(float(v)) for v in p]
        if has_conf:
            vals.append(repr(float(cloud.confidence[i])))
        lines.append(" ".join(vals))
    Path(path).write_text("\n".join(lines) + "\n")


def read_csv_cloud(path) -> PointCloud:
    """One point per line: ``x,y,z[,confidence]``; a non-numeric first line is a header."""
    rows = []
    with open(path, newline="") as f:
        for row in csv.reader(f):
            if not row or row[0].startswith("#"):
                continue
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                if rows:
                    raise
    data = np.array(rows, dtype=float)
    if data.ndim != 2 or data.shape[1] not in (3, 4):
        raise ValueError(f"{path}: expected 3 or 4 columns")
    return PointCloud(data[:, :3], data[:, 3] if data.shape[1] == 4 else None)


def load_cloud(path) -> PointCloud:
    suffix = Path(path).suffix.lower()
    if suffix == ".ply":
        return read_ply(path)
    if suffix in (".csv", ".txt"):
        return read_csv_cloud(path)
    raise ValueError(f"unsupported point cloud format: {suffix}")


# ---------------------------------------------------------------------------
# scene primitives
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Box:
    """Oriented box; ``size`` is the full edge length along the pose axes."""

    pose: Pose
    size: tuple
    kind: str = field(default="box", init=False)

    def contains(self, p, margin: float = 0.0) -> np.ndarray:
        local = (np.asarray(p, dtype=float) - self.pose.translation) @ self.pose.rotation
        half = np.asarray(self.size) / 2.0 - margin
        return np.all(np.abs(local) <= half, axis=-1)

    def aabb(self) -> AABB:
        half = np.abs(self.pose.rotation) @ (np.asarray(self.size) / 2.0)
        c = self.pose.translation
        return AABB(c - half, c + half)

    def to_dict(self) -> dict:
        return {"kind": "box", "pose": self.pose.to_dict(), "size": list(self.size)}


@dataclass(frozen=True)
class Sphere:
    center: tuple
    radius: float
    kind: str = field(default="sphere", init=False)

    def contains(self, p, margin: float = 0.0) -> np.ndarray:
        d = np.linalg.norm(np.asarray(p, dtype=float) - np.asarray(self.center), axis=-1)
        return d <= self.radius - margin

    def aabb(self) -> AABB:
        c = np.asarray(self.center)
        return AABB(c - self.radius, c + self.radius)

    def to_dict(self) -> dict:
        return {"kind": "sphere", "center": list(self.center), "radius": self.radius}


@dataclass(frozen=True)
class Cylinder:
    """Solid cylinder along the local z axis, centered on ``pose``."""

    pose: Pose
    radius: float
    height: float
    kind: str = field(default="cylinder", init=False)

    def contains(self, p, margin: float = 0.0) -> np.ndarray:
        local = (np.asarray(p, dtype=float) - self.pose.translation) @ self.pose.rotation
        radial = np.hypot(local[..., 0], local[..., 1])
        return (radial <= self.radius - margin) & (np.abs(local[..., 2]) <= self.height / 2.0 - margin)

    def aabb(self) -> AABB:
        axis = self.pose.rotation[:, 2]
        half = np.abs(axis) * self.height / 2.0 + self.radius * np.sqrt(np.clip(1.0 - axis**2, 0.0, 1.0))
        c = self.pose.translation
        return AABB(c - half, c + half)

    def to_dict(self) -> dict:
        return {"kind": "cylinder", "pose": self.pose.to_dict(), "radius": self.radius, "height": self.height}


@dataclass(frozen=True)
class Wall:
    """Box slab with one rectangular aperture through its thickness (local x).

    ``aperture_center`` is the (y, z) offset of the opening in the wall frame;
    ``aperture_size`` its (width, height).
    """

    pose: Pose
    size: tuple
    aperture_center: tuple
    aperture_size: tuple
    kind: str = field(default="wall", init=False)

    def _local(self, p):
        return (np.asarray(p, dtype=float) - self.pose.translation) @ self.pose.rotation

    def in_aperture(self, p, margin: float = 0.0) -> np.ndarray:
        local = self._local(p)
        dy = np.abs(local[..., 1] - self.aperture_center[0])
        dz = np.abs(local[..., 2] - self.aperture_center[1])
        return (dy <= self.aperture_size[0] / 2.0 + margin) & (dz <= self.aperture_size[1] / 2.0 + margin)

    def contains(self, p, margin: float = 0.0) -> np.ndarray:
        local = self._local(p)
        half = np.asarray(self.size) / 2.0 - margin
        slab = np.all(np.abs(local) <= half, axis=-1)
        return slab & ~self.in_aperture(p, margin)

    def aabb(self) -> AABB:
        half = np.abs(self.pose.rotation) @ (np.asarray(self.size) / 2.0)
        c = self.pose.translation
        return AABB(c - half, c + half)

    @property
    def aperture_area(self) -> float:
        return float(self.aperture_size[0] * self.aperture_size[1])

    def aperture_world_center(self) -> np.ndarray:
        return self.pose.apply([0.0, self.aperture_center[0], self.aperture_center[1]])

    def to_dict(self) -> dict:
        return {
            "kind": "wall",
            "pose": self.pose.to_dict(),
            "size": list(self.size),
            "aperture_center": list(self.aperture_center),
            "aperture_size": list(self.aperture_size),
        }


def primitive_from_dict(d: dict):
    kind = d["kind"]
    if kind == "box":
        return Box(Pose.from_dict(d["pose"]), tuple(d["size"]))
    if kind == "sphere":
        return Sphere(tuple(d["center"]), float(d["radius"]))
    if kind == "cylinder":
        return Cylinder(Pose.from_dict(d["pose"]), float(d["radius"]), float(d["height"]))
    if kind == "wall":
        return Wall(
            Pose.from_dict(d["pose"]), tuple(d["size"]),
            tuple(d["aperture_center"]), tuple(d["aperture_size"]),
        )
    raise ValueError(f"unknown primitive kind {kind!r}")


# ---------------------------------------------------------------------------
# scenes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SceneSpec:
    archetype: str
    seed: int
    goal_position: tuple
    workspace_bounds: AABB
    primitives: tuple = ()
    table: bool = False

    def __post_init__(self):
        if self.archetype not in ARCHETYPES:
            raise ValueError(f"unknown archetype {self.archetype!r}")
        object.__setattr__(self, "goal_position", tuple(float(v) for v in self.goal_position))
        object.__setattr__(self, "primitives", tuple(self.primitives))
        if not bool(self.workspace_bounds.contains(self.goal_position)):
            raise ValueError("goal_position lies outside workspace_bounds")
        if self.archetype == "Holes":
            walls = [p for p in self.primitives if isinstance(p, Wall)]
            if len(walls) != 1:
                raise ValueError("Holes scenes need exactly one wall primitive")

    @property
    def scene_id(self) -> str:
        return f"{self.archetype}-{self.seed}"

    def wall(self) -> Wall | None:
        for p in self.primitives:
            if isinstance(p, Wall):
                return p
        return None

    def to_dict(self) -> dict:
        return {
            "archetype": self.archetype,
            "seed": self.seed,
            "goal_position": list(self.goal_position),
            "workspace_bounds": self.workspace_bounds.to_dict(),
            "primitives": [p.to_dict() for p in self.primitives],
            "table": self.table,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        return cls(
            archetype=d["archetype"],
            seed=int(d["seed"]),
            goal_position=tuple(d["goal_position"]),
            workspace_bounds=AABB.from_dict(d["workspace_bounds"]),
            primitives=tuple(primitive_from_dict(p) for p in d.get("primitives", [])),
            table=bool(d.get("table", False)),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "SceneSpec":
        return cls.from_dict(json.loads(text))


def rasterize_scene(spec: SceneSpec, voxel_size: float = 0.01) -> OccupancyGrid:
    """Occupy every voxel whose center lies inside a primitive.

    The goal voxel is always left free; with ``spec.table`` the bottom voxel
    layer of the workspace is filled.
    """
    bounds = spec.workspace_bounds
    dims = _dims_for(bounds, voxel_size)
    cells = np.zeros(dims, dtype=bool)
    lo = np.asarray(bounds.lo)
    if spec.table:
        cells[:, :, 0] = True
    for prim in spec.primitives:
        box = prim.aabb()
        if not bounds.contains_box(box, tol=1e-6):
            raise ValueError(f"{prim.kind} primitive extends outside the workspace bounds")
        i0 = np.clip(np.floor((np.asarray(box.lo) - lo) / voxel_size).astype(int), 0, np.asarray(dims) - 1)
        i1 = np.clip(np.ceil((np.asarray(box.hi) - lo) / voxel_size).astype(int), 0, np.asarray(dims))
        axes = [lo[k] + (np.arange(i0[k], i1[k]) + 0.5) * voxel_size for k in range(3)]
        if any(a.size == 0 for a in axes):
            continue
        centers = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        inside = prim.contains(centers)
        cells[i0[0]:i1[0], i0[1]:i1[1], i0[2]:i1[2]] |= inside
    g = np.floor((np.asarray(spec.goal_position) - lo) / voxel_size).astype(int)
    if np.all((g >= 0) & (g < np.asarray(dims))):
        cells[g[0], g[1], g[2]] = False
    return OccupancyGrid(bounds.lo, voxel_size, cells)


@dataclass(frozen=True)
class SceneParams:
    """Knobs for :func:`generate_scene`.

    ``keep_clear`` holds points (typically the home backbone) that no
    obstacle may come within ``clear_margin`` of, so the start stays feasible.
    """

    home_tip: tuple = (0.543, 0.0, 0.426)
    workspace: AABB = AABB((-0.3, -0.7, -0.05), (1.05, 0.7, 0.95))
    goal_region: AABB = AABB((0.45, -0.35, 0.12), (0.85, 0.35, 0.55))
    goal_distance: tuple = (0.29, 0.35)
    keep_clear: tuple = ()
    clear_margin: float = 0.04
    obstacle_size: tuple = (0.06, 0.12)
    n_distractors: tuple = (0, 2)
    n_branches: tuple = (8, 16)
    wall_offset: tuple = (0.07, 0.10)
    wall_thickness: tuple = (0.03, 0.04)
    aperture_side: tuple = (0.09, 0.13)
    aperture_area: tuple = (0.0081, 0.0169)
    table: bool = False

    @classmethod
    def for_geometry(cls, geometry, **overrides) -> "SceneParams":
        from contiplan.kinematics import hybrid_backbone

        sample = hybrid_backbone(geometry, geometry.home(), 50)
        pts = tuple(tuple(p) for p in sample.points)
        return cls(home_tip=tuple(sample.tip_pose.translation), keep_clear=pts, **overrides)


def _clear_of(prim, points: np.ndarray, margin: float) -> bool:
    if points.size == 0:
        return True
    return not bool(np.any(prim.contains(points, margin=-margin)))


def _segment_blocked(prims, a, b, margin: float) -> bool:
    n = max(int(np.linalg.norm(np.asarray(b) - a) / 0.001), 2)
    pts = np.asarray(a) + np.linspace(0.0, 1.0, n)[:, None] * (np.asarray(b) - np.asarray(a))
    return any(bool(np.any(p.contains(pts, margin=margin))) for p in prims)


def _frame_from_z(z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    z = z / np.linalg.norm(z)
    # x points as far "down" as possible, the roll an upright arm takes naturally
    down = np.array([0.0, 0.0, -1.0]) if abs(z[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    x = down - (down @ z) * z
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return np.stack([x, y, z], axis=1)


def _yaw(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _sample_goal(rng, params: SceneParams, keep: np.ndarray) -> np.ndarray:
    home = np.asarray(params.home_tip)
    for _ in range(10000):
        u = rng.normal(size=3)
        u /= np.linalg.norm(u)
        d = rng.uniform(*params.goal_distance)
        g = home + d * u
        if not bool(params.goal_region.contains(g)):
            continue
        if keep.size and np.min(np.linalg.norm(keep - g, axis=1)) < 0.1:
            continue
        return g
    raise RuntimeError("could not place a goal inside the goal region")


def _table_floor(params: SceneParams) -> float:
    return params.workspace.lo[2] + 1e-3


def _obstacle_scene(rng, params, goal, keep):
    home = np.asarray(params.home_tip)
    floor = max(_table_floor(params), 0.0)
    for _ in range(500):
        t = rng.uniform(0.4, 0.6)
        mid = home + t * (goal - home)
        sx, sy = rng.uniform(*params.obstacle_size, size=2)
        top = mid[2] + rng.uniform(0.03, 0.10)
        height = top - floor
        jitter = rng.uniform(-0.015, 0.015, size=2)
        center = np.array([mid[0] + jitter[0], mid[1] + jitter[1], floor + height / 2.0])
        block = Box(Pose(_yaw(rng.uniform(-np.pi, np.pi)), center), (sx, sy, height))
        if not _segment_blocked([block], home, goal, margin=0.01):
            continue
        if not _clear_of(block, keep, params.clear_margin):
            continue
        if bool(block.contains(goal, margin=-0.03)):
            continue
        if not params.workspace.contains_box(block.aabb()):
            continue
        prims = [block]
        for _ in range(int(rng.integers(params.n_distractors[0], params.n_distractors[1] + 1))):
            for _ in range(50):
                c = np.array([
                    rng.uniform(params.goal_region.lo[0], params.goal_region.hi[0]),
                    rng.uniform(params.goal_region.lo[1], params.goal_region.hi[1]),
                    0.0,
                ])
                h = rng.uniform(0.08, 0.3)
                c[2] = floor + h / 2.0
                size = (*rng.uniform(*params.obstacle_size, size=2), h)
                extra = Box(Pose(_yaw(rng.uniform(-np.pi, np.pi)), c), tuple(size))
                if (_clear_of(extra, keep, params.clear_margin)
                        and not bool(extra.contains(goal, margin=-0.05))
                        and params.workspace.contains_box(extra.aabb())):
                    prims.append(extra)
                    break
        return prims
    raise RuntimeError("could not place a blocking obstacle")


def _clutter_scene(rng, params, goal, keep):
    """A plant: vertical trunk, thin branches and leaf boxes around the goal fruit."""
    home = np.asarray(params.home_tip)
    floor = max(_table_floor(params), 0.0)
    away = goal - home
    away[2] = 0.0
    away /= max(np.linalg.norm(away), 1e-9)
    for _ in range(500):
        prims = []
        trunk_xy = goal[:2] + away[:2] * rng.uniform(0.06, 0.10) + rng.uniform(-0.02, 0.02, size=2)
        trunk_top = min(goal[2] + rng.uniform(0.10, 0.2), params.workspace.hi[2] - 0.01)
        trunk_h = trunk_top - floor
        trunk = Cylinder(
            Pose(np.eye(3), [trunk_xy[0], trunk_xy[1], floor + trunk_h / 2.0]),
            float(rng.uniform(0.012, 0.018)), float(trunk_h),
        )
        prims.append(trunk)
        toward = math.atan2(-away[1], -away[0])
        for k in range(int(rng.integers(params.n_branches[0], params.n_branches[1] + 1))):
            z0 = rng.uniform(max(floor + 0.05, goal[2] - 0.15), trunk_top - 0.02)
            # every other branch leans toward the arm so foliage surrounds the fruit
            yaw = toward + rng.uniform(-0.9, 0.9) if k % 2 == 0 else rng.uniform(-np.pi, np.pi)
            tilt = rng.uniform(0.2, 0.8)
            d = np.array([math.cos(yaw) * math.sin(tilt + 0.6), math.sin(yaw) * math.sin(tilt + 0.6),
                          math.cos(tilt + 0.6)])
            length = rng.uniform(0.10, 0.22)
            start = np.array([trunk_xy[0], trunk_xy[1], z0])
            mid = start + d * length / 2.0
            branch = Cylinder(Pose(_frame_from_z(d), mid), float(rng.uniform(0.006, 0.009)), float(length))
            leaf_c = start + d * length
            leaf = Box(Pose(_frame_from_z(rng.normal(size=3)), leaf_c),
                       (float(rng.uniform(0.04, 0.07)), float(rng.uniform(0.03, 0.05)), 0.03))
            for prim in (branch, leaf):
                if (_clear_of(prim, keep, params.clear_margin)
                        and not bool(prim.contains(goal, margin=-0.025))
                        and params.workspace.contains_box(prim.aabb())):
                    prims.append(prim)
        # leaves across the direct line of sight to the fruit
        normal = (goal - home) / np.linalg.norm(goal - home)
        blockers = []
        for _ in range(int(rng.integers(2, 5))):
            c = home + rng.uniform(0.4, 0.85) * (goal - home) + rng.uniform(-0.04, 0.04, size=3)
            blockers.append(Box(Pose(_frame_from_z(normal + rng.normal(0, 0.2, 3)), c),
                                (float(rng.uniform(0.04, 0.07)), float(rng.uniform(0.04, 0.06)), 0.03)))
        if not all(_clear_of(b, keep, params.clear_margin) and params.workspace.contains_box(b.aabb())
                   for b in blockers):
            continue
        prims.extend(blockers)
        if not _clear_of(trunk, keep, params.clear_margin):
            continue
        if not _segment_blocked(prims, home, goal, margin=0.01):
            continue
        return prims
    raise RuntimeError("could not grow a plant around the goal")


def _holes_scene(rng, params, keep):
    """Wall between the home tip and the goal with an aperture off the direct line."""
    home = np.asarray(params.home_tip)
    floor = max(_table_floor(params), 0.0)
    for _ in range(2000):
        goal = _sample_goal(rng, params, keep)
        u = goal - home
        u[2] = 0.0
        if np.linalg.norm(u) < 0.18:
            continue
        u /= np.linalg.norm(u)
        lateral = np.array([-u[1], u[0], 0.0])
        offset = rng.uniform(*params.wall_offset)
        thick = rng.uniform(*params.wall_thickness)
        center_xy = goal[:2] - u[:2] * offset
        top = min(max(home[2], goal[2]) + 0.25, params.workspace.hi[2] - 0.002)
        height = top - floor
        rot = np.stack([u, lateral, [0.0, 0.0, 1.0]], axis=1)
        center = np.array([center_xy[0], center_xy[1], floor + height / 2.0])
        pose = Pose(rot, center)
        # the arm base must be on the near side
        if (np.zeros(3) - center) @ u >= 0:
            continue
        local_goal = (goal - center) @ rot
        w_a, h_a = rng.uniform(*params.aperture_side, size=2)
        if not params.aperture_area[0] <= w_a * h_a <= params.aperture_area[1]:
            continue
        side = rng.choice([-1.0, 1.0])
        ay = local_goal[1] + side * rng.uniform(0.06, 0.10)
        az = local_goal[2] + rng.uniform(-0.03, 0.03)
        wall = Wall(pose, (float(thick), 0.7, float(height)), (float(ay), float(az)), (float(w_a), float(h_a)))
        if not params.workspace.contains_box(wall.aabb()):
            continue
        if not _clear_of(wall, keep, params.clear_margin):
            continue
        if local_goal[0] <= thick / 2.0 + 0.03:
            continue
        if not _segment_blocked([wall], home, goal, margin=0.012):
            continue
        return goal, [wall]
    raise RuntimeError("could not place a wall with an aperture")


def generate_scene(archetype: str, seed: int, params: SceneParams | None = None) -> SceneSpec:
    """Deterministic synthetic tabletop scene for one of the four archetypes.

    The goal is placed 0.29-0.35 m from the home tip. Obstacle, Clutter and
    Holes scenes always block the straight home-tip-to-goal segment.
    """
    if archetype not in ARCHETYPES:
        raise ValueError(f"unknown archetype {archetype!r}")
    params = params or SceneParams()
    rng = np.random.default_rng([ARCHETYPES.index(archetype), int(seed)])
    keep = np.asarray(params.keep_clear, dtype=float).reshape(-1, 3)
    if archetype == "Holes":
        goal, prims = _holes_scene(rng, params, keep)
    else:
        goal = _sample_goal(rng, params, keep)
        if archetype == "Open":
            prims = []
        elif archetype == "Obstacle":
            prims = _obstacle_scene(rng, params, goal, keep)
        else:
            prims = _clutter_scene(rng, params, goal, keep)
    return SceneSpec(
        archetype=archetype,
        seed=int(seed),
        goal_position=tuple(goal),
        workspace_bounds=params.workspace,
        primitives=tuple(prims),
        table=params.table,
    )


# ---------------------------------------------------------------------------
# goal candidates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GoalCandidate:
    pose: Pose
    approach_direction: np.ndarray

    @property
    def position(self) -> np.ndarray:
        return self.pose.translation


def approach_pose(position, direction) -> Pose:
    """Tip pose at ``position`` whose +z (approach) axis is ``direction``."""
    return Pose(_frame_from_z(direction), position)


def goal_candidates(goal_position, standoff: float, grid: OccupancyGrid,
                    home_tip=None, noise: float = 0.0, rng=None) -> list[GoalCandidate]:
    """Up to four standoff poses around the goal, one per horizontal cardinal approach.

    Candidates whose position voxel is occupied are dropped. The rest are
    sorted by distance from ``home_tip`` (stable, so ties keep the +x, -x, +y,
    -y order). ``noise`` perturbs the goal position with isotropic Gaussian
    error, as a stand-in for detection and depth uncertainty.
    """
    if standoff < 0:
        raise ValueError("standoff must be >= 0")
    goal = np.asarray(goal_position, dtype=float)
    if noise > 0:
        rng = rng if rng is not None else np.random.default_rng()
        goal = goal + rng.normal(scale=noise, size=3)
    out = []
    for d in APPROACH_DIRECTIONS:
        p = goal - standoff * d
        if occ(grid, p):
            continue
        out.append(GoalCandidate(approach_pose(p, d), d.copy()))
    if home_tip is not None:
        h = np.asarray(home_tip, dtype=float)
        out.sort(key=lambda c: float(np.linalg.norm(c.position - h)))
    return out
