"""Reference implementations used only by the tests.

Each one computes the same quantity as a library function by a different
route, so agreement is evidence rather than tautology.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.spatial.transform import Rotation

from contiplan.kinematics import BackboneSampler


def integrate_arc(kappa, phi, length, n_steps=2000):
    """RK4 integration of a unit-speed curve with constant body-frame curvature.

    The tangent frame obeys dR/ds = R [w]x, dp/ds = R e_z with
    w = kappa (sin phi, -cos phi, 0), which bends the tip toward
    -(cos phi, sin phi, 0). Vectorized over the leading axis.
    """
    kappa = np.atleast_1d(np.asarray(kappa, float))
    phi = np.atleast_1d(np.asarray(phi, float))
    length = np.broadcast_to(np.asarray(length, float), kappa.shape)
    n = kappa.shape[0]
    w = np.stack([kappa * np.sin(phi), -kappa * np.cos(phi), np.zeros(n)], axis=1)
    wx = np.zeros((n, 3, 3))
    wx[:, 0, 1], wx[:, 0, 2] = -w[:, 2], w[:, 1]
    wx[:, 1, 0], wx[:, 1, 2] = w[:, 2], -w[:, 0]
    wx[:, 2, 0], wx[:, 2, 1] = -w[:, 1], w[:, 0]
    h = (length / n_steps)[:, None, None]
    R = np.broadcast_to(np.eye(3), (n, 3, 3)).copy()
    p = np.zeros((n, 3))

    def f(R_):
        return R_ @ wx, R_[:, :, 2]

    for _ in range(n_steps):
        k1R, k1p = f(R)
        k2R, k2p = f(R + 0.5 * h * k1R)
        k3R, k3p = f(R + 0.5 * h * k2R)
        k4R, k4p = f(R + h * k3R)
        p = p + (h[:, :, 0] / 6.0) * (k1p + 2 * k2p + 2 * k3p + k4p)
        R = R + (h / 6.0) * (k1R + 2 * k2R + 2 * k3R + k4R)
    return p, R


def _hom(R, t):
    T = np.eye(4)
    T[:3, :3] = R
    T[:3, 3] = t
    return T


def chain_fk_reverse(geometry, joints):
    """Flange transform composed right-to-left through inverses, with scipy rotations."""
    pieces = []
    for j, q in zip(geometry.joints, joints):
        pieces.append(_hom(j.origin.rotation, j.origin.translation))
        pieces.append(_hom(Rotation.from_rotvec(np.asarray(j.axis, float) * q).as_matrix(), np.zeros(3)))
    pieces.append(_hom(geometry.flange.rotation, geometry.flange.translation))
    # inverse of the product = product of inverses in reverse order
    inv = np.eye(4)
    for P in pieces:
        inv = np.linalg.inv(P) @ inv
    return np.linalg.inv(inv)


def voxel_occupied(grid, p) -> int:
    """Per-point floor-index lookup in pure Python."""
    idx = [math.floor((float(p[k]) - float(grid.origin[k])) / grid.voxel_size) for k in range(3)]
    if any(i < 0 or i >= d for i, d in zip(idx, grid.cells.shape)):
        return 0
    return int(grid.cells[idx[0], idx[1], idx[2]])


def occupied_many(grid, pts) -> np.ndarray:
    idx = np.floor((np.asarray(pts) - np.asarray(grid.origin)) / grid.voxel_size).astype(np.int64)
    dims = np.array(grid.cells.shape)
    inside = np.all((idx >= 0) & (idx < dims), axis=-1)
    out = np.zeros(idx.shape[:-1], dtype=bool)
    out[inside] = grid.cells[idx[inside][:, 0], idx[inside][:, 1], idx[inside][:, 2]]
    return out


def metric(a, b, w=(1, 1, 1, 1, 1, 1, 0.25, 0.25)):
    w = np.asarray(w, float)
    dphi = (b[7] - a[7] + np.pi) % (2 * np.pi) - np.pi
    kbar = 0.5 * (a[6] + b[6])
    return math.sqrt(float(np.sum((w[:6] * (b[:6] - a[:6])) ** 2) + (w[6] * (b[6] - a[6])) ** 2
                           + (w[7] * kbar * dphi) ** 2))


def interp(a, b, t):
    dphi = (b[7] - a[7] + np.pi) % (2 * np.pi) - np.pi
    q = a + t * (b - a)
    q[7] = a[7] + t * dphi
    q[7] = (q[7] + np.pi) % (2 * np.pi) - np.pi
    return q


def validate(plan, grid, geometry, tau, resolution, factor=10, n_backbone=50):
    """Dense recheck of every waypoint and edge; returns (violations, max c_rigid, max c_soft, samples)."""
    qs = [w.to_vector() for w in plan.waypoints]
    samples = [qs[0]]
    fine = resolution / factor
    for a, b in zip(qs[:-1], qs[1:]):
        n = max(1, math.ceil(metric(a, b) / fine))
        samples.extend(interp(a, b, k / n) for k in range(1, n + 1))
    Q = np.array(samples)
    sampler = BackboneSampler(geometry, n_backbone)
    pts = sampler.points(Q)
    occ = occupied_many(grid, pts)
    tags = np.array([t == "rigid" for t in sampler.tags])
    cr = occ[:, tags].sum(axis=1)
    cs = occ[:, ~tags].sum(axis=1)
    bad = (cr > 0) | (cs > tau)
    return int(bad.sum()), int(cr.max()), int(cs.max()), len(Q)
