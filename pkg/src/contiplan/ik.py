"""Damped least-squares solver on box-bounded parameters.

Both the planner (goal-biased samples in configuration space) and the
controller oracle (actuation space) use :func:`solve_dls`; they only differ
in the residual they pass in.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from contiplan.kinematics import wrap_angle


@dataclass
class DLSResult:
    x: np.ndarray
    residual: np.ndarray
    iterations: int
    converged: bool

    @property
    def error(self) -> float:
        return float(np.linalg.norm(self.residual))


def _project(x, lo, hi, periodic):
    x = np.clip(x, lo, hi)
    if periodic is not None and periodic.any():
        x = np.where(periodic, wrap_angle(x), x)
    return x


def solve_dls(
    residual: Callable[[np.ndarray], np.ndarray],
    x0,
    lo,
    hi,
    *,
    converged: Callable[[np.ndarray], bool],
    periodic=None,
    damping: float = 1e-2,
    max_iter: int = 100,
    step_limit: float = 0.3,
    fd_step: float = 1e-6,
) -> DLSResult:
    """Minimize ``||residual(x)||`` over the box ``[lo, hi]``.

    ``residual`` maps a batch (B, n) to (B, m); the Jacobian is taken by
    forward differences from one batched call per iteration. The damping
    adapts Levenberg-Marquardt style: halved after an accepted step, grown
    tenfold after a rejected one.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    periodic = None if periodic is None else np.asarray(periodic, dtype=bool)
    x = _project(np.asarray(x0, dtype=float).copy(), lo, hi, periodic)
    n = x.size
    r = residual(x[None, :])[0]
    lam = damping
    it = 0
    for it in range(1, max_iter + 1):
        if converged(r):
            return DLSResult(x, r, it - 1, True)
        # step backwards at the upper bound so probes stay feasible
        h = np.where(x + fd_step > hi, -fd_step, fd_step)
        probes = np.repeat(x[None, :], n, axis=0) + np.diag(h)
        rp = residual(probes)
        jac = ((rp - r[None, :]) / h[:, None]).T
        jjt = jac @ jac.T
        accepted = False
        for _ in range(6):
            dx = -jac.T @ np.linalg.solve(jjt + lam**2 * np.eye(jjt.shape[0]), r)
            norm = np.linalg.norm(dx)
            if norm > step_limit:
                dx *= step_limit / norm
            x_new = _project(x + dx, lo, hi, periodic)
            r_new = residual(x_new[None, :])[0]
            if r_new @ r_new < r @ r:
                x, r = x_new, r_new
                lam = max(lam * 0.5, 1e-6)
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            break
    return DLSResult(x, r, it, bool(converged(r)))
