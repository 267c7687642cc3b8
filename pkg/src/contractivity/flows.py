"""Continuous-time checks: RK4 trajectories of x' = f(x), incremental
stability against e^{-ct} and forward-difference Dini-derivative margins."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import ContractivityError
from .linalg import NormSpec, vec_norm


class IntegrationError(ContractivityError):
    """Non-finite state during integration."""


@dataclass
class Trajectory:
    t: np.ndarray
    states: np.ndarray  # (len(t), ..., n)
    integrator: str = "RK4"

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0]) if len(self.t) > 1 else 0.0

    @property
    def end(self):
        return self.states[-1]


def _grid(T, dt):
    if not dt > 0:
        raise ValueError("dt must be positive")
    if not T >= dt:
        raise ValueError("T must be >= dt")
    return int(round(T / dt))


def rk4_step(f, X, dt):
    k1 = f(X)
    k2 = f(X + 0.5 * dt * k1)
    k3 = f(X + 0.5 * dt * k2)
    k4 = f(X + dt * k3)
    return X + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _check_finite(X, t):
    if not np.all(np.isfinite(X)):
        raise IntegrationError(f"non-finite state at t={t:.6g}")


def integrate(f, x0, T: float, dt: float, every: int = 1) -> Trajectory:
    """Classical RK4 on the uniform grid ``0, dt, ..., N dt`` with ``N = round(T/dt)``.

    ``x0`` may hold a batch of initial states, shape (m, n). ``every`` keeps
    only every k-th grid point (the endpoint is always kept).
    """
    steps = _grid(T, dt)
    X = np.array(x0, dtype=float)
    ts, xs = [0.0], [X.copy()]
    for k in range(1, steps + 1):
        X = rk4_step(f, X, dt)
        _check_finite(X, k * dt)
        if k % every == 0 or k == steps:
            ts.append(k * dt)
            xs.append(X.copy())
    return Trajectory(np.array(ts), np.array(xs))


def _pair_start(x0, y0, ns):
    X0 = np.atleast_2d(np.asarray(x0, dtype=float))
    Y0 = np.atleast_2d(np.asarray(y0, dtype=float))
    X0, Y0 = np.broadcast_arrays(X0, Y0)
    d0 = vec_norm(X0 - Y0, ns)
    if np.any(d0 == 0):
        raise ValueError("incremental checks need x0 != y0")
    return X0, Y0, d0


def _pair_sweep(f, ns, x0, y0, T, dt, visit):
    """Integrate both families together and call ``visit(k, t, X, Y, dist)``
    at every grid point without storing the trajectories."""
    X0, Y0, d0 = _pair_start(x0, y0, ns)
    m = X0.shape[0]
    Z = np.concatenate([X0, Y0])
    steps = _grid(T, dt)
    visit(0, 0.0, X0, Y0, d0)
    for k in range(1, steps + 1):
        Z = rk4_step(f, Z, dt)
        _check_finite(Z, k * dt)
        X, Y = Z[:m], Z[m:]
        visit(k, k * dt, X, Y, vec_norm(X - Y, ns))
    return d0


def incremental_stability_margin(f, ns: NormSpec, x0, y0, c: float, T: float, dt: float) -> float:
    """``min_t e^{-ct}||x0 - y0|| - ||x(t) - y(t)||`` over the grid and all pairs.

    Non-negative (up to integrator error) when f is c-strongly contracting
    in ``ns``.
    """
    _, _, d0 = _pair_start(x0, y0, ns)
    worst = [np.inf]

    def visit(k, t, X, Y, dist):
        worst[0] = min(worst[0], float(np.min(np.exp(-c * t) * d0 - dist)))

    _pair_sweep(f, ns, x0, y0, T, dt, visit)
    return worst[0]


def dini_decay_check(f, ns: NormSpec, x0, y0, c: float, T: float, dt: float):
    """Margins ``-c||D(t)|| - (||D(t+dt)|| - ||D(t)||)/dt`` on the grid, D = x - y.

    Returns an array of shape (N,) for a single pair or (N, m) for m pairs.
    The forward difference carries an O(dt) error.
    """
    dists = []
    _pair_sweep(f, ns, x0, y0, T, dt, lambda k, t, X, Y, d: dists.append(d))
    D = np.array(dists)
    margins = -c * D[:-1] - np.diff(D, axis=0) / dt
    return margins[:, 0] if margins.shape[1] == 1 else margins


def flow_contraction_check(f, ns: NormSpec, x0, y0, c: float, T: float, dt: float):
    """Per-pair ``||x(T) - y(T)|| - e^{-cT}||x0 - y0||`` (<= 0 for a contracting flow)."""
    _, _, d0 = _pair_start(x0, y0, ns)
    last = {}

    def visit(k, t, X, Y, dist):
        last["d"] = dist

    _pair_sweep(f, ns, x0, y0, T, dt, visit)
    return last["d"] - np.exp(-c * T) * d0


def lyapunov_series(f, ns: NormSpec, traj: Trajectory, x_star):
    """``||x(t) - x*||^2`` and ``||f(x(t))||^2`` along a trajectory."""
    dist = vec_norm(traj.states - np.asarray(x_star, dtype=float), ns) ** 2
    resid = vec_norm(f(traj.states), ns) ** 2
    return dist, resid


def pair_trajectory_rows(f, ns: NormSpec, x0, y0, c: float, T: float, dt: float, every: int = 1):
    """Rows ``t, x.., y.., ||x - y||, e^{-ct}||x0 - y0||, margin`` for one pair."""
    x0 = np.asarray(x0, dtype=float)
    n = x0.shape[-1]
    header = ["t"] + [f"x{i + 1}" for i in range(n)] + [f"y{i + 1}" for i in range(n)] + \
             ["dist", "bound", "margin"]
    rows = [header]
    d0 = float(vec_norm(x0 - np.asarray(y0, dtype=float), ns))

    def visit(k, t, X, Y, dist):
        if k % every:
            return
        bound = float(np.exp(-c * t) * d0)
        d = float(dist[0])
        rows.append([t] + X[0].tolist() + Y[0].tolist() + [d, bound, bound - d])

    _pair_sweep(f, ns, x0, y0, T, dt, visit)
    return rows


def rows_to_csv(rows) -> str:
    """CSV with floats in shortest round-trip form (stable across runs)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()
