"""Benchmark suites comparing predicted and measured contraction factors.

``kappa-scaling`` builds affine systems with prescribed (c, ell) for each
kappa and runs every solver at its automatic step. ``conjectures`` probes
questions the theory leaves open; its rows are observations, not checks.
"""
from __future__ import annotations

import math
import warnings

import numpy as np

from .fields import affine_field, certificate, tanh_network
from .linalg import NormSpec
from .solvers import (SolverConfig, SolverWarning, euclidean_optimal_step, extragradient_series,
                      extragradient_solve, forward_solve, implicit_solve, wp_optimal_step)
from .sphere import attractor_field, sample_ball, sphere_dist, sphere_exp

KAPPAS = (2, 5, 10, 20, 50, 100)
COLUMNS = ["suite", "kappa", "method", "norm", "instance", "alpha", "predicted", "empirical", "note"]
STEPS = 2000


def normal_instance(c, ell):
    """``-c I + w J`` with ``w = sqrt(ell^2 - c^2)``: mu_2 = -c, ||A||_2 = ell."""
    w = math.sqrt(ell * ell - c * c)
    return np.array([[-c, -w], [w, -c]])


def symmetric_instance(c, ell):
    return np.diag([-c, -ell])


def balanced_instance(c, ell):
    """Symmetric 2x2 with mu_1 = mu_inf = -c and ||A||_1 = ||A||_inf = ell."""
    return 0.5 * np.array([[-(ell + c), ell - c], [ell - c, -(ell + c)]])


def _system(A, rng):
    b = rng.uniform(-1.0, 1.0, size=A.shape[0])
    f = affine_field(A, b)
    x_star = f.equilibrium()
    x0 = x_star + rng.choice((-1.0, 1.0), size=A.shape[0]) * rng.uniform(0.5, 1.5, size=A.shape[0])
    return f, x_star, x0


def _row(suite, kappa, method, norm, instance, alpha, predicted, empirical, note=""):
    return [suite, kappa, method, norm, instance, alpha, predicted, empirical, note]


def _measured(trace):
    return trace.empirical_factor()


def kappa_scaling(seed: int = 0, kappas=KAPPAS):
    rows = []
    rng = np.random.default_rng(seed)
    cfg = SolverConfig(max_iter=STEPS, tol=1e-13)
    for kappa in kappas:
        c, ell = 1.0, float(kappa)
        for instance, A in (("normal", normal_instance(c, ell)), ("symmetric", symmetric_instance(c, ell))):
            ns = NormSpec(p="2")
            cert = certificate(ns, c, ell, mode="exact-affine")
            f, x_star, x0 = _system(A, rng)
            alpha, pred = euclidean_optimal_step(cert)
            tr = forward_solve(f, cert, cfg, x0, x_star)
            note = "bound tight for normal A" if instance == "normal" else \
                "symmetric A contracts by 1-1/kappa^2 < bound"
            rows.append(_row("kappa-scaling", kappa, "forward", "l2", instance, alpha, pred, _measured(tr), note))

        for p in ("1", "inf"):
            ns = NormSpec(p=p)
            cert = certificate(ns, c, ell, mode="exact-affine")
            f, x_star, x0 = _system(balanced_instance(c, ell), rng)
            step = wp_optimal_step(cert)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", SolverWarning)
                tr = forward_solve(f, cert, cfg, x0, x_star)
            gap = abs(_measured(tr) - step.predicted_factor)
            note = f"|empirical-series|={gap:.3e}" + ("; kappa<2 midpoint step" if step.fallback else "")
            rows.append(_row("kappa-scaling", kappa, "forward", f"l{p}", "balanced", step.alpha,
                             step.predicted_factor, _measured(tr), note))

        for norm, A in (("l2", normal_instance(c, ell)), ("l1", balanced_instance(c, ell))):
            ns = NormSpec(p=norm[1:])
            cert = certificate(ns, c, ell, mode="exact-affine")
            f, x_star, x0 = _system(A, rng)
            tr = extragradient_solve(f, cert, cfg, x0, x_star)
            rows.append(_row("kappa-scaling", kappa, "extragradient", norm,
                             "normal" if norm == "l2" else "balanced", tr.alpha,
                             extragradient_series(kappa), _measured(tr),
                             f"bound={tr.factor_bound!r}"))

        ns = NormSpec(p="1")
        cert = certificate(ns, c, ell, mode="exact-affine")
        f, x_star, x0 = _system(balanced_instance(c, ell), rng)
        tr = implicit_solve(f, cert, SolverConfig(method="implicit-fixed-point", max_iter=200, tol=1e-13),
                            x0, x_star)
        rows.append(_row("kappa-scaling", kappa, "implicit-fixed-point", "l1", "balanced", tr.alpha,
                         tr.factor_bound, _measured(tr), "bound 1/(1+alpha c)"))
    return rows


def _sphere_banach(seed):
    rows = []
    p = np.array([0.0, 0.0, 1.0])
    X = attractor_field(p)
    x = sample_ball(p, 0.45 * np.pi, 2000, seed)
    y = sample_ball(p, 0.45 * np.pi, 2000, seed + 1)
    d0 = sphere_dist(x, y)
    keep = d0 > 1e-6
    for alpha in (0.25, 0.5, 0.75, 1.0):
        Tx = sphere_exp(x, alpha * X(x))
        Ty = sphere_exp(y, alpha * X(y))
        ratio = sphere_dist(Tx, Ty)[keep] / d0[keep]
        rows.append(_row("conjectures", "", "riemannian-forward", "geodesic", "attractor-ball-0.45pi", alpha,
                         1.0 - alpha, float(ratio.max()), "max pair ratio d(Tx,Ty)/d(x,y)"))
    return rows


def _newton_global(seed):
    rows = []
    rng = np.random.default_rng(seed)
    n = 3
    D = np.full(n, 2.0)
    W = rng.uniform(-0.5, 0.5, size=(n, n))
    f = tanh_network(D, W, rng.uniform(-1, 1, size=n))
    ns = NormSpec(p="inf")
    c = 2.0 - float(np.abs(W).sum(axis=1).max())
    ell = 2.0 + float(np.abs(W).sum(axis=1).max())
    cert = certificate(ns, c, ell)
    for alpha in (0.1, 1.0, 10.0):
        starts = rng.uniform(-50, 50, size=(20, n))
        ok = 0
        worst_inner = 0
        for x0 in starts:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", SolverWarning)
                tr = implicit_solve(f, cert, SolverConfig(method="implicit-newton", alpha=alpha, max_iter=500),
                                    x0, fallback=False)
            ok += tr.converged
            worst_inner = max(worst_inner, max(tr.inner_iterations, default=0))
        rows.append(_row("conjectures", round(ell / c, 12), "implicit-newton", "linf", "tanh-network", alpha,
                         float("nan"), ok / len(starts),
                         f"converged fraction from far starts; max inner iterations {worst_inner}"))
    return rows


def _extragradient_order(kappas=KAPPAS):
    """Best worst-case extra-gradient factor over a step grid.

    For normal A the per-step factor is ``max |1 + a z + a^2 z^2|`` over the
    spectrum; the worst case over the class {Re z <= -c, |z| <= ell} is taken
    on its boundary (the arc |z| = ell and the segment Re z = -c).
    """
    rows = []
    for kappa in kappas:
        c, ell = 1.0, float(kappa)
        top = math.acos(-c / ell)
        arc = ell * np.exp(1j * np.linspace(top, np.pi, 400))
        seg = -c + 1j * np.linspace(0.0, math.sqrt(ell * ell - c * c), 400)
        z = np.concatenate([arc, seg])
        alphas = np.geomspace(1e-3, 2.0, 4000) / ell
        az = alphas[:, None] * z[None, :]
        worst = np.abs(1 + az + az * az).max(axis=1)
        i = int(np.argmin(worst))
        best = float(worst[i])
        rows.append(_row("conjectures", kappa, "extragradient-best-step", "l2", "normal-class-worst-case",
                         float(alphas[i]), 1.0 - 1.0 / kappa, best,
                         f"kappa*(1-factor)={kappa * (1 - best):.4f}; "
                         f"kappa^1.5*(1-factor)={kappa ** 1.5 * (1 - best):.4f}"))
    return rows


def conjectures(seed: int = 0):
    return _sphere_banach(seed) + _newton_global(seed) + _extragradient_order()


SUITES = {"kappa-scaling": kappa_scaling, "conjectures": conjectures}


def run(suite: str, seed: int = 0):
    try:
        fn = SUITES[suite]
    except KeyError:
        raise ValueError(f"unknown suite {suite!r}; known: {sorted(SUITES)}") from None
    return [COLUMNS] + fn(seed)
