"""Acceptance suite: one PASS/FAIL line per criterion is printed at the end of
the pytest run (see conftest.py). Run standalone with
``python tests/test_acceptance.py``."""
import subprocess
import sys
import time
import warnings

import numpy as np
import pytest

from contractivity import bench, cli
from contractivity.fields import VectorField, affine_field, certificate, certify
from contractivity.flows import incremental_stability_margin, pair_trajectory_rows, rows_to_csv
from contractivity.linalg import NormSpec, mat_norm, matrix_measure, matrix_measure_oracle
from contractivity.pairings import WeakPairing, wp_axiom_check
from contractivity.solvers import (SolverConfig, SolverWarning, empirical_contraction_factor,
                                   euclidean_optimal_step, extragradient_factor_bound, extragradient_solve,
                                   forward_solve, implicit_factor, implicit_solve, newton_order,
                                   wp_step_range)
from contractivity.sphere import (attractor_field, geodesic_contraction_margin, project_tangent,
                                  riemannian_forward_step, sample_ball, sphere_exp, sphere_log,
                                  sphere_transport)

from conftest import PAPER_A, PAPER_B

acc = pytest.mark.acceptance


def _affine_suite():
    rng = np.random.default_rng(11)
    M = rng.uniform(-1, 1, size=(3, 3))
    np.fill_diagonal(M, 0.0)
    A3 = M - np.diag(np.abs(M).sum(axis=1) + rng.uniform(0.5, 2.0, size=3))
    return [
        ("paper-l1", affine_field(PAPER_A, PAPER_B), NormSpec(p="1"), np.zeros(2)),
        ("minus-x", affine_field(-np.eye(1)), NormSpec(p="2"), np.array([8.0])),
        ("dd3-linf", affine_field(A3, rng.uniform(-2, 2, size=3)), NormSpec(p="inf"), np.zeros(3)),
    ]


# -- 1 ---------------------------------------------------------------------------

@acc(1, "paper example reproduction")
def test_c1_paper_example(paper_field):
    t0 = time.perf_counter()
    l1, l2 = NormSpec(p="1"), NormSpec(p="2")
    assert matrix_measure(PAPER_A, l1) == -0.5
    assert abs(matrix_measure(PAPER_A, l2) - 0.231) <= 1e-3
    assert mat_norm(PAPER_A, l1) == 19.0
    cert = certify(paper_field, l1)
    _, hi = wp_step_range(cert)
    assert abs(hi - 0.5 / (19 * 19.5)) <= 1e-9
    x_star = np.linalg.solve(PAPER_A, -PAPER_B)
    trace = forward_solve(paper_field, cert, SolverConfig(alpha=1e-3), np.zeros(2))
    assert trace.converged
    assert np.max(np.abs(trace.x - x_star)) <= 1e-8
    assert time.perf_counter() - t0 < 1.0


# -- 2 ---------------------------------------------------------------------------

def _random_weight(rng, n):
    # diagonal scaling in [0.8, 1.25] times a rotation: cond_2(R) <= 1.57
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return np.diag(rng.uniform(0.8, 1.25, n)) @ Q


@acc(2, "closed-form measure equals limit oracle")
def test_c2_oracle_equivalence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    worst = 0.0
    for k in range(200):
        n = int(rng.integers(2, 9))
        A = rng.uniform(-5.0, 5.0, size=(n, n))
        p = ("1", "2", "inf")[k % 3]
        weighted = (k // 3) % 2 == 1
        ns = NormSpec(p=p, weight=_random_weight(rng, n) if weighted else None)
        gap = abs(matrix_measure(A, ns) - matrix_measure_oracle(A, ns, h_min=1e-8))
        worst = max(worst, gap)
    assert worst <= 1e-5
    assert time.perf_counter() - t0 < 10.0


# -- 3 ---------------------------------------------------------------------------

@acc(3, "weak-pairing axioms and Deimling margins")
def test_c3_pairing_axioms():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    n = 4
    R = np.eye(n) + 0.3 * rng.standard_normal((n, n))
    Q = rng.standard_normal((n, n))
    specs = [NormSpec(p="1"), NormSpec(p="2"), NormSpec(p="inf"),
             NormSpec(p="1", weight=R), NormSpec(p="inf", weight=R), NormSpec(p="2", P=Q @ Q.T + np.eye(n))]
    for i, ns in enumerate(specs):
        report = wp_axiom_check(WeakPairing(ns), 10_000, seed=i, dim=n)
        assert report.ok(tol=1e-9, deimling_tol=1e-6), report.to_json()["violations"]
    assert time.perf_counter() - t0 < 10.0


# -- 4 ---------------------------------------------------------------------------

def _symmetric_nd(rng, n, c, ell):
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    lam = np.concatenate([[c, ell], rng.uniform(c, ell, size=n - 2)])
    return -(Q * lam) @ Q.T


@acc(4, "Euclidean optimal forward step factor")
@pytest.mark.parametrize("kappa", [2, 10, 50])
def test_c4_euclidean_optimal_factor(kappa):
    rng = np.random.default_rng(kappa)
    c, ell = 1.0, float(kappa)
    A = _symmetric_nd(rng, 4, c, ell)
    ns = NormSpec(p="2")
    cert = certify(affine_field(A), ns)
    alpha, predicted = euclidean_optimal_step(cert)
    F = lambda X: X + alpha * X @ A.T
    empirical = empirical_contraction_factor(F, ns, 20_000, seed=kappa, dim=4)
    assert abs(empirical - predicted) <= 1e-6, (empirical, predicted)


# -- 5 ---------------------------------------------------------------------------

def _paper_step_map(alpha):
    return lambda X: X + alpha * X @ PAPER_A.T


@acc(5, "weak-pairing forward step range guarantee")
def test_c5_factor_below_one_in_range(paper_field):
    ns = NormSpec(p="1")
    _, hi = wp_step_range(certify(paper_field, ns))
    for alpha in np.linspace(0.01, 0.99, 10) * hi:
        emp = empirical_contraction_factor(_paper_step_map(alpha), ns, 4000, seed=5, dim=2)
        assert emp < 1.0
        assert emp <= mat_norm(np.eye(2) + alpha * PAPER_A, ns) + 1e-12


@acc(5, "weak-pairing forward step range guarantee")
def test_c5_factor_at_least_one_beyond_range(paper_field):
    ns = NormSpec(p="1")
    _, hi = wp_step_range(certify(paper_field, ns))
    emp = empirical_contraction_factor(_paper_step_map(10 * hi), ns, 4000, seed=5, dim=2)
    assert emp >= 1.0, emp


# -- 6 ---------------------------------------------------------------------------

@acc(6, "implicit Euler unconditional stability")
@pytest.mark.parametrize("alpha", [0.1, 1.0, 10.0])
def test_c6_outer_factor(alpha):
    for name, f, ns, x0 in _affine_suite():
        cert = certify(f, ns)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", SolverWarning)
            tr = implicit_solve(f, cert, SolverConfig(method="implicit", alpha=alpha), x0)
        assert tr.converged, name
        rho = tr.measured_factors()
        assert rho.size > 0 or tr.iterations <= 2, name
        assert np.all(rho <= implicit_factor(alpha, cert.rate) + 1e-9), (name, rho.max())


@acc(6, "implicit Euler unconditional stability")
def test_c6_fixed_point_inner_factor():
    cases = [(name, f, ns, x0, a) for (name, f, ns, x0) in _affine_suite() for a in (0.01, 0.05, 0.1)]
    checked = 0
    for name, f, ns, x0, alpha in cases:
        cert = certify(f, ns)
        if alpha * cert.lipschitz >= 1:
            continue
        tr = implicit_solve(f, cert, SolverConfig(method="implicit-fixed-point", alpha=alpha), x0)
        assert tr.converged
        inner = np.array(tr.inner_factors)
        inner = inner[np.isfinite(inner)]
        assert np.all(inner <= alpha * cert.lipschitz + 1e-9), (name, alpha)
        checked += inner.size
    assert checked > 0


def _newton_field():
    # -3x + 2 tanh(x) + 2: Jacobian in [-3, -1], so c = 1, ell = 3 in l2
    return VectorField(1, lambda x: -3 * x + 2 * np.tanh(x) + 2.0,
                       jac=lambda x: np.atleast_2d(-3 + 2 / np.cosh(x[0]) ** 2), kind="builtin")


@acc(6, "implicit Euler unconditional stability")
def test_c6_newton_quadratic():
    f = _newton_field()
    cert = certificate(NormSpec(p="2"), 1.0, 3.0)
    x0 = np.array([1.3779985])  # ||f(x0)|| = 0.37 below the start bound 0.456 at alpha = 0.3
    tr = implicit_solve(f, cert, SolverConfig(method="implicit-newton", alpha=0.3, inner_tol=1e-16), x0)
    assert tr.converged and not tr.warnings
    orders = [newton_order(h) for h in tr.inner_history]
    orders = [q for q in orders if np.isfinite(q)]
    assert orders and min(orders) >= 1.9, orders


# -- 7 ---------------------------------------------------------------------------

@acc(7, "extra-gradient factor bound")
def test_c7_bound_every_step():
    for name, f, ns, x0 in _affine_suite():
        cert = certify(f, ns)
        alphas = ["auto", 0.5 / (cert.rate * cert.kappa ** 1.5), 0.99 / (cert.rate * cert.kappa ** 1.5)]
        for a in alphas:
            tr = extragradient_solve(f, cert, SolverConfig(alpha=a), x0)
            assert tr.converged, (name, a)
            bound = extragradient_factor_bound(tr.alpha, cert.rate, cert.lipschitz)
            assert np.all(tr.measured_factors() <= bound + 1e-9), (name, a)


@acc(7, "extra-gradient factor bound")
def test_c7_minus_x_exact():
    f = affine_field(-np.eye(1))
    cert = certify(f, NormSpec(p="2"))
    tr = extragradient_solve(f, cert, SolverConfig(alpha=0.5), np.array([1.0]))
    rho = tr.measured_factors()
    assert rho.size > 10
    assert np.max(np.abs(rho - 0.75)) <= 1e-15


# -- 8 ---------------------------------------------------------------------------

@acc(8, "incremental stability along RK4 trajectories")
def test_c8_incremental_stability(paper_field, tmp_path):
    rng = np.random.default_rng(8)
    cases = [(paper_field, NormSpec(p="1"))]
    M = rng.uniform(-1, 1, size=(3, 3))
    np.fill_diagonal(M, -3.0)
    cases.append((affine_field(M, rng.uniform(-1, 1, 3)), NormSpec(p="inf")))
    for f, ns in cases:
        c = certify(f, ns).rate
        X0 = rng.uniform(-5, 5, size=(100, f.dim))
        Y0 = rng.uniform(-5, 5, size=(100, f.dim))
        margin = incremental_stability_margin(f, ns, X0, Y0, c, T=10.0, dt=1e-4)
        assert margin >= -1e-6, margin

    rows = pair_trajectory_rows(paper_field, NormSpec(p="1"), [0.0, 0.0], [4.0, -3.0], 0.5, 10.0, 1e-3,
                                every=100)
    out = tmp_path / "fig1.csv"
    out.write_text(rows_to_csv(rows))
    dist = np.array([r[5] for r in rows[1:]])
    bound = np.array([r[6] for r in rows[1:]])
    assert np.all(np.diff(dist) <= 0)
    assert np.all(dist <= bound + 1e-6)
    assert dist[-1] < 1e-2 * dist[0]


# -- 9 ---------------------------------------------------------------------------

@acc(9, "unit-sphere suite")
def test_c9_sphere():
    t0 = time.perf_counter()
    rng = np.random.default_rng(9)
    x = sample_ball([0.3, -0.2, 1.0], np.pi, 2000, seed=9)
    v = project_tangent(x, rng.standard_normal((2000, 3)))
    v *= (rng.uniform(0, np.pi - 1e-3, size=(2000, 1)) / np.linalg.norm(v, axis=1, keepdims=True))
    assert np.max(np.abs(sphere_log(x, sphere_exp(x, v)) - v)) <= 1e-9

    y = sample_ball(x[0], 0.9 * np.pi, 2000, seed=10)
    u = project_tangent(x, rng.standard_normal((2000, 3)))
    w = project_tangent(x, rng.standard_normal((2000, 3)))
    Pu, Pw = sphere_transport(x, y, u), sphere_transport(x, y, w)
    assert np.max(np.abs(np.linalg.norm(Pu, axis=1) - np.linalg.norm(u, axis=1))) <= 1e-9
    assert np.max(np.abs(np.sum(Pu * Pw, axis=1) - np.sum(u * w, axis=1))) <= 1e-9

    p = np.array([0.0, 0.0, 1.0])
    X = attractor_field(p)
    a = sample_ball(p, 0.45 * np.pi, 2000, seed=11)
    b = sample_ball(p, 0.45 * np.pi, 2000, seed=12)
    assert geodesic_contraction_margin(X, (a, b), 0.05) >= 0.0

    for alpha in (0.25, 0.5, 0.9):
        _, dist = riemannian_forward_step(X, alpha, [1.0, 0.0, 0.0], max_iter=30)
        keep = dist[:-1] > 1e-6
        ratio = dist[1:][keep] / dist[:-1][keep]
        assert np.max(np.abs(ratio - (1 - alpha))) <= 1e-12
    assert time.perf_counter() - t0 < 5.0


# -- 10 --------------------------------------------------------------------------

@acc(10, "deterministic outputs")
def test_c10_determinism(tmp_path):
    matrix = tmp_path / "A.json"
    matrix.write_text('{"rows": 2, "cols": 2, "data": [-10, 2.5, 9, -3]}')
    problem = tmp_path / "p.json"
    problem.write_text('{"field": {"kind": "affine", "A": [[-10, 2.5], [9, -3]], "b": [-19, 20]},'
                       ' "norm": {"p": "1"}}')
    nonlinear = tmp_path / "q.json"
    nonlinear.write_text('{"field": {"kind": "expr", "source": "-2*x1 + 0.5*tanh(x2); -2*x2 + 0.5*sin(x1)",'
                         ' "dim": 2}, "norm": {"p": "inf"}, "seed": 4}')
    commands = [
        ["measure", str(matrix), "--p", "1"],
        ["certify", str(problem)],
        ["certify", str(nonlinear)],
        ["solve", str(problem), "--method", "extragradient", "--trace", "{dir}/trace.csv"],
        ["solve", str(nonlinear), "--method", "implicit", "--trace", "{dir}/trace.csv"],
        ["flow", str(problem), "--x0", "0,0", "--y0", "1,-1", "-T", "2", "--dt", "1e-3", "--check-rate", "0.5"],
        ["sphere", "--alpha", "0.3", "--iters", "15"],
        ["bench", "--suite", "conjectures", "--seed", "3"],
    ]
    for cmd in commands:
        outputs = []
        for run in range(2):
            d = tmp_path / f"run{run}"
            d.mkdir(exist_ok=True)
            args = [a.format(dir=d) for a in cmd] + ["--out", str(d / "out")]
            assert cli.main(args) == 0, cmd
            files = sorted(d.iterdir())
            outputs.append({p.name: p.read_bytes() for p in files})
        assert outputs[0] == outputs[1], cmd

    # across processes too
    runs = [subprocess.run([sys.executable, "-m", "contractivity.cli", "bench", "--suite", "kappa-scaling",
                            "--seed", "7"], capture_output=True, check=True).stdout for _ in range(2)]
    assert runs[0] == runs[1] and runs[0]


# -- bench note ------------------------------------------------------------------

@acc("note", "bench: weak-pairing series band at kappa >= 50")
def test_bench_series_band():
    rows = bench.run("kappa-scaling", seed=0)
    head, body = rows[0], rows[1:]
    idx = {k: i for i, k in enumerate(head)}
    wp_rows = [r for r in body if r[idx["method"]] == "forward" and r[idx["norm"]] in ("l1", "linf")
               and r[idx["kappa"]] >= 50]
    assert wp_rows
    for r in wp_rows:
        assert abs(r[idx["empirical"]] - r[idx["predicted"]]) <= 5e-3
        assert r[idx["empirical"]] <= 1.0


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
