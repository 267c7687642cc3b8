"""Weak pairings compatible with the l1, l2 and l-infinity norms (optionally weighted).

* p = 1:   [[x, y]] = ||Ry||_1 sign(Ry)^T Rx
* p = inf: [[x, y]] = max over i in I(Ry) of (Rx)_i (Ry)_i, where I(z) holds
  the indices with |z_i| = ||z||_inf
* p = 2:   [[x, y]] = x^T P y

Every function works on batches along the leading axes.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch
from .linalg import NormSpec, as_square, matrix_measure, oracle_schedule, sym_eig, vec_norm


@dataclass(frozen=True, eq=False)
class WeakPairing:
    ns: NormSpec = field(default_factory=NormSpec)
    # index i belongs to I_inf(y) iff |y_i| >= ||y||_inf * (1 - tau)
    tau: float = 1e-12

    def __call__(self, x, y):
        return wp_eval(x, y, self)

    @property
    def p(self) -> str:
        return self.ns.p

    def norm(self, x):
        return vec_norm(x, self.ns)


def max_index_set(z, tau: float = 1e-12):
    """Boolean mask of I_inf(z) along the last axis."""
    az = np.abs(z)
    m = az.max(axis=-1, keepdims=True)
    return az >= m * (1.0 - tau)


def wp_eval(x, y, wp: WeakPairing):
    """Evaluate the weak pairing [[x, y]]."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape[-1] != y.shape[-1]:
        raise DimensionMismatch(f"pairing arguments have lengths {x.shape[-1]} and {y.shape[-1]}")
    ns = wp.ns
    if ns.p == "2":
        if ns.P is None:
            return np.sum(x * y, axis=-1)
        ns.check_dim(x.shape[-1])
        return np.einsum("...i,ij,...j->...", x, ns.P, y)
    zx = ns.apply(x)
    zy = ns.apply(y)
    if ns.p == "1":
        return np.abs(zy).sum(axis=-1) * np.sum(np.sign(zy) * zx, axis=-1)
    mask = max_index_set(zy, wp.tau)
    zx, zy, mask = np.broadcast_arrays(zx, zy, mask)
    return np.where(mask, zx * zy, -np.inf).max(axis=-1)


@dataclass
class AxiomReport:
    """Worst-case violation of each pairing axiom over the random sample.

    A value <= 0 (up to rounding) means the axiom held on every sample.
    ``deimling`` is the smallest Deimling margin and should be >= 0 instead.
    """

    pairing: str
    samples: int
    seed: int
    violations: dict = field(default_factory=dict)
    witnesses: dict = field(default_factory=dict)
    deimling: float = float("nan")
    deimling_witness: list = field(default_factory=list)

    def ok(self, tol: float = 1e-9, deimling_tol: float = 1e-6) -> bool:
        return all(v <= tol for v in self.violations.values()) and self.deimling >= -deimling_tol

    def to_json(self) -> dict:
        return {
            "pairing": self.pairing,
            "samples": self.samples,
            "seed": self.seed,
            "violations": {k: float(v) for k, v in self.violations.items()},
            "witnesses": self.witnesses,
            "deimling_min_margin": float(self.deimling),
            "deimling_witness": self.deimling_witness,
        }


def _sample_vectors(rng, m, n):
    """Gaussian vectors, a fifth of them rounded to small integers so that
    zero entries and ties in |x_i| show up."""
    v = rng.standard_normal((m, n))
    k = m // 5
    v[:k] = np.round(v[:k] * 1.5)
    return v


def wp_axiom_check(wp: WeakPairing, sample_count: int, seed: int, dim: int | None = None,
                   h_min: float = 1e-8) -> AxiomReport:
    """Check sub-additivity, weak homogeneity, positive definiteness,
    Cauchy-Schwarz, norm compatibility and Deimling's inequality on samples."""
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    n = dim if dim is not None else (wp.ns.dim or 4)
    rng = np.random.default_rng(seed)
    x1 = _sample_vectors(rng, sample_count, n)
    x2 = _sample_vectors(rng, sample_count, n)
    y = _sample_vectors(rng, sample_count, n)
    alpha = rng.uniform(0.0, 3.0, size=sample_count)
    alpha[: max(1, sample_count // 10)] = 0.0

    pxy = wp(x1, y)
    pxx = wp(x1, x1)
    pyy = wp(y, y)
    checks = {
        "subadditivity": wp(x1 + x2, y) - pxy - wp(x2, y),
        "homogeneity_first": np.abs(wp(alpha[:, None] * x1, y) - alpha * pxy),
        "homogeneity_second": np.abs(wp(x1, alpha[:, None] * y) - alpha * pxy),
        "sign_flip": np.abs(wp(-x1, -y) - pxy),
        "zero_first": np.abs(wp(0.0 * x1, y)),
        "cauchy_schwarz": np.abs(pxy) - np.sqrt(np.maximum(pxx, 0.0) * np.maximum(pyy, 0.0)),
        "norm_compatibility": np.abs(pxx - wp.norm(x1) ** 2),
    }
    nonzero = np.any(x1 != 0, axis=-1)
    checks["positive_definiteness"] = np.where(nonzero, -pxx, -np.inf)

    report = AxiomReport(pairing=wp.ns.label(), samples=sample_count, seed=seed)
    for name, vals in checks.items():
        i = int(np.argmax(vals))
        report.violations[name] = float(vals[i])
        report.witnesses[name] = {"x": x1[i].tolist(), "y": y[i].tolist()}

    ynz = np.any(y != 0, axis=-1)
    margins = deimling_margin(x1[ynz], y[ynz], wp, h_min=h_min)
    j = int(np.argmin(margins))
    report.deimling = float(margins[j])
    report.deimling_witness = [x1[ynz][j].tolist(), y[ynz][j].tolist()]
    return report


def _abs_increment(z, hw):
    """|z + hw| - |z| without cancellation."""
    den = np.abs(z + hw) + np.abs(z)
    safe = np.where(den > 0, den, 1.0)
    return np.where(den > 0, hw * (2.0 * z + hw) / safe, 0.0)


def norm_increment(y, x, h: float, ns: NormSpec):
    """``||y + h x|| - ||y||`` evaluated so that the O(h) difference keeps full
    relative precision (the naive subtraction loses ~log10(1/h) digits)."""
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    if ns.p == "2":
        P = np.eye(y.shape[-1]) if ns.P is None else ns.P
        cross = np.einsum("...i,ij,...j->...", x, P, y)
        xx = np.einsum("...i,ij,...j->...", x, P, x)
        den = vec_norm(y + h * x, ns) + vec_norm(y, ns)
        safe = np.where(den > 0, den, 1.0)
        return np.where(den > 0, (2.0 * h * cross + h * h * xx) / safe, 0.0)
    z = ns.apply(y)
    hw = h * ns.apply(x)
    inc = _abs_increment(z, hw)
    if ns.p == "1":
        return inc.sum(axis=-1)
    az = np.abs(z)
    return np.max(inc + (az - az.max(axis=-1, keepdims=True)), axis=-1)


def deimling_margin(x, y, wp: WeakPairing, h_min: float = 1e-8):
    """``||y|| (||y + h x|| - ||y||) / h - [[x, y]]`` at the smallest h of the schedule.

    The difference quotient is non-increasing as h decreases, so its value at
    ``h_min`` bounds the one-sided derivative from above.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ny = wp.norm(y)
    if np.any(ny == 0):
        raise ValueError("Deimling margin needs y != 0")
    h = oracle_schedule(h_min)[-1]
    quotient = norm_increment(y, x, h, wp.ns) / h
    return ny * quotient - wp(x, y)


@dataclass(frozen=True)
class SamplerConfig:
    samples: int = 2000
    seed: int = 0
    eps: float = 1e-6
    enumerate_max_dim: int = 12


def _lumer_ratio(A, X, wp):
    return wp(X @ A.T, X) / wp.norm(X) ** 2


def lumer_estimates(A, wp: WeakPairing, sampler: SamplerConfig = SamplerConfig()):
    """Return (sampled sup, constructed sup) of ``[[Ax, x]] / ||x||^2``.

    The sampled value uses random unit vectors of the norm; the constructed
    value uses near-maximizers built from the structure of ``R A R^{-1}``.
    """
    A = as_square(A)
    n = A.shape[0]
    ns = wp.ns
    rng = np.random.default_rng(sampler.seed)
    X = rng.standard_normal((sampler.samples, n))
    X = X / wp.norm(X)[:, None]
    sampled = float(np.max(_lumer_ratio(A, X, wp)))

    B = ns.similar(A)
    if ns.p == "1":
        Z = np.eye(n) + sampler.eps * np.sign(B.T) * (1.0 - np.eye(n))
    elif ns.p == "inf":
        rows = np.where(B == 0, 1.0, np.sign(B))
        np.fill_diagonal(rows, 1.0)
        if n <= sampler.enumerate_max_dim:
            signs = np.array(list(itertools.product((-1.0, 1.0), repeat=n)))
        else:
            signs = rng.choice((-1.0, 1.0), size=(4096, n))
        Z = np.vstack([rows, signs])
    else:
        w, V = sym_eig(B + B.T)
        Z = V[:, -1][None, :]
    Xc = Z if ns.R_inv is None else Z @ ns.R_inv.T
    constructed = float(np.max(_lumer_ratio(A, Xc, wp)))
    return sampled, constructed


def lumer_sup(A, wp: WeakPairing, sampler: SamplerConfig = SamplerConfig()) -> float:
    """Estimate ``sup_{x != 0} [[Ax, x]] / ||x||^2``, which equals the matrix measure."""
    return max(lumer_estimates(A, wp, sampler))


def lumer_gap(A, wp: WeakPairing, sampler: SamplerConfig = SamplerConfig()) -> float:
    """Closed-form measure minus the Lumer estimate (>= 0 up to rounding)."""
    return matrix_measure(A, wp.ns) - lumer_sup(A, wp, sampler)
