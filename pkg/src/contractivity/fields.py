"""Vector fields and sampling-based contraction certificates.

Three kinds of field are supported: affine ``Ax + b``, the built-in
``tanh_network`` family ``-D x + W tanh(x) + b``, and fields parsed from
expressions. Evaluation accepts batches of points along the leading axes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, InconsistentEvidence, NotContractive
from .expr import make_evaluator
from .linalg import (NormSpec, as_square, mat_norm, matrix_from_json, matrix_measure,
                     matrix_to_json, vec_norm, vector_from_json)
from .pairings import WeakPairing

OSL_CONSISTENCY_TOL = 1e-6


class VectorField:
    """A map ``x -> f(x)`` on R^n with a Jacobian.

    Parameters
    ----------
    dim : int
        State dimension.
    func : callable
        Evaluates the field on an array of shape (..., dim).
    jac : callable, optional
        Analytic Jacobian at a single point. Central differences are used
        when omitted.
    kind : str
        One of ``"affine"``, ``"builtin"``, ``"expr"``.
    spec : dict
        JSON-serializable description the field was built from.
    """

    def __init__(self, dim: int, func, jac=None, kind: str = "expr", spec: dict | None = None):
        self.dim = int(dim)
        self._func = func
        self._jac = jac
        self.kind = kind
        self.spec = spec or {}

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise DimensionMismatch(f"field has dimension {self.dim}, got points of length {x.shape[-1]}")
        return self._func(x)

    def jacobian(self, x):
        x = np.asarray(x, dtype=float)
        if self._jac is not None:
            return self._jac(x)
        return jacobian_fd(self, x)

    @property
    def has_analytic_jacobian(self) -> bool:
        return self._jac is not None

    @property
    def is_affine(self) -> bool:
        return self.kind == "affine"

    @property
    def A(self):
        return self.spec.get("_A")

    @property
    def b(self):
        return self.spec.get("_b")

    def equilibrium(self):
        """Exact equilibrium of an affine field, ``None`` otherwise."""
        if not self.is_affine:
            return None
        return np.linalg.solve(self.A, -self.b)

    def to_json(self) -> dict:
        return {k: v for k, v in self.spec.items() if not k.startswith("_")}

    def __repr__(self):
        return f"VectorField(kind={self.kind!r}, dim={self.dim})"


def affine_field(A, b=None) -> VectorField:
    A = as_square(A)
    n = A.shape[0]
    b = np.zeros(n) if b is None else np.asarray(b, dtype=float)
    if b.shape != (n,):
        raise DimensionMismatch(f"b has shape {b.shape}, expected ({n},)")
    A = A.copy()
    b = b.copy()
    spec = {"kind": "affine", "A": matrix_to_json(A), "b": b.tolist(), "_A": A, "_b": b}
    return VectorField(n, lambda x: x @ A.T + b, lambda x: A.copy(), kind="affine", spec=spec)


def parse_field(source: str, dim: int) -> VectorField:
    """Field from ``';'``-separated component expressions in ``x1..xn``."""
    func = make_evaluator(source, dim)
    return VectorField(dim, func, None, kind="expr", spec={"kind": "expr", "dim": dim, "source": source})


def tanh_network(D, W, b=None) -> VectorField:
    """``f(x) = -D x + W tanh(x) + b`` with D diagonal (given as a vector)."""
    D = np.asarray(D, dtype=float).ravel()
    n = D.size
    W = np.asarray(W, dtype=float)
    if W.shape != (n, n):
        raise DimensionMismatch(f"W has shape {W.shape}, expected ({n}, {n})")
    b = np.zeros(n) if b is None else np.asarray(b, dtype=float)
    if b.shape != (n,):
        raise DimensionMismatch(f"b has shape {b.shape}, expected ({n},)")

    def func(x):
        return -D * x + np.tanh(x) @ W.T + b

    def jac(x):
        return -np.diag(D) + W * (1.0 - np.tanh(x) ** 2)[None, :]

    spec = {"kind": "builtin", "name": "tanh_network",
            "params": {"D": D.tolist(), "W": matrix_to_json(W), "b": b.tolist()}}
    return VectorField(n, func, jac, kind="builtin", spec=spec)


BUILTINS = {"tanh_network": tanh_network}


def builtin_field(name: str, params: dict) -> VectorField:
    try:
        factory = BUILTINS[name]
    except KeyError:
        raise ValueError(f"unknown built-in field {name!r}; known: {sorted(BUILTINS)}") from None
    if name == "tanh_network":
        W = params["W"]
        W = matrix_from_json(W) if isinstance(W, dict) else np.asarray(W, dtype=float)
        return factory(params["D"], W, params.get("b"))
    return factory(**params)


def field_from_json(obj: dict) -> VectorField:
    kind = obj.get("kind")
    if kind == "affine":
        A = matrix_from_json(obj["A"])
        b = vector_from_json(obj["b"], A.shape[0]) if "b" in obj else None
        return affine_field(A, b)
    if kind == "expr":
        return parse_field(obj["source"], int(obj["dim"]))
    if kind == "builtin":
        return builtin_field(obj["name"], obj.get("params", {}))
    raise ValueError(f"unknown field kind {kind!r}")


def jacobian_fd(f, x, h: float | None = None):
    """Central-difference Jacobian; column j is ``(f(x + h e_j) - f(x - h e_j)) / 2h``.

    The default step is ``1e-5 * max(1, ||x||_inf)``.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    if h is None:
        h = 1e-5 * max(1.0, float(np.max(np.abs(x))) if n else 1.0)
    if h <= 0:
        raise ValueError("finite-difference step must be positive")
    E = h * np.eye(n)
    cols = (f(x + E) - f(x - E)) / (2.0 * h)
    return cols.T


@dataclass
class Box:
    """Axis-aligned box ``[lo, hi]``."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        self.lo = np.asarray(self.lo, dtype=float).ravel()
        self.hi = np.asarray(self.hi, dtype=float).ravel()
        if self.lo.shape != self.hi.shape:
            raise DimensionMismatch("box bounds differ in length")
        if np.any(self.hi < self.lo):
            raise ValueError("box needs lo <= hi")

    @classmethod
    def cube(cls, n: int, radius: float = 5.0) -> "Box":
        return cls(-radius * np.ones(n), radius * np.ones(n))

    @property
    def dim(self) -> int:
        return self.lo.size

    @property
    def center(self):
        return 0.5 * (self.lo + self.hi)

    def sample(self, rng, m: int):
        return self.lo + (self.hi - self.lo) * rng.random((m, self.dim))

    def to_json(self) -> dict:
        return {"lo": self.lo.tolist(), "hi": self.hi.tolist()}


def _box_for(f, box):
    box = Box.cube(f.dim) if box is None else box
    if box.dim != f.dim:
        raise DimensionMismatch(f"box has dimension {box.dim}, field has {f.dim}")
    return box


def _sample_points(box, samples, seed):
    rng = np.random.default_rng(seed)
    # the center is always included: many test fields are least contracting there
    return np.vstack([box.center[None, :], box.sample(rng, max(samples - 1, 0))])


def demidovich_scan(f, ns: NormSpec, box: Box | None = None, samples: int = 1000, seed: int = 0):
    """Return ``(rate, witness)``: ``rate = -max mu(Df(x))`` over sampled x and the
    point attaining the max."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    box = _box_for(f, box)
    if f.is_affine:
        return -matrix_measure(f.A, ns), box.center
    pts = _sample_points(box, samples, seed)
    mus = np.array([matrix_measure(f.jacobian(x), ns) for x in pts])
    i = int(np.argmax(mus))
    return -float(mus[i]), pts[i]


def demidovich_rate(f, ns: NormSpec, box: Box | None = None, samples: int = 1000, seed: int = 0) -> float:
    """Empirical contraction rate from the Jacobian measure bound.

    A non-positive value means no contraction was detected on the box.
    """
    return demidovich_scan(f, ns, box, samples, seed)[0]


def _as_pairs(pairs):
    if isinstance(pairs, tuple) and len(pairs) == 2 and np.ndim(pairs[0]) == 2:
        X, Y = pairs
    else:
        X = np.array([p[0] for p in pairs], dtype=float)
        Y = np.array([p[1] for p in pairs], dtype=float)
    return np.asarray(X, dtype=float), np.asarray(Y, dtype=float)


def osl_margins(f, wp: WeakPairing, pairs, c: float):
    """Per-pair ``-c ||x - y||^2 - [[f(x) - f(y), x - y]]``."""
    X, Y = _as_pairs(pairs)
    D = X - Y
    if np.any(np.all(D == 0, axis=-1)):
        raise ValueError("one-sided Lipschitz check needs x != y in every pair")
    return -c * wp.norm(D) ** 2 - wp(f(X) - f(Y), D)


def osl_margin(f, wp: WeakPairing, pairs, c: float) -> float:
    """Smallest one-sided Lipschitz margin over the pairs; >= 0 means the
    condition held on the sample."""
    return float(np.min(osl_margins(f, wp, pairs, c)))


def sample_pairs(box: Box, m: int, seed: int):
    rng = np.random.default_rng(seed)
    return box.sample(rng, m), box.sample(rng, m)


def lipschitz_scan(f, ns: NormSpec, box: Box | None = None, samples: int = 1000, seed: int = 0):
    box = _box_for(f, box)
    if f.is_affine:
        return mat_norm(f.A, ns), {"kind": "exact"}
    pts = _sample_points(box, samples, seed)
    jac_norms = np.array([mat_norm(f.jacobian(x), ns) for x in pts])
    X, Y = sample_pairs(box, samples, seed + 1)
    ratios = vec_norm(f(X) - f(Y), ns) / vec_norm(X - Y, ns)
    i, j = int(np.argmax(jac_norms)), int(np.argmax(ratios))
    if jac_norms[i] >= ratios[j]:
        return float(jac_norms[i]), {"kind": "jacobian", "x": pts[i].tolist()}
    return float(ratios[j]), {"kind": "pair", "x": X[j].tolist(), "y": Y[j].tolist()}


def lipschitz_estimate(f, ns: NormSpec, box: Box | None = None, samples: int = 1000, seed: int = 0) -> float:
    """Lower bound on the Lipschitz constant: the larger of the sampled
    Jacobian norms and sampled difference quotients (exact for affine fields)."""
    return lipschitz_scan(f, ns, box, samples, seed)[0]


@dataclass
class ContractionCertificate:
    ns: NormSpec
    rate: float
    lipschitz: float
    box: Box | None = None
    mode: str = "empirical"
    evidence: dict = field(default_factory=dict)

    @property
    def c(self) -> float:
        return self.rate

    @property
    def ell(self) -> float:
        return self.lipschitz

    @property
    def kappa(self) -> float:
        return self.lipschitz / self.rate

    @property
    def exact(self) -> bool:
        return self.mode == "exact-affine"

    def to_json(self) -> dict:
        return {
            "mode": self.mode,
            "norm": self.ns.to_json(),
            "c": self.rate,
            "ell": self.lipschitz,
            "kappa": self.kappa,
            "box": None if self.box is None else self.box.to_json(),
            "evidence": self.evidence,
        }


def certificate(ns: NormSpec, c: float, ell: float, mode: str = "given") -> ContractionCertificate:
    """Certificate from known constants (e.g. analytically derived)."""
    if c <= 0 or ell < c or not math.isfinite(ell):
        raise ValueError("need 0 < c <= ell < inf")
    return ContractionCertificate(ns, float(c), float(ell), mode=mode)


def certify(f, ns: NormSpec, box: Box | None = None, budget: int = 1000, seed: int = 0) -> ContractionCertificate:
    """Certify strong contraction of ``f`` on ``box`` in the norm ``ns``.

    Affine fields get the exact constants ``c = -mu(A)``, ``ell = ||A||``.
    Other fields get sampled estimates, cross-checked against the pairwise
    one-sided Lipschitz condition at the reported rate.

    Raises
    ------
    NotContractive
        If the (estimated) rate is not positive.
    InconsistentEvidence
        If the one-sided Lipschitz margin at the sampled rate is below -1e-6.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    ns.check_dim(f.dim)
    box = _box_for(f, box)
    if f.is_affine:
        mu = matrix_measure(f.A, ns)
        if mu >= 0:
            raise NotContractive(f"mu(A) = {mu:.6g} >= 0 in {ns.label()}", rate=-mu)
        return ContractionCertificate(ns, -mu, mat_norm(f.A, ns), box, "exact-affine",
                                      {"matrix_measure": mu})
    rate, witness = demidovich_scan(f, ns, box, budget, seed)
    if rate <= 0:
        raise NotContractive(
            f"sampled Jacobian measure reaches {-rate:.6g} >= 0 in {ns.label()}", rate=rate)
    ell, ell_witness = lipschitz_scan(f, ns, box, budget, seed + 1)
    wp = WeakPairing(ns)
    margin = osl_margin(f, wp, sample_pairs(box, budget, seed + 2), rate)
    if margin < -OSL_CONSISTENCY_TOL:
        raise InconsistentEvidence(
            f"one-sided Lipschitz margin {margin:.3e} at sampled rate {rate:.6g}")
    evidence = {
        "samples": budget,
        "seed": seed,
        "demidovich_witness": np.asarray(witness).tolist(),
        "lipschitz_witness": ell_witness,
        "osl_margin": margin,
    }
    return ContractionCertificate(ns, rate, ell, box, "empirical", evidence)
