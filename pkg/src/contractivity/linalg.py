"""Norms, induced matrix norms and matrix measures for p in {1, 2, inf}.

All vector routines accept batches: the last axis is the vector axis.
A weight R turns ``||x||_p`` into ``||R x||_p``; the induced norm and the
matrix measure are then those of ``R A R^{-1}``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, NotContractive, SingularWeight

P_VALUES = ("1", "2", "inf")

#: Cap on the 2-norm condition number of a weight matrix.
WEIGHT_COND_CAP = 1e12
#: Smallest admissible eigenvalue of a P weight.
P_EIG_FLOOR = 1e-10


def parse_p(p) -> str:
    """Normalize the many spellings of p (1, "1", 2, "inf", np.inf, ...) to "1", "2" or "inf"."""
    if isinstance(p, str):
        key = p.strip().lower()
        if key in ("1", "2"):
            return key
        if key in ("inf", "infinity", "oo", "max"):
            return "inf"
    elif isinstance(p, (int, float, np.integer, np.floating)):
        if p == 1:
            return "1"
        if p == 2:
            return "2"
        if math.isinf(p) and p > 0:
            return "inf"
    raise ValueError(f"unsupported norm index p={p!r}; expected 1, 2 or inf")


def sym_eig(S, tol: float = 1e-12, max_sweeps: int = 60):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Parameters
    ----------
    S : array_like, shape (n, n)
        Symmetric matrix. Only the symmetric part is used.
    tol : float
        Sweeps stop once the off-diagonal Frobenius norm falls below
        ``tol * max(1, ||S||_F)``.

    Returns
    -------
    w : ndarray, shape (n,)
        Eigenvalues in ascending order.
    V : ndarray, shape (n, n)
        Orthonormal eigenvectors, ``V[:, i]`` belongs to ``w[i]``.
    """
    a = np.array(S, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
    a = 0.5 * (a + a.T)
    n = a.shape[0]
    V = np.eye(n)
    scale = max(1.0, float(np.sqrt(np.sum(a * a))))
    polish = False
    for _ in range(max_sweeps):
        off = float(np.sqrt(np.sum((a - np.diag(np.diag(a))) ** 2)))
        if polish or off == 0.0:
            break
        # one extra sweep past the tolerance: convergence is quadratic, so it is cheap
        polish = off <= tol * scale
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta  # theta^2 would overflow
                else:
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                col_p = a[:, p].copy()
                col_q = a[:, q]
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :]
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = a[q, p] = 0.0
                v_p = V[:, p].copy()
                v_q = V[:, q]
                V[:, p] = c * v_p - s * v_q
                V[:, q] = s * v_p + c * v_q
    w = np.diag(a).copy()
    order = np.argsort(w)
    return w[order], V[:, order]


def sqrtm_spd(P):
    """Symmetric square root of a positive definite matrix; rejects lambda_min <= 1e-10."""
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise DimensionMismatch(f"P must be square, got shape {P.shape}")
    if not np.allclose(P, P.T, rtol=0.0, atol=1e-12 * max(1.0, float(np.abs(P).max()))):
        raise SingularWeight("P must be symmetric")
    w, V = sym_eig(P)
    if w[0] <= P_EIG_FLOOR:
        raise SingularWeight(f"P is not positive definite (smallest eigenvalue {w[0]:.3e})")
    return (V * np.sqrt(w)) @ V.T


@dataclass(frozen=True, eq=False)
class NormSpec:
    """Norm selection: ``||x|| = ||R x||_p`` with p in {1, 2, inf}.

    For p = 2 the weight may be given as ``P = P^T > 0`` instead of R, in
    which case ``||x||^2 = x^T P x`` and ``R = P^{1/2}``.
    """

    p: str = "2"
    weight: np.ndarray | None = None
    P: np.ndarray | None = None
    cond_cap: float = WEIGHT_COND_CAP
    _R_inv: np.ndarray | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "p", parse_p(self.p))
        if self.P is not None:
            if self.p != "2":
                raise ValueError("a P weight is only meaningful for p = 2")
            if self.weight is not None:
                raise ValueError("give either weight R or P, not both")
            P = np.array(self.P, dtype=float)
            object.__setattr__(self, "P", P)
            object.__setattr__(self, "weight", sqrtm_spd(P))
        if self.weight is not None:
            R = np.array(self.weight, dtype=float)
            if R.ndim != 2 or R.shape[0] != R.shape[1]:
                raise DimensionMismatch(f"weight must be square, got shape {R.shape}")
            if not np.all(np.isfinite(R)):
                raise SingularWeight("weight has non-finite entries")
            cond = np.linalg.cond(R)
            if not np.isfinite(cond) or cond > self.cond_cap:
                raise SingularWeight(f"weight is singular or ill-conditioned (cond={cond:.3e})")
            object.__setattr__(self, "weight", R)
            object.__setattr__(self, "_R_inv", np.linalg.inv(R))
            if self.P is None and self.p == "2":
                object.__setattr__(self, "P", R.T @ R)

    @property
    def weighted(self) -> bool:
        return self.weight is not None

    @property
    def dim(self) -> int | None:
        return None if self.weight is None else self.weight.shape[0]

    @property
    def R(self):
        return self.weight

    @property
    def R_inv(self):
        return self._R_inv

    def check_dim(self, n: int):
        if self.weight is not None and self.weight.shape[0] != n:
            raise DimensionMismatch(f"weight has dimension {self.weight.shape[0]}, vectors have {n}")

    def apply(self, x):
        """R x along the last axis (x itself when unweighted)."""
        x = np.asarray(x, dtype=float)
        if self.weight is None:
            return x
        self.check_dim(x.shape[-1])
        return x @ self.weight.T

    def similar(self, A):
        """R A R^{-1}."""
        A = as_square(A)
        if self.weight is None:
            return A
        self.check_dim(A.shape[0])
        return self.weight @ A @ self._R_inv

    def norm(self, x):
        return vec_norm(x, self)

    def label(self) -> str:
        return f"l{self.p}" + ("-weighted" if self.weighted else "")

    def to_json(self) -> dict:
        out = {"p": self.p}
        if self.weight is not None:
            out["weight"] = matrix_to_json(self.weight)
        return out


def as_square(A):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {A.shape}")
    return A


def vec_norm(x, ns: NormSpec):
    """Weighted p-norm ``||R x||_p`` over the last axis.

    When only P is known for p = 2, ``sqrt(x^T P x)`` is evaluated directly.
    """
    x = np.asarray(x, dtype=float)
    ns.check_dim(x.shape[-1])
    if ns.p == "2" and ns.P is not None:
        q = np.einsum("...i,ij,...j->...", x, ns.P, x)
        return np.sqrt(np.maximum(q, 0.0))
    z = ns.apply(x)
    if ns.p == "1":
        return np.abs(z).sum(axis=-1)
    if ns.p == "inf":
        return np.abs(z).max(axis=-1)
    return np.sqrt(np.sum(z * z, axis=-1))


def mat_norm(A, ns: NormSpec) -> float:
    """Induced norm of A, i.e. the p-norm of ``R A R^{-1}``."""
    B = ns.similar(A)
    if ns.p == "1":
        return float(np.abs(B).sum(axis=0).max())
    if ns.p == "inf":
        return float(np.abs(B).sum(axis=1).max())
    return float(np.linalg.norm(B, 2))


def _mu1(B) -> float:
    absB = np.abs(B)
    diag = np.diag(B)
    return float(np.max(diag + absB.sum(axis=0) - np.abs(diag)))


def matrix_measure(A, ns: NormSpec) -> float:
    """Closed-form matrix measure (logarithmic norm).

    * p = 1: max over columns of ``a_jj + sum_{i != j} |a_ij|``
    * p = inf: the same over rows
    * p = 2: half the largest eigenvalue of ``A + A^T``

    each applied to ``R A R^{-1}``.
    """
    B = ns.similar(A)
    if ns.p == "1":
        return _mu1(B)
    if ns.p == "inf":
        return _mu1(B.T)
    w, _ = sym_eig(B + B.T)
    return 0.5 * float(w[-1])


def oracle_schedule(h_min: float, h0: float = 0.1):
    if h_min <= 0:
        raise ValueError("h_min must be positive")
    hs = []
    h = h0
    k = 0
    while True:
        hs.append(h)
        if h <= h_min:
            break
        k += 1
        h = h0 * 2.0 ** (-k)
    return np.array(hs)


def _unit_increment(B, h: float, p: str) -> float:
    """``||I + hB||_p - 1`` without the cancellation of the naive subtraction."""
    if p == "inf":
        B = B.T
    if p in ("1", "inf"):
        d = h * np.diag(B)
        # |1 + d| - 1 = d (2 + d) / (|1 + d| + 1)
        diag_inc = d * (2.0 + d) / (np.abs(1.0 + d) + 1.0)
        off = h * (np.abs(B).sum(axis=0) - np.abs(np.diag(B)))
        return float(np.max(diag_inc + off))
    # ||I + hB||_2^2 = 1 + lambda_max(h (B + B^T) + h^2 B^T B)
    lam = float(np.linalg.eigvalsh(h * (B + B.T) + h * h * (B.T @ B))[-1])
    return lam / (math.sqrt(1.0 + lam) + 1.0)


def matrix_measure_oracle(A, ns: NormSpec, h_min: float = 1e-8, return_sequence: bool = False):
    """Matrix measure from its defining limit ``(||I + hA|| - 1) / h``, h -> 0+.

    The quotient is evaluated for ``h = 0.1 * 2^-k`` until ``h <= h_min``;
    the last quotient is returned. Convexity of the norm makes the sequence
    non-increasing as h decreases.

    ``R A R^{-1}`` is formed once and ``||I + hB|| - 1`` is evaluated in a
    cancellation-free form, so the quotient carries truncation error only.
    The eigenvalues for p = 2 come from LAPACK, independently of the Jacobi
    solver behind :func:`matrix_measure`.
    """
    B = ns.similar(as_square(A))
    hs = oracle_schedule(h_min)
    qs = np.array([_unit_increment(B, h, ns.p) / h for h in hs])
    if return_sequence:
        return float(qs[-1]), hs, qs
    return float(qs[-1])


def operator_condition_number(A, ns: NormSpec) -> float:
    """``||A|| / |mu(A)|`` for a matrix with negative measure."""
    mu = matrix_measure(A, ns)
    if mu >= 0:
        raise NotContractive(f"matrix measure {mu:.6g} >= 0 in {ns.label()}", rate=-mu)
    return mat_norm(A, ns) / abs(mu)


def condition_number(A, ns: NormSpec) -> float:
    """Classical ``||A|| ||A^{-1}||`` in the induced norm."""
    A = as_square(A)
    return mat_norm(A, ns) * mat_norm(np.linalg.inv(A), ns)


# JSON matrix format: {"rows": n, "cols": m, "data": [row-major]}

def matrix_from_json(obj) -> np.ndarray:
    if isinstance(obj, dict):
        try:
            rows, cols, data = int(obj["rows"]), int(obj["cols"]), obj["data"]
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"malformed matrix object: {exc}") from None
        arr = np.asarray(data, dtype=float)
        if arr.ndim != 1 or arr.size != rows * cols:
            raise ValueError(f"matrix data has {arr.size} entries, expected {rows}x{cols}")
        arr = arr.reshape(rows, cols)
    else:
        arr = np.asarray(obj, dtype=float)
        if arr.ndim != 2:
            raise ValueError("matrix must be an object with rows/cols/data or a nested list")
    if not np.all(np.isfinite(arr)):
        raise ValueError("matrix has non-finite entries")
    return arr


def matrix_to_json(A) -> dict:
    A = np.asarray(A, dtype=float)
    return {"rows": A.shape[0], "cols": A.shape[1], "data": [float(v) for v in A.ravel()]}


def vector_from_json(obj, dim: int | None = None) -> np.ndarray:
    x = np.asarray(obj, dtype=float)
    if x.ndim != 1:
        raise ValueError("vector must be a flat array")
    if not np.all(np.isfinite(x)):
        raise ValueError("vector has non-finite entries")
    if dim is not None and x.size != dim:
        raise DimensionMismatch(f"vector has length {x.size}, expected {dim}")
    return x
