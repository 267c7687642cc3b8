"""Fixed-point schemes for the equilibrium of a strongly contracting field.

Forward step ``x+ = x + a f(x)``, implicit Euler ``x+ = x + a f(x+)`` (inner
fixed-point or Newton iteration) and extra-gradient. Step sizes and
contraction factors follow from the certificate constants (c, ell).
"""
from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.linalg

from .errors import PreconditionViolated, WrongNormFamily
from .fields import Box, ContractionCertificate
from .linalg import NormSpec, vec_norm

EPS = np.finfo(float).eps


class Method(str, Enum):
    FORWARD = "forward"
    IMPLICIT_FIXED_POINT = "implicit-fixed-point"
    IMPLICIT_NEWTON = "implicit-newton"
    EXTRAGRADIENT = "extragradient"


class Status(str, Enum):
    CONVERGED = "Converged"
    MAX_ITER = "MaxIter"
    DIVERGED = "Diverged"
    INNER_FAILED = "InnerFailed"


METHOD_ALIASES = {
    "forward": Method.FORWARD,
    "implicit-fixed-point": Method.IMPLICIT_FIXED_POINT,
    "implicit-fp": Method.IMPLICIT_FIXED_POINT,
    "implicit-newton": Method.IMPLICIT_NEWTON,
    "newton": Method.IMPLICIT_NEWTON,
    "extragradient": Method.EXTRAGRADIENT,
    "extra-gradient": Method.EXTRAGRADIENT,
}


class SolverWarning(UserWarning):
    pass


@dataclass
class SolverConfig:
    """Solver settings.

    ``alpha="auto"`` picks the step from the certificate. For implicit Euler
    the inner loop stops once its update is below ``inner_tol`` times the
    outer increment (or at the rounding floor).
    """

    method: str = "forward"
    alpha: float | str = "auto"
    tol: float = 1e-10
    max_iter: int = 1_000_000
    inner_tol: float = 1e-12
    inner_max_iter: int = 2000
    # multiplies auto steps computed from sampled (non-exact) certificates
    safety: float = 0.9
    # per-step factors are only reported while the error exceeds factor_floor * (1 + ||x*||)
    factor_floor: float = 1e-5

    def __post_init__(self):
        if isinstance(self.method, str) and not isinstance(self.method, Method):
            key = self.method.lower()
            if key == "implicit":
                self.method = "implicit"
            elif key in METHOD_ALIASES:
                self.method = METHOD_ALIASES[key]
            else:
                raise ValueError(f"unknown method {self.method!r}")
        if self.alpha != "auto":
            self.alpha = float(self.alpha)
            if not self.alpha > 0:
                raise ValueError("step alpha must be positive")
        if not self.tol > 0:
            raise ValueError("tol must be positive")


# -- step sizes and factors ---------------------------------------------------

def _require_p(cert, allowed, what):
    if cert.ns.p not in allowed:
        raise WrongNormFamily(f"{what} needs p in {allowed}, certificate uses p={cert.ns.p}")


def euclidean_factor_bound(alpha, c, ell):
    """Lipschitz bound ``sqrt(1 - 2 a c + a^2 ell^2)`` of ``Id + a f`` in a (weighted) l2 norm."""
    return math.sqrt(max(1.0 - 2.0 * alpha * c + alpha * alpha * ell * ell, 0.0))


def euclidean_optimal_step(cert: ContractionCertificate):
    """``(alpha*, factor*) = (c / ell^2, sqrt(1 - 1/kappa^2))``."""
    _require_p(cert, ("2",), "Euclidean optimal step")
    c, ell = cert.rate, cert.lipschitz
    kappa = ell / c
    return c / ell ** 2, math.sqrt(max(1.0 - 1.0 / kappa ** 2, 0.0))


def euclidean_step_range(cert: ContractionCertificate):
    _require_p(cert, ("2",), "Euclidean step range")
    return 0.0, 2.0 * cert.rate / cert.lipschitz ** 2


def wp_step_range(cert: ContractionCertificate):
    """``(0, c / (ell (c + ell)))`` for l1 / l-infinity certificates."""
    _require_p(cert, ("1", "inf"), "weak-pairing step range")
    c, ell = cert.rate, cert.lipschitz
    return 0.0, c / (ell * (c + ell))


@dataclass(frozen=True)
class WPStep:
    alpha: float
    predicted_factor: float
    fallback: bool


def wp_series(kappa):
    """Two-term series for the optimal step (times c) and factor."""
    step = 1.0 / (2 * kappa ** 2) - 3.0 / (8 * kappa ** 3)
    factor = 1.0 - 1.0 / (4 * kappa ** 2) + 1.0 / (8 * kappa ** 3)
    return step, factor


def wp_optimal_step(cert: ContractionCertificate) -> WPStep:
    """Series approximation of the optimal forward step in l1 / l-infinity.

    Valid for ``kappa >= 2``; below that the midpoint of the admissible range
    is returned with ``fallback=True``.
    """
    lo, hi = wp_step_range(cert)
    c, kappa = cert.rate, cert.kappa
    step, factor = wp_series(kappa)
    if kappa < 2:
        return WPStep(0.5 * hi, factor, True)
    alpha = min(max(step / c, lo), hi * (1.0 - 1e-12))
    return WPStep(alpha, factor, False)


def implicit_factor(alpha, c):
    return 1.0 / (1.0 + alpha * c)


def newton_start_bound(alpha, c, ell):
    """Largest ``||f(x0)||`` for which the Newton inner solve is guaranteed quadratic."""
    return 2.0 * (1.0 + alpha * c) * (1.0 - alpha * ell) / (alpha * (1.0 + alpha * ell))


def extragradient_factor_bound(alpha, c, ell):
    return (1.0 + (alpha * ell) ** 3) / (1.0 + alpha * c)


def extragradient_step(cert: ContractionCertificate):
    """``1 / (2 c kappa^{3/2})``."""
    return 1.0 / (2.0 * cert.rate * cert.kappa ** 1.5)


def extragradient_max_step(cert: ContractionCertificate):
    return 1.0 / (cert.rate * cert.kappa ** 1.5)


def extragradient_series(kappa):
    return 1.0 - 3.0 / (8.0 * kappa ** 1.5)


# -- traces --------------------------------------------------------------------

@dataclass
class SolveTrace:
    method: str
    alpha: float
    norm: NormSpec
    iterates: np.ndarray
    residuals: np.ndarray
    status: Status
    factors: np.ndarray = field(default_factory=lambda: np.zeros(0))
    factor_kind: str = "displacement"
    x_star: np.ndarray | None = None
    inner_iterations: list = field(default_factory=list)
    inner_factors: list = field(default_factory=list)
    inner_history: list = field(default_factory=list)
    predicted_factor: float | None = None
    factor_bound: float | None = None
    basis: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def x(self):
        return self.iterates[-1]

    @property
    def iterations(self) -> int:
        return len(self.iterates) - 1

    @property
    def converged(self) -> bool:
        return self.status == Status.CONVERGED

    def measured_factors(self):
        return self.factors[np.isfinite(self.factors)]

    def empirical_factor(self) -> float:
        f = self.measured_factors()
        return float(f.max()) if f.size else float("nan")

    def summary(self) -> dict:
        f = self.measured_factors()
        out = {
            "method": str(self.method.value if isinstance(self.method, Method) else self.method),
            "status": self.status.value,
            "iterations": self.iterations,
            "alpha": self.alpha,
            "norm": self.norm.to_json(),
            "x": self.x.tolist(),
            "residual": float(self.residuals[-1]),
            "predicted_factor": self.predicted_factor,
            "factor_bound": self.factor_bound,
            "empirical_factor_max": float(f.max()) if f.size else None,
            "empirical_factor_mean": float(np.exp(np.mean(np.log(f)))) if f.size and np.all(f > 0) else None,
            "factor_kind": self.factor_kind,
            "displacement": float(vec_norm(self.iterates[-1] - self.iterates[-2], self.norm))
            if self.iterations else 0.0,
            "basis": self.basis,
            "warnings": self.warnings,
        }
        if self.inner_iterations:
            out["inner_iterations_total"] = int(sum(self.inner_iterations))
            out["inner_iterations_max"] = int(max(self.inner_iterations))
        return out

    def csv_rows(self):
        n = self.iterates.shape[1]
        header = ["k"] + [f"x{i + 1}" for i in range(n)] + ["residual", "rho"]
        rows = [header]
        for k, (x, r) in enumerate(zip(self.iterates, self.residuals)):
            rho = self.factors[k - 1] if 0 < k <= len(self.factors) else float("nan")
            rows.append([k] + [repr(float(v)) for v in x] + [repr(float(r)), repr(float(rho))])
        return rows

    def to_csv(self) -> str:
        buf = io.StringIO()
        csv.writer(buf, lineterminator="\n").writerows(self.csv_rows())
        return buf.getvalue()


def _warn(trace_warnings, message):
    trace_warnings.append(message)
    warnings.warn(message, SolverWarning, stacklevel=3)


def _factors(iterates, ns, x_star, floor):
    if x_star is not None:
        err = vec_norm(iterates - x_star, ns)
        cut = floor * (1.0 + float(vec_norm(x_star, ns)))
        with np.errstate(divide="ignore", invalid="ignore"):
            rho = np.where(err[:-1] > cut, err[1:] / err[:-1], np.nan)
        return rho, "error"
    steps = vec_norm(np.diff(iterates, axis=0), ns)
    scale = 1.0 + np.max(vec_norm(iterates, ns))
    with np.errstate(divide="ignore", invalid="ignore"):
        rho = np.where(steps[:-1] > floor * scale, steps[1:] / steps[:-1], np.nan)
    return np.concatenate([[np.nan], rho]) if len(rho) else rho, "displacement"


def _iterate(f, ns, x0, step, cfg):
    """Drive ``step(x, fx) -> (x_new, fx_new, ok)`` until the residual ||f(x)|| <= tol."""
    x = np.array(x0, dtype=float)
    fx = f(x)
    r = float(vec_norm(fx, ns))
    r0 = max(r, np.finfo(float).tiny)
    radius = 1e6 * (1.0 + float(vec_norm(x, ns)))
    xs, rs = [x], [r]
    status = Status.MAX_ITER
    for _ in range(cfg.max_iter):
        if r <= cfg.tol:
            status = Status.CONVERGED
            break
        x, fx, ok = step(x, fx)
        if not ok:
            status = Status.INNER_FAILED
            break
        r = float(vec_norm(fx, ns))
        xs.append(x)
        rs.append(r)
        if not math.isfinite(r) or r > 1e6 * r0 or vec_norm(x - xs[0], ns) > radius:
            status = Status.DIVERGED
            break
    else:
        if r <= cfg.tol:
            status = Status.CONVERGED
    return np.array(xs), np.array(rs), status


def _trace(method, alpha, f, cert, cfg, x0, x_star, step):
    ns = cert.ns
    if x_star is None:
        x_star = f.equilibrium() if hasattr(f, "equilibrium") else None
    xs, rs, status = _iterate(f, ns, x0, step, cfg)
    rho, kind = _factors(xs, ns, x_star, cfg.factor_floor)
    return SolveTrace(method=method, alpha=alpha, norm=ns, iterates=xs, residuals=rs,
                      status=status, factors=rho, factor_kind=kind, x_star=x_star)


def _scaled(alpha, cert, cfg):
    return alpha if cert.exact else cfg.safety * alpha


def forward_solve(f, cert: ContractionCertificate, cfg: SolverConfig, x0, x_star=None) -> SolveTrace:
    """Forward step ``x_{k+1} = x_k + alpha f(x_k)``.

    With ``alpha="auto"`` the optimal step for the norm family is used. A
    step outside the guaranteed range only triggers a warning.
    """
    notes = []
    basis = []
    if cert.ns.p == "2":
        a_opt, factor_opt = euclidean_optimal_step(cert)
        _, hi = euclidean_step_range(cert)
        basis.append("euclidean-forward-step: range (0, 2c/ell^2), optimum c/ell^2")
        if cfg.alpha == "auto":
            alpha, predicted = _scaled(a_opt, cert, cfg), factor_opt
        else:
            alpha, predicted = cfg.alpha, None
        bound = euclidean_factor_bound(alpha, cert.rate, cert.lipschitz)
    else:
        _, hi = wp_step_range(cert)
        opt = wp_optimal_step(cert)
        basis.append("weak-pairing-forward-step: range (0, c/(ell(c+ell))), series optimum")
        if cfg.alpha == "auto":
            alpha, predicted = _scaled(opt.alpha, cert, cfg), opt.predicted_factor
            if opt.fallback:
                _warn(notes, f"kappa={cert.kappa:.3g} < 2: series step not valid, using range midpoint")
        else:
            alpha, predicted = cfg.alpha, None
        bound = None
    if not 0 < alpha < hi:
        _warn(notes, f"step {alpha:.6g} outside guaranteed range (0, {hi:.6g})")

    def step(x, fx):
        xn = x + alpha * fx
        return xn, f(xn), True

    trace = _trace(Method.FORWARD, alpha, f, cert, cfg, x0, x_star, step)
    trace.predicted_factor, trace.factor_bound = predicted, bound
    trace.basis, trace.warnings = basis, notes
    return trace


def extragradient_solve(f, cert: ContractionCertificate, cfg: SolverConfig, x0, x_star=None) -> SolveTrace:
    """Extra-gradient: ``x_half = x + a f(x)``, ``x_next = x + a f(x_half)``."""
    notes = []
    a_max = extragradient_max_step(cert)
    if cfg.alpha == "auto":
        alpha = _scaled(extragradient_step(cert), cert, cfg)
        predicted = extragradient_series(cert.kappa)
    else:
        alpha, predicted = cfg.alpha, None
    if alpha > a_max:
        _warn(notes, f"step {alpha:.6g} above guaranteed range (0, {a_max:.6g}]")

    def step(x, fx):
        half = x + alpha * fx
        xn = x + alpha * f(half)
        return xn, f(xn), True

    trace = _trace(Method.EXTRAGRADIENT, alpha, f, cert, cfg, x0, x_star, step)
    trace.predicted_factor = predicted
    trace.factor_bound = extragradient_factor_bound(alpha, cert.rate, cert.lipschitz)
    trace.basis = ["extragradient: factor (1 + a^3 ell^3)/(1 + a c), auto step 1/(2 c kappa^1.5)"]
    trace.warnings = notes
    return trace


def _inner_done(d, y, x, ns, cfg):
    scale = float(vec_norm(y - x, ns))
    return d <= max(cfg.inner_tol * scale, 8 * EPS * (1.0 + float(vec_norm(y, ns))))


def implicit_solve(f, cert: ContractionCertificate, cfg: SolverConfig, x0, x_star=None,
                   inner: str | None = None, fallback: bool = True) -> SolveTrace:
    """Implicit Euler ``x_{k+1} = x_k + alpha f(x_{k+1})``.

    The inner equation is solved either by the fixed-point iteration
    ``y <- x_k + alpha f(y)`` (needs ``alpha ell < 1``) or by Newton's method
    on ``g(y) = y - alpha f(y) - x_k``.

    Raises
    ------
    PreconditionViolated
        Fixed-point inner solver requested with ``alpha ell >= 1``.

    Notes
    -----
    When Newton is requested but ``||f(x0)||`` exceeds the start bound the
    fixed-point inner loop is used instead (with a warning) unless
    ``fallback=False``. Newton with ``alpha ell >= 1`` only warns.
    """
    ns = cert.ns
    c, ell = cert.rate, cert.lipschitz
    notes = []
    method = cfg.method if inner is None else inner
    if cfg.alpha == "auto":
        alpha = _scaled(0.5 / ell, cert, cfg)
    else:
        alpha = cfg.alpha
    if method == "implicit":
        method = Method.IMPLICIT_FIXED_POINT if alpha * ell < 1 else Method.IMPLICIT_NEWTON
    method = METHOD_ALIASES.get(method, method)
    x0 = np.asarray(x0, dtype=float)

    if method == Method.IMPLICIT_FIXED_POINT and alpha * ell >= 1:
        raise PreconditionViolated(
            f"fixed-point inner iteration needs alpha*ell < 1, got {alpha * ell:.6g}")
    if method == Method.IMPLICIT_NEWTON:
        if alpha * ell >= 1:
            _warn(notes, f"alpha*ell = {alpha * ell:.6g} >= 1: quadratic convergence of Newton "
                         "inner solve is not guaranteed")
        else:
            bound = newton_start_bound(alpha, c, ell)
            r0 = float(vec_norm(f(x0), ns))
            if r0 > bound and fallback:
                _warn(notes, f"||f(x0)|| = {r0:.6g} exceeds Newton start bound {bound:.6g}; "
                             "falling back to fixed-point inner iteration")
                method = Method.IMPLICIT_FIXED_POINT

    inner_iterations, inner_factors, inner_history = [], [], []
    n = x0.size
    eye = np.eye(n)

    def fixed_point(x, fx):
        y = x
        fy = fx
        ds = []
        for _ in range(cfg.inner_max_iter):
            yn = x + alpha * fy
            d = float(vec_norm(yn - y, ns))
            ds.append(d)
            y = yn
            fy = f(y)
            if _inner_done(d, y, x, ns, cfg):
                return y, fy, ds, True
        return y, fy, ds, False

    def newton(x, fx):
        y = x
        fy = fx
        ds = []
        for _ in range(cfg.inner_max_iter):
            J = eye - alpha * f.jacobian(y)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                lu, piv = scipy.linalg.lu_factor(J)
            if np.min(np.abs(np.diag(lu))) <= 1e-12 * max(1.0, float(np.abs(J).max())):
                return y, fy, ds, False
            g = y - alpha * fy - x
            delta = scipy.linalg.lu_solve((lu, piv), g)
            y = y - delta
            fy = f(y)
            d = float(vec_norm(delta, ns))
            ds.append(d)
            if _inner_done(d, y, x, ns, cfg):
                return y, fy, ds, True
        return y, fy, ds, False

    solve_inner = newton if method == Method.IMPLICIT_NEWTON else fixed_point
    scale_floor = cfg.factor_floor * (1.0 + float(vec_norm(x0, ns)))

    def step(x, fx):
        y, fy, ds, ok = solve_inner(x, fx)
        inner_iterations.append(len(ds))
        inner_history.append(np.array(ds))
        ds = np.array(ds)
        if len(ds) > 1:
            keep = ds[:-1] > scale_floor
            inner_factors.append(float(np.max(ds[1:][keep] / ds[:-1][keep])) if keep.any() else float("nan"))
        else:
            inner_factors.append(float("nan"))
        return y, fy, ok

    trace = _trace(method, alpha, f, cert, cfg, x0, x_star, step)
    trace.inner_iterations = inner_iterations
    trace.inner_factors = inner_factors
    trace.inner_history = inner_history
    trace.factor_bound = implicit_factor(alpha, c)
    trace.predicted_factor = implicit_factor(alpha, c)
    trace.basis = ["implicit-euler: factor 1/(1 + a c) for any a > 0",
                   "fixed-point inner factor a*ell when a*ell < 1"]
    if method == Method.IMPLICIT_NEWTON:
        trace.basis.append("newton inner: quadratic when a*ell < 1 and ||f(x0)|| below start bound")
    trace.warnings = notes
    return trace


def solve(f, cert: ContractionCertificate, cfg: SolverConfig, x0, x_star=None) -> SolveTrace:
    """Dispatch on ``cfg.method``."""
    m = cfg.method
    if m == Method.FORWARD:
        return forward_solve(f, cert, cfg, x0, x_star)
    if m == Method.EXTRAGRADIENT:
        return extragradient_solve(f, cert, cfg, x0, x_star)
    return implicit_solve(f, cert, cfg, x0, x_star)


def _difference_directions(rng, m, n):
    """Mix of Gaussian, coordinate and sign directions: coordinate vectors
    attain l1 induced norms, sign vectors attain l-infinity ones."""
    D = rng.standard_normal((m, n))
    k = m // 3
    idx = np.arange(k) % n
    D[:k] = 0.0
    D[np.arange(k), idx] = rng.choice((-1.0, 1.0), size=k)
    D[k:2 * k] = rng.choice((-1.0, 1.0), size=(k, n))
    return D


def empirical_contraction_factor(F, ns: NormSpec, samples: int = 2000, seed: int = 0,
                                 box: Box | None = None, dim: int | None = None,
                                 spread: float = 1.0) -> float:
    """Largest sampled ``||F(x) - F(y)|| / ||x - y||``; a lower bound on Lip(F).

    ``F`` must accept a batch of points of shape (m, n).
    """
    if samples < 2:
        raise ValueError("samples must be >= 2")
    n = dim or (box.dim if box is not None else ns.dim)
    if n is None:
        raise ValueError("dimension unknown: pass dim or box")
    box = Box.cube(n) if box is None else box
    rng = np.random.default_rng(seed)
    X = box.sample(rng, samples)
    Y = X + spread * _difference_directions(rng, samples, n)
    num = vec_norm(F(X) - F(Y), ns)
    den = vec_norm(X - Y, ns)
    return float(np.max(num / den))


def newton_order(steps, floor: float = 1e-13) -> float:
    """Convergence order from the last three inner step lengths above ``floor``:
    ``log(d3/d2) / log(d2/d1)`` (2 for quadratic decay)."""
    d = np.asarray(steps, dtype=float)
    d = d[d > floor]
    if d.size < 3:
        return float("nan")
    d1, d2, d3 = d[-3:]
    return float(math.log(d3 / d2) / math.log(d2 / d1))
