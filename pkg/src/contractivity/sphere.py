"""Unit sphere S^2 in R^3: exponential and logarithm maps, geodesic distance,
parallel transport, geodesic-contraction margins and the forward step
``x_{k+1} = exp_{x_k}(alpha X(x_k))``."""
from __future__ import annotations

import numpy as np

from .errors import AntipodalPoints, DimensionMismatch
from .expr import make_evaluator
from .flows import rows_to_csv

CUT_LOCUS = 1e-10


def _point(x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != 3:
        raise DimensionMismatch(f"sphere points live in R^3, got length {x.shape[-1]}")
    return x


def normalize(x):
    x = _point(x)
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


def project_tangent(x, v):
    """Orthogonal projection of ``v`` onto T_x S^2."""
    x = _point(x)
    return v - np.sum(x * v, axis=-1, keepdims=True) * x


def _dot(a, b):
    return np.sum(a * b, axis=-1)


def sphere_exp(x, v):
    """``cos(|v|) x + sin(|v|) v/|v|``, renormalized; ``exp_x(0) = x``."""
    x = _point(x)
    v = np.asarray(v, dtype=float)
    t = np.linalg.norm(v, axis=-1, keepdims=True)
    safe = np.where(t > 0, t, 1.0)
    y = np.cos(t) * x + np.where(t > 0, np.sin(t) / safe, 1.0) * v
    return normalize(y)


def _check_cut(x, y):
    if np.any(_dot(x, y) <= -1.0 + CUT_LOCUS):
        raise AntipodalPoints("points are (numerically) antipodal: no unique minimal geodesic")


def sphere_dist(x, y):
    """Geodesic distance in [0, pi]; atan2 form stays accurate for nearby points."""
    x, y = _point(x), _point(y)
    return np.arctan2(np.linalg.norm(np.cross(x, y), axis=-1), _dot(x, y))


def sphere_log(x, y):
    """Tangent ``v`` at x with ``exp_x(v) = y`` and ``|v| = d(x, y)``.

    Raises
    ------
    AntipodalPoints
        When ``x.y <= -1 + 1e-10``.
    """
    x, y = _point(x), _point(y)
    _check_cut(x, y)
    u = project_tangent(x, y)
    nu = np.linalg.norm(u, axis=-1, keepdims=True)
    # atan2 keeps accuracy for both tiny and near-pi angles
    theta = np.arctan2(nu, _dot(x, y)[..., None])
    safe = np.where(nu > 0, nu, 1.0)
    return np.where(nu > 0, theta / safe, 0.0) * u


def sphere_transport(x, y, v):
    """Parallel transport of ``v`` in T_x along the minimal geodesic to y.

    ``P v = v - <y, v> / (1 + <x, y>) (x + y)``.
    """
    x, y = _point(x), _point(y)
    v = np.asarray(v, dtype=float)
    _check_cut(x, y)
    w = v - (_dot(y, v) / (1.0 + _dot(x, y)))[..., None] * (x + y)
    return project_tangent(y, w)


class SphereField:
    """Tangent vector field on S^2 given by an ambient map projected onto T_x."""

    def __init__(self, ambient, name: str = "custom", target=None):
        self._ambient = ambient
        self.name = name
        self.target = None if target is None else normalize(target)

    def __call__(self, x):
        x = _point(x)
        return project_tangent(x, self._ambient(x))

    def __neg__(self):
        return SphereField(lambda x: -self._ambient(x), name=f"-{self.name}", target=self.target)

    @property
    def equilibrium(self):
        return self.target


def attractor_field(p) -> SphereField:
    """``X_p(x) = log_x(p)``: points straight at p along the geodesic."""
    p = normalize(p)
    field = SphereField(lambda x: sphere_log(x, np.broadcast_to(p, np.shape(x))), name="attractor", target=p)
    return field


def zero_field() -> SphereField:
    return SphereField(lambda x: np.zeros_like(x), name="zero")


def expression_field(source: str) -> SphereField:
    """Ambient field ``R^3 -> R^3`` from an expression in x1, x2, x3."""
    return SphereField(make_evaluator(source, 3), name=source)


def sample_ball(center, radius: float, m: int, seed: int = 0):
    """``m`` points at geodesic distance < radius from ``center``."""
    rng = np.random.default_rng(seed)
    c = normalize(center)
    V = project_tangent(c, rng.standard_normal((m, 3)))
    V /= np.linalg.norm(V, axis=-1, keepdims=True)
    r = radius * np.sqrt(rng.uniform(0.0, 1.0, size=(m, 1)))
    return sphere_exp(np.broadcast_to(c, V.shape), r * V)


def geodesic_contraction_margins(X: SphereField, x, y, c: float):
    """Per-pair margins in the endpoint form and the transport form.

    Endpoint form: ``-c d^2 - (<X(y), g'(1)> - <X(x), g'(0)>)`` with
    ``g'(0) = log_x(y)`` and ``g'(1) = -log_y(x)``.
    Transport form: ``-c d^2 - <P_{y->x} X(y) - X(x), log_x(y)>``.
    """
    x, y = _point(x), _point(y)
    gx = sphere_log(x, y)
    gy = -sphere_log(y, x)
    Xx, Xy = X(x), X(y)
    d2 = sphere_dist(x, y) ** 2
    endpoint = -c * d2 - (_dot(Xy, gy) - _dot(Xx, gx))
    transported = sphere_transport(y, x, Xy)
    transport = -c * d2 - _dot(transported - Xx, gx)
    return endpoint, transport


def geodesic_contraction_margin(X: SphereField, pairs, c: float, agree_tol: float = 1e-9) -> float:
    """Minimum margin over ``pairs = (x, y)``; both forms must agree to ``agree_tol``."""
    x, y = pairs
    endpoint, transport = geodesic_contraction_margins(X, x, y, c)
    gap = float(np.max(np.abs(endpoint - transport))) if np.size(endpoint) else 0.0
    if gap > agree_tol:
        raise AssertionError(f"endpoint and transport margins disagree by {gap:.3e}")
    return float(np.min(endpoint))


def geodesic_decay_profile(X: SphereField, x, y, c: float, points: int = 20):
    """``phi(t) = <g'(t), X(g(t))> + c |g'(0)|^2 t`` on ``points`` grid values of [0, 1].

    ``g`` is the geodesic from x to y, ``g'(t)`` is ``log_x(y)`` transported to
    ``g(t)``. For a c-contracting field phi is non-increasing.
    """
    v = sphere_log(x, y)
    t = np.linspace(0.0, 1.0, points)
    g = sphere_exp(np.broadcast_to(x, (points, 3)), t[:, None] * v)
    dg = np.array([sphere_transport(x, gi, v) for gi in g])
    return t, _dot(dg, X(g)) + c * float(_dot(v, v)) * t


def riemannian_forward_step(X: SphereField, alpha: float, x0, tol: float = 1e-12, max_iter: int = 1000,
                            target=None):
    """Iterate ``x_{k+1} = exp_{x_k}(alpha X(x_k))``.

    Stops when ``|X(x_k)| <= tol``. Returns ``(iterates, distances)`` where the
    distances are to ``target`` (default: the field's equilibrium, if known).
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    x = normalize(x0)
    p = X.target if target is None else normalize(target)
    xs = [x]
    for _ in range(max_iter):
        v = X(x)
        if np.linalg.norm(v) <= tol:
            break
        x = sphere_exp(x, alpha * v)
        xs.append(x)
    xs = np.array(xs)
    dist = sphere_dist(xs, p) if p is not None else np.full(len(xs), np.nan)
    return xs, dist


def trace_csv(xs, dist) -> str:
    rows = [["k", "x1", "x2", "x3", "dist"]]
    for k, (x, d) in enumerate(zip(xs, dist)):
        rows.append([k] + [float(v) for v in x] + [float(d)])
    return rows_to_csv(rows)
