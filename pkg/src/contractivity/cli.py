"""Command-line interface.

Exit codes
----------
0  success
1  unexpected internal error
2  invalid input (parse error, schema violation, singular weight, bad flags)
3  not contractive (non-negative measure or rate)
4  solver Diverged or InnerFailed
5  solver hit max_iter without converging
"""
from __future__ import annotations

import argparse
import json
import sys
import warnings

import jsonschema
import numpy as np

from . import bench
from .errors import (AntipodalPoints, ContractivityError, DimensionMismatch, ExpressionError,
                     InconsistentEvidence, NotContractive, PreconditionViolated, SingularWeight,
                     WrongNormFamily)
from .fields import Box, certify, field_from_json
from .flows import dini_decay_check, pair_trajectory_rows, rows_to_csv
from .linalg import (NormSpec, mat_norm, matrix_from_json, matrix_measure, matrix_measure_oracle,
                     operator_condition_number, vector_from_json)
from .solvers import SolverConfig, Status, solve
from .sphere import attractor_field, riemannian_forward_step, trace_csv

EXIT_OK, EXIT_INTERNAL, EXIT_INPUT, EXIT_NOT_CONTRACTIVE, EXIT_SOLVER, EXIT_MAX_ITER = 0, 1, 2, 3, 4, 5

_MATRIX = {
    "oneOf": [
        {
            "type": "object",
            "properties": {
                "rows": {"type": "integer", "minimum": 1},
                "cols": {"type": "integer", "minimum": 1},
                "data": {"type": "array", "items": {"type": "number"}},
            },
            "required": ["rows", "cols", "data"],
            "additionalProperties": False,
        },
        {"type": "array", "items": {"type": "array", "items": {"type": "number"}}, "minItems": 1},
    ]
}
_VECTOR = {"type": "array", "items": {"type": "number"}, "minItems": 1}

PROBLEM_SCHEMA = {
    "type": "object",
    "properties": {
        "field": {
            "oneOf": [
                {
                    "type": "object",
                    "properties": {"kind": {"const": "affine"}, "A": _MATRIX, "b": _VECTOR},
                    "required": ["kind", "A"],
                    "additionalProperties": False,
                },
                {
                    "type": "object",
                    "properties": {
                        "kind": {"const": "expr"},
                        "source": {"type": "string"},
                        "dim": {"type": "integer", "minimum": 1},
                    },
                    "required": ["kind", "source", "dim"],
                    "additionalProperties": False,
                },
                {
                    "type": "object",
                    "properties": {
                        "kind": {"const": "builtin"},
                        "name": {"type": "string"},
                        "params": {"type": "object"},
                    },
                    "required": ["kind", "name"],
                    "additionalProperties": False,
                },
            ]
        },
        "norm": {
            "type": "object",
            "properties": {
                "p": {"enum": ["1", "2", "inf", 1, 2]},
                "weight": _MATRIX,
                "P": _MATRIX,
            },
            "required": ["p"],
            "additionalProperties": False,
        },
        "box": {
            "type": "object",
            "properties": {"lo": _VECTOR, "hi": _VECTOR},
            "required": ["lo", "hi"],
            "additionalProperties": False,
        },
        "solver": {
            "type": "object",
            "properties": {
                "method": {"enum": ["forward", "implicit", "implicit-fixed-point", "implicit-newton",
                                    "extragradient"]},
                "alpha": {"oneOf": [{"type": "number", "exclusiveMinimum": 0}, {"const": "auto"}]},
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "max_iter": {"type": "integer", "minimum": 1},
                "inner_tol": {"type": "number", "exclusiveMinimum": 0},
                "inner_max_iter": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
        "x0": _VECTOR,
        "seed": {"type": "integer", "minimum": 0},
        "budget": {"type": "integer", "minimum": 1},
    },
    "required": ["field"],
    "additionalProperties": False,
}


class InputError(ContractivityError):
    """Malformed command-line or file input."""


class Problem:
    def __init__(self, doc: dict):
        self.doc = doc
        self.field = field_from_json(doc["field"])
        self.ns = norm_from_json(doc.get("norm", {"p": "2"}))
        self.ns.check_dim(self.field.dim)
        box = doc.get("box")
        self.box = Box(box["lo"], box["hi"]) if box else None
        self.solver = dict(doc.get("solver", {}))
        self.x0 = vector_from_json(doc["x0"], self.field.dim) if "x0" in doc else np.zeros(self.field.dim)
        self.seed = int(doc.get("seed", 0))
        self.budget = int(doc.get("budget", 1000))


def norm_from_json(obj: dict) -> NormSpec:
    weight = obj.get("weight")
    P = obj.get("P")
    return NormSpec(p=str(obj["p"]),
                    weight=None if weight is None else matrix_from_json(weight),
                    P=None if P is None else matrix_from_json(P))


def _read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None


def load_problem(path) -> Problem:
    doc = _read_json(path)
    try:
        jsonschema.validate(doc, PROBLEM_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise InputError(f"{path}: schema violation at {where}: {exc.message}") from None
    return Problem(doc)


def parse_vector(text: str, dim: int | None = None):
    text = text.strip()
    try:
        values = json.loads(text) if text.startswith("[") else [float(t) for t in text.split(",")]
    except ValueError:
        raise InputError(f"cannot parse vector {text!r}") from None
    return vector_from_json(values, dim)


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=True) + "\n"


def _emit(text: str, out=None):
    if out:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _kappa_mu(A, ns):
    try:
        return operator_condition_number(A, ns), None
    except NotContractive as exc:
        return None, exc


# -- commands ------------------------------------------------------------------

def cmd_measure(args) -> int:
    A = matrix_from_json(_read_json(args.matrix))
    weight = matrix_from_json(_read_json(args.weight_file)) if args.weight_file else None
    ns = NormSpec(p=args.p, weight=weight)
    mu = matrix_measure(A, ns)
    kappa, err = _kappa_mu(A, ns)
    out = {
        "norm": ns.to_json(),
        "mu": mu,
        "mu_oracle": matrix_measure_oracle(A, ns, h_min=args.h_min),
        "matrix_norm": mat_norm(A, ns),
        "kappa_mu": kappa,
        "basis": ["matrix-measure: one-sided derivative of ||I + hA|| at h = 0+",
                  "operator-condition-number: ||A|| / |mu(A)| for mu(A) < 0"],
    }
    _emit(dumps(out), args.out)
    if err is not None:
        print(f"not contractive: {err}", file=sys.stderr)
        return EXIT_NOT_CONTRACTIVE
    return EXIT_OK


def cmd_certify(args) -> int:
    prob = load_problem(args.problem)
    cert = certify(prob.field, prob.ns, prob.box, budget=args.budget or prob.budget,
                   seed=prob.seed if args.seed is None else args.seed)
    out = cert.to_json()
    out["basis"] = ["exact-affine: c = -mu(A), ell = ||A||" if cert.exact else
                    "sampled Demidovich rate + Lipschitz scan, cross-checked by one-sided Lipschitz pairs"]
    _emit(dumps(out), args.out)
    return EXIT_OK


def _solver_config(prob: Problem, args) -> SolverConfig:
    opts = dict(prob.solver)
    if args.method:
        opts["method"] = args.method
    if args.alpha is not None:
        opts["alpha"] = args.alpha if args.alpha == "auto" else _positive(args.alpha, "--alpha")
    if args.tol is not None:
        opts["tol"] = args.tol
    if args.max_iter is not None:
        opts["max_iter"] = args.max_iter
    return SolverConfig(**opts)


def _positive(text, flag):
    try:
        v = float(text)
    except ValueError:
        raise InputError(f"{flag} expects a number or 'auto', got {text!r}") from None
    if not v > 0:
        raise InputError(f"{flag} must be positive")
    return v


def cmd_solve(args) -> int:
    prob = load_problem(args.problem)
    cfg = _solver_config(prob, args)
    x0 = parse_vector(args.x0, prob.field.dim) if args.x0 else prob.x0
    cert = certify(prob.field, prob.ns, prob.box, budget=prob.budget, seed=prob.seed)
    trace = solve(prob.field, cert, cfg, x0)
    out = trace.summary()
    out["certificate"] = {"c": cert.rate, "ell": cert.lipschitz, "kappa": cert.kappa, "mode": cert.mode}
    if args.trace:
        _emit(trace.to_csv(), args.trace)
    _emit(dumps(out), args.out)
    if trace.status in (Status.DIVERGED, Status.INNER_FAILED):
        return EXIT_SOLVER
    if trace.status == Status.MAX_ITER:
        return EXIT_MAX_ITER
    return EXIT_OK


def cmd_flow(args) -> int:
    prob = load_problem(args.problem)
    n = prob.field.dim
    x0 = parse_vector(args.x0, n)
    y0 = parse_vector(args.y0, n)
    if not args.dt > 0 or not args.T >= args.dt:
        raise InputError("need dt > 0 and T >= dt")
    if np.array_equal(x0, y0):
        raise InputError("--x0 and --y0 must differ")
    c = args.check_rate
    rows = pair_trajectory_rows(prob.field, prob.ns, x0, y0, c, args.T, args.dt)
    dini = dini_decay_check(prob.field, prob.ns, x0, y0, c, args.T, args.dt)
    rows[0].append("dini_margin")
    for r, m in zip(rows[1:], list(dini) + [float("nan")]):
        r.append(float(m))
    if args.every > 1:
        rows = [rows[0]] + rows[1::args.every] + ([rows[-1]] if (len(rows) - 2) % args.every else [])
    _emit(rows_to_csv(rows), args.out)
    return EXIT_OK


def cmd_sphere(args) -> int:
    target = parse_vector(args.target, 3)
    x0 = parse_vector(args.x0, 3)
    if not args.alpha > 0:
        raise InputError("--alpha must be positive")
    xs, dist = riemannian_forward_step(attractor_field(target), args.alpha, x0, tol=args.tol,
                                       max_iter=args.iters)
    _emit(trace_csv(xs, dist), args.out)
    return EXIT_OK


def cmd_bench(args) -> int:
    rows = bench.run(args.suite, args.seed)
    _emit(rows_to_csv(rows), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="contractivity",
                                 description="Contraction analysis, certificates and fixed-point solvers.")
    sub = ap.add_subparsers(dest="command", required=True)

    m = sub.add_parser("measure", help="matrix measure, induced norm and kappa_mu of a matrix")
    m.add_argument("matrix", help="matrix JSON file")
    m.add_argument("--p", default="2", choices=["1", "2", "inf"])
    m.add_argument("--weight-file", help="JSON file with the weight matrix R")
    m.add_argument("--h-min", type=float, default=1e-8, help="smallest oracle step")
    m.add_argument("--out")
    m.set_defaults(func=cmd_measure)

    c = sub.add_parser("certify", help="contraction certificate for a problem file")
    c.add_argument("problem")
    c.add_argument("--budget", type=int)
    c.add_argument("--seed", type=int)
    c.add_argument("--out")
    c.set_defaults(func=cmd_certify)

    s = sub.add_parser("solve", help="compute the equilibrium with a fixed-point scheme")
    s.add_argument("problem")
    s.add_argument("--method", choices=["forward", "implicit", "implicit-fixed-point", "implicit-newton",
                                        "extragradient"])
    s.add_argument("--alpha", help="step size or 'auto'")
    s.add_argument("--x0", help="start point, e.g. '0,0'")
    s.add_argument("--tol", type=float)
    s.add_argument("--max-iter", type=int)
    s.add_argument("--trace", help="write the iterate trace CSV here")
    s.add_argument("--out")
    s.set_defaults(func=cmd_solve)

    f = sub.add_parser("flow", help="incremental-stability margins along two RK4 trajectories")
    f.add_argument("problem")
    f.add_argument("--x0", required=True)
    f.add_argument("--y0", required=True)
    f.add_argument("-T", type=float, default=10.0)
    f.add_argument("--dt", type=float, default=1e-3)
    f.add_argument("--check-rate", type=float, required=True, help="rate c to check against")
    f.add_argument("--every", type=int, default=1, help="keep every k-th grid row")
    f.add_argument("--out")
    f.set_defaults(func=cmd_flow)

    sp = sub.add_parser("sphere", help="Riemannian forward step toward a target on the unit sphere")
    sp.add_argument("--target", default="0,0,1")
    sp.add_argument("--x0", default="1,0,0")
    sp.add_argument("--alpha", type=float, default=0.5)
    sp.add_argument("--iters", type=int, default=20)
    sp.add_argument("--tol", type=float, default=1e-12)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_sphere)

    b = sub.add_parser("bench", help="predicted vs measured contraction factors")
    b.add_argument("--suite", choices=sorted(bench.SUITES), default="kappa-scaling")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out")
    b.set_defaults(func=cmd_bench)
    return ap


_INPUT_ERRORS = (InputError, ExpressionError, SingularWeight, DimensionMismatch, WrongNormFamily,
                 PreconditionViolated, AntipodalPoints, ValueError, KeyError)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            code = args.func(args)
        except NotContractive as exc:
            print(f"not contractive: {exc}", file=sys.stderr)
            code = EXIT_NOT_CONTRACTIVE
        except InconsistentEvidence as exc:
            print(f"inconsistent evidence: {exc}", file=sys.stderr)
            code = EXIT_NOT_CONTRACTIVE
        except _INPUT_ERRORS as exc:
            print(f"error: {exc}", file=sys.stderr)
            code = EXIT_INPUT
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
