import numpy as np
import pytest

from contractivity.errors import (ArityMismatch, DimensionMismatch, ExpressionSyntaxError, NotContractive)
from contractivity.fields import (Box, VectorField, affine_field, certificate, certify, demidovich_rate,
                                  field_from_json, jacobian_fd, lipschitz_estimate, osl_margin, parse_field,
                                  sample_pairs, tanh_network)
from contractivity.linalg import NormSpec
from contractivity.pairings import WeakPairing

from conftest import PAPER_A, PAPER_B

PAPER_SOURCE = "-10*x1 + 2.5*x2 - 19; 9*x1 - 3*x2 + 20"


def test_affine_field_examples(paper_field):
    np.testing.assert_array_equal(paper_field([0.0, 0.0]), PAPER_B)
    np.testing.assert_array_equal(paper_field.jacobian([3.0, -1.0]), PAPER_A)
    f = affine_field(-np.eye(2))
    np.testing.assert_array_equal(f([1.5, -2.0]), [-1.5, 2.0])
    np.testing.assert_allclose(paper_field.equilibrium(), [-14 / 15, 58 / 15], atol=1e-14)


def test_affine_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        affine_field(PAPER_A, [1.0, 2.0, 3.0])
    with pytest.raises(DimensionMismatch):
        affine_field(PAPER_A)([1.0, 2.0, 3.0])


def test_parse_field_examples(paper_field):
    f = parse_field("-x1 + tanh(x2); -x2", 2)
    np.testing.assert_array_equal(f([0.0, 0.0]), [0.0, 0.0])
    g = parse_field(PAPER_SOURCE, 2)
    X = np.random.default_rng(0).uniform(-5, 5, size=(100, 2))
    assert np.max(np.abs(g(X) - paper_field(X))) <= 1e-12
    with pytest.raises(ExpressionSyntaxError) as err:
        parse_field("x1 +", 1)
    assert err.value.offset == 3
    with pytest.raises(ArityMismatch):
        parse_field("x1", 2)


def test_jacobian_fd_examples(paper_field):
    np.testing.assert_allclose(jacobian_fd(paper_field, np.array([1.0, 2.0]), h=1e-5), PAPER_A, atol=1e-8)
    th = parse_field("tanh(x1)", 1)
    assert jacobian_fd(th, np.array([0.0]))[0, 0] == pytest.approx(1.0, abs=1e-8)
    sq = parse_field("x1^2", 1)
    assert jacobian_fd(sq, np.array([3.0]))[0, 0] == pytest.approx(6.0, abs=1e-6)
    with pytest.raises(ValueError):
        jacobian_fd(sq, np.array([3.0]), h=0.0)


def test_parsed_jacobian_matches_builtin():
    D = np.array([2.0, 3.0])
    W = np.array([[0.5, -0.4], [0.3, 0.2]])
    b = np.array([0.1, -0.2])
    net = tanh_network(D, W, b)
    src = "-2*x1 + 0.5*tanh(x1) - 0.4*tanh(x2) + 0.1; -3*x2 + 0.3*tanh(x1) + 0.2*tanh(x2) - 0.2"
    parsed = parse_field(src, 2)
    rng = np.random.default_rng(1)
    for x in rng.uniform(-3, 3, size=(20, 2)):
        np.testing.assert_allclose(parsed.jacobian(x), net.jacobian(x), atol=1e-6)
        np.testing.assert_allclose(parsed(x), net(x), atol=1e-14)


def test_demidovich_examples(paper_field):
    assert demidovich_rate(paper_field, NormSpec(p="1")) == 0.5
    assert demidovich_rate(paper_field, NormSpec(p="2")) == pytest.approx(-0.231, abs=1e-3)
    minus = parse_field("-x1; -x2", 2)
    for p in ("1", "2", "inf"):
        assert demidovich_rate(minus, NormSpec(p=p), samples=50) == pytest.approx(1.0, abs=1e-8)


def test_demidovich_affine_sample_independent(paper_field):
    ns = NormSpec(p="inf")
    assert demidovich_rate(paper_field, ns, samples=1) == demidovich_rate(paper_field, ns, samples=500, seed=3)


def test_osl_examples(paper_field):
    box = Box.cube(2)
    pairs = sample_pairs(box, 10_000, seed=4)
    assert osl_margin(paper_field, WeakPairing(NormSpec(p="1")), pairs, 0.5) >= -1e-9
    minus = affine_field(-np.eye(2))
    for p in ("1", "2", "inf"):
        assert abs(osl_margin(minus, WeakPairing(NormSpec(p=p)), pairs, 1.0)) <= 1e-12 * 100
    plus = affine_field(np.eye(2))
    assert osl_margin(plus, WeakPairing(NormSpec(p="1")), pairs, 0.1) < 0
    with pytest.raises(ValueError):
        osl_margin(minus, WeakPairing(NormSpec(p="1")), [([1.0, 1.0], [1.0, 1.0])], 1.0)


def test_lipschitz_examples(paper_field):
    assert lipschitz_estimate(paper_field, NormSpec(p="1")) == 19.0
    assert lipschitz_estimate(affine_field(-np.eye(3)), NormSpec(p="2")) == pytest.approx(1.0)
    f = parse_field("3*tanh(x1); 3*tanh(x2)", 2)
    assert lipschitz_estimate(f, NormSpec(p="inf")) == pytest.approx(3.0, abs=1e-3)


def test_certify_examples(paper_field):
    cert = certify(paper_field, NormSpec(p="1"))
    assert (cert.c, cert.ell, cert.kappa, cert.mode) == (0.5, 19.0, 38.0, "exact-affine")
    with pytest.raises(NotContractive):
        certify(paper_field, NormSpec(p="2"))
    for p in ("1", "2", "inf"):
        c2 = certify(affine_field(-2 * np.eye(3)), NormSpec(p=p))
        assert (c2.c, c2.ell, c2.kappa) == pytest.approx((2.0, 2.0, 1.0))


def test_certify_nonlinear_invariants():
    rng = np.random.default_rng(5)
    W = rng.uniform(-0.4, 0.4, size=(3, 3))
    f = tanh_network([2.0, 2.5, 3.0], W, rng.uniform(-1, 1, 3))
    ns = NormSpec(p="inf")
    cert = certify(f, ns, budget=400, seed=2)
    assert cert.mode == "empirical" and cert.kappa >= 1
    fresh = sample_pairs(Box.cube(3), 10_000, seed=99)
    assert osl_margin(f, WeakPairing(ns), fresh, cert.c) >= -1e-6
    js = cert.to_json()
    assert js["evidence"]["seed"] == 2 and js["evidence"]["samples"] == 400


def test_certify_expanding_nonlinear():
    with pytest.raises(NotContractive):
        certify(parse_field("x1 + tanh(x2); -x2", 2), NormSpec(p="1"), budget=50)


def test_certificate_validation():
    with pytest.raises(ValueError):
        certificate(NormSpec(p="1"), 2.0, 1.0)
    with pytest.raises(ValueError):
        certificate(NormSpec(p="1"), 0.0, 1.0)


def test_field_from_json_kinds(paper_field):
    f = field_from_json({"kind": "affine", "A": [[-10, 2.5], [9, -3]], "b": [-19, 20]})
    np.testing.assert_array_equal(f([1.0, 1.0]), paper_field([1.0, 1.0]))
    g = field_from_json({"kind": "expr", "source": PAPER_SOURCE, "dim": 2})
    np.testing.assert_allclose(g([1.0, 1.0]), paper_field([1.0, 1.0]))
    h = field_from_json({"kind": "builtin", "name": "tanh_network",
                         "params": {"D": [1.0], "W": [[0.5]], "b": [0.0]}})
    assert h([0.0])[0] == 0.0
    with pytest.raises(ValueError):
        field_from_json({"kind": "spline"})


def test_box_validation():
    with pytest.raises(ValueError):
        Box([1.0], [0.0])
    with pytest.raises(DimensionMismatch):
        Box([0.0, 0.0], [1.0])
    with pytest.raises(DimensionMismatch):
        certify(affine_field(-np.eye(2)), NormSpec(p="1"), box=Box.cube(3))


def test_vector_field_is_reentrant():
    f = VectorField(1, lambda x: -x, kind="builtin")
    a = f(np.array([2.0]))
    b = f(np.array([2.0]))
    np.testing.assert_array_equal(a, b)
    assert not f.has_analytic_jacobian and not f.is_affine
