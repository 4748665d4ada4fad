import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from monotone_elliptic.embed import (
    HatBasis,
    embed,
    fourier_coefficients,
    grad_sq_difference,
    grad_sq_stiffness,
    l2_inner,
    relative_errors,
)
from monotone_elliptic.grid import GridFunction, GridSpec, lp_norm
from oracles import quadrature_grad_sq, quadrature_l2_sq


def delta(spec, k):
    return GridFunction.from_dict(spec, {tuple(k): 1.0})


def test_hat_mass_entries():
    spec = GridSpec(3, dim=1)
    h = spec.h
    assert l2_inner(delta(spec, (2,)), delta(spec, (2,))) == pytest.approx(2 / 3 * h)
    assert l2_inner(delta(spec, (2,)), delta(spec, (3,))) == pytest.approx(1 / 6 * h)
    assert l2_inner(delta(spec, (2,)), delta(spec, (5,))) == 0.0


def test_embed_delta_is_single_hat():
    spec = GridSpec(2)
    e = embed(delta(spec, (1, 2)))
    pts = np.array([[0.25, 0.5], [0.375, 0.5], [0.25, 0.625], [0.5, 0.5], [0.3, 0.4]])
    expected = HatBasis(spec).evaluate(np.array([[1, 2]] * len(pts)), pts)
    np.testing.assert_allclose(e(pts), expected)
    np.testing.assert_allclose(e(pts[:4]), [1.0, 0.5, 0.5, 0.0])


def test_embed_affine_exact_and_knot_interpolation():
    spec = GridSpec(3, r=(2, 1))
    f = lambda x: 1.5 * x[:, 0] - 0.5 * x[:, 1] + 0.2  # noqa: E731
    u = GridFunction.sample(spec, f, (0, 0), (4, 8))
    e = embed(u)
    rng = np.random.default_rng(1)
    pts = rng.uniform([0, 0], [1, 1], size=(200, 2))
    np.testing.assert_allclose(e(pts), f(pts), atol=1e-13)
    np.testing.assert_allclose(e(spec.coords(u.indices())), u.values.ravel())


def test_fourier_constant_affine_quadratic():
    spec = GridSpec(4, dim=1)
    b = HatBasis(spec)
    h = spec.h
    c = fourier_coefficients(lambda x: np.full(len(x), 3.0), b, (1,), (15,))
    np.testing.assert_allclose(c.values, 3.0)
    a = fourier_coefficients(lambda x: 2 * x[:, 0] - 1, b, (1,), (15,))
    xk = spec.coords(a.indices())[:, 0]
    np.testing.assert_allclose(a.values, 2 * xk - 1, atol=1e-14)
    q = fourier_coefficients(lambda x: x[:, 0] ** 2, b, (1,), (15,))
    np.testing.assert_allclose(q.values, xk**2 + h**2 / 6, atol=1e-14)


def test_relative_errors_zero_on_samples():
    spec = GridSpec(3)
    f = lambda x: 1 + x[:, 0] * x[:, 1]  # noqa: E731
    u = GridFunction.sample(spec, f, (1, 1), (7, 7))
    rep = relative_errors(u, f)
    assert rep.eps1 == 0.0 and rep.eps_inf == 0.0


def test_relative_errors_exclusion():
    spec = GridSpec(2)
    u = GridFunction.sample(spec, lambda x: np.ones(len(x)), (1, 1), (3, 3))
    u.values[1, 1] = 5.0
    assert relative_errors(u, lambda x: np.ones(len(x))).argmax == (2, 2)
    assert relative_errors(u, lambda x: np.ones(len(x)), exclude=[(2, 2)]).eps1 == 0.0


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 3), st.integers(0, 2**31 - 1))
def test_mass_matches_quadrature_and_norm_equivalence(d, seed):
    rng = np.random.default_rng(seed)
    r = tuple(int(v) for v in rng.integers(1, 3, size=d))
    spec = GridSpec(3, dim=d, r=r)
    shape = tuple(int(v) for v in rng.integers(1, 4, size=d))
    u = GridFunction(spec, tuple(int(v) for v in rng.integers(-2, 3, size=d)), rng.normal(size=shape))
    mass = l2_inner(u, u)
    quad = quadrature_l2_sq(u)
    assert mass == pytest.approx(quad, rel=1e-10)
    n2 = lp_norm(u, 2) ** 2
    hd = spec.h**d
    assert 3.0**-d * hd * n2 * (1 - 1e-12) <= mass <= hd * n2 * (1 + 1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 3), st.integers(0, 2**31 - 1))
def test_gradient_routes_agree(d, seed):
    rng = np.random.default_rng(seed)
    r = tuple(int(v) for v in rng.integers(1, 3, size=d))
    spec = GridSpec(3, dim=d, r=r)
    shape = tuple(int(v) for v in rng.integers(1, 4, size=d))
    u = GridFunction(spec, (0,) * d, rng.normal(size=shape))
    for axis in range(d):
        s = grad_sq_stiffness(u, axis)
        assert s == pytest.approx(grad_sq_difference(u, axis), rel=1e-10)
        assert s == pytest.approx(quadrature_grad_sq(u, axis), rel=1e-8)
