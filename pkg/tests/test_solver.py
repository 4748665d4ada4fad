import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from monotone_elliptic.coeff import example72, identity_field
from monotone_elliptic.grid import DomainBox, GridSpec
from monotone_elliptic.scheme import assemble, restrict_dirichlet
from monotone_elliptic.solver import (
    SolveConfig,
    StructuralError,
    gauss_seidel_solve,
    jacobi_solve,
    residual,
)

UNIT = DomainBox.unit()


def laplace_1d(n=3, h=0.25):
    return sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1], format="csr") / h**2


def fixture_5x5():
    return restrict_dirichlet(assemble(example72(), GridSpec.from_step(6), UNIT), UNIT)


def test_identity_one_iteration():
    mu = np.array([1.0, -2.0, 3.0])
    u, rep = jacobi_solve(sp.identity(3, format="csr"), mu)
    assert rep.iterations == 1 and rep.converged
    np.testing.assert_array_equal(u, mu)


def test_1d_laplacian_fixture():
    A = laplace_1d()
    mu = np.array([1.0, 0.0, 0.0]) / 0.25**2
    u, rep = jacobi_solve(A, mu, SolveConfig(tol=1e-12))
    np.testing.assert_allclose(u, [0.75, 0.5, 0.25], atol=1e-10)
    assert rep.converged
    assert residual(A, u, mu) <= 32 * 1e-10
    ug, _ = gauss_seidel_solve(A, mu, SolveConfig(tol=1e-12))
    np.testing.assert_allclose(ug, u, atol=1e-10)


def test_jacobi_partial_sums():
    R = fixture_5x5()
    m = R.matrix.toarray()
    kinv = 1.0 / np.diag(m)
    T = -(m - np.diag(np.diag(m))) * kinv[:, None]
    mu = np.random.default_rng(0).uniform(0, 1, size=R.order)
    term = kinv * mu
    partial = term.copy()
    for iters in range(1, 12):
        term = T @ term
        partial = partial + term
        u, rep = jacobi_solve(R.matrix, mu, SolveConfig(tol=1e-300, max_iters=iters))
        assert rep.iterations == iters and not rep.converged
        np.testing.assert_allclose(u, partial, rtol=1e-13, atol=1e-13 * np.abs(partial).max())


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 40))
def test_iterates_stay_nonnegative(seed, iters):
    R = fixture_5x5()
    mu = np.random.default_rng(seed).uniform(0, 1, size=R.order)
    u, _ = jacobi_solve(R.matrix, mu, SolveConfig(tol=1e-300, max_iters=iters))
    assert np.all(u >= 0)


def test_jacobi_and_gauss_seidel_agree():
    R = restrict_dirichlet(assemble(example72(), GridSpec.from_step(16), UNIT), UNIT)
    mu = np.ones(R.order)
    tol = 1e-10
    uj, rj = jacobi_solve(R, mu, SolveConfig(tol=tol))
    ug, rg = gauss_seidel_solve(R, mu, SolveConfig(tol=tol))
    assert rj.converged and rg.converged
    assert rg.iterations < rj.iterations
    assert np.max(np.abs(uj.values - ug.values)) <= 10 * tol
    exact = sp.linalg.spsolve(R.matrix.tocsc(), mu)
    assert np.max(np.abs(uj.values.ravel() - exact)) <= 10 * tol


def test_threads_identical():
    R = restrict_dirichlet(assemble(identity_field(), GridSpec(4), UNIT), UNIT)
    mu = np.ones(R.order)
    u1, r1 = jacobi_solve(R, mu, SolveConfig(tol=1e-8), threads=1)
    u2, r2 = jacobi_solve(R, mu, SolveConfig(tol=1e-8), threads=2)
    assert r1.iterations == r2.iterations
    np.testing.assert_array_equal(u1.values, u2.values)


def test_structural_error():
    A = sp.csr_matrix(np.array([[1.0, 0.0], [0.0, 0.0]]))
    with pytest.raises(StructuralError):
        jacobi_solve(A, np.ones(2))


def test_nonconvergence_reported():
    u, rep = jacobi_solve(laplace_1d(), np.ones(3), SolveConfig(tol=1e-12, max_iters=3))
    assert not rep.converged and rep.iterations == 3


def test_config_validation():
    for kw in ({"method": "sor"}, {"tol": 0.0}, {"max_iters": 0}, {"lam": -1.0}):
        with pytest.raises(ValueError):
            SolveConfig(**kw)
