import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from monotone_elliptic.coeff import constant_field, example72, identity_field
from monotone_elliptic.grid import DomainBox, GridFunction, GridSpec
from monotone_elliptic.scheme import (
    AssemblyError,
    SchemeKind,
    assemble,
    gershgorin_check,
    quadratic_form,
    restrict_dirichlet,
    verify_compartmental,
)
from oracles import operator_of_quadratic

UNIT = DomainBox.unit()


def stencil(A, k):
    """Row of knot ``k`` as ``{offset: h^2 * value}``."""
    k = np.asarray(k)
    i = A.index_of(k)[0]
    row = A.matrix.getrow(i)
    kn = A.knots()
    h2 = A.spec.h**2
    return {tuple((kn[c] - k).tolist()): v * h2 for c, v in zip(row.indices, row.data)}


def assert_stencil(got, expected):
    assert set(got) == set(expected)
    for key, val in expected.items():
        assert got[key] == pytest.approx(val, abs=1e-12)


def test_basic_negative_mixed_stencil():
    A = assemble(constant_field(np.array([[1.0, -0.3], [-0.3, 1.0]])), GridSpec(3), UNIT, SchemeKind("basic"))
    assert_stencil(
        stencil(A, (4, 4)),
        {(0, 0): 3.4, (1, 0): -0.7, (-1, 0): -0.7, (0, 1): -0.7, (0, -1): -0.7, (1, -1): -0.3, (-1, 1): -0.3},
    )


def test_basic_positive_mixed_stencil():
    A = assemble(constant_field(np.array([[1.0, 0.3], [0.3, 1.0]])), GridSpec(3), UNIT, SchemeKind("basic"))
    assert_stencil(
        stencil(A, (4, 4)),
        {(0, 0): 3.4, (1, 0): -0.7, (-1, 0): -0.7, (0, 1): -0.7, (0, -1): -0.7, (1, 1): -0.3, (-1, -1): -0.3},
    )


def test_extended_stencil_long_diagonal():
    A = assemble(constant_field(np.array([[10.0, 2.0], [2.0, 1.0]]), (3, 1)), GridSpec(4), UNIT)
    assert_stencil(
        stencil(A, (8, 8)),
        {(0, 0): 10.0, (1, 0): -4.0, (-1, 0): -4.0, (0, 1): -1 / 3, (0, -1): -1 / 3, (3, 1): -2 / 3, (-3, -1): -2 / 3},
    )
    B = assemble(constant_field(np.array([[10.0, -2.0], [-2.0, 1.0]]), (3, 1)), GridSpec(4), UNIT)
    s = stencil(B, (8, 8))
    assert s[(3, -1)] == pytest.approx(-2 / 3) and s[(-3, 1)] == pytest.approx(-2 / 3)


def test_identity_3d_seven_point():
    A = assemble(identity_field(3), GridSpec(2, dim=3), DomainBox.unit(3))
    s = stencil(A, (2, 2, 2))
    expected = {(0, 0, 0): 6.0}
    for ax in range(3):
        for sgn in (1, -1):
            off = [0, 0, 0]
            off[ax] = sgn
            expected[tuple(off)] = -1.0
    assert_stencil(s, expected)


def test_unrestricted_matrix_conservative():
    A = assemble(example72(), GridSpec.from_step(40), UNIT)
    cert = verify_compartmental(A)
    assert cert.compartmental and cert.conservative_rows and cert.conservative_cols
    assert not cert.offenders
    assert gershgorin_check(A)
    R = restrict_dirichlet(A, UNIT)
    rc = verify_compartmental(R)
    assert rc.compartmental and rc.conservative_cols
    assert gershgorin_check(R)


def test_symmetry():
    A = assemble(example72(), GridSpec.from_step(24), UNIT)
    assert abs(A.matrix - A.matrix.T).max() <= 1e-12 * abs(A.matrix).max()


def test_inadmissible_stride_detected():
    f = example72(stride=(1, 3))
    with pytest.raises(AssemblyError):
        assemble(f, GridSpec.from_step(24), UNIT)
    A = assemble(f, GridSpec.from_step(24), UNIT, check=False)
    cert = verify_compartmental(A)
    assert not cert.compartmental
    assert cert.offenders and all(v > 0 for _, _, v in cert.offenders)


def test_gershgorin_negative_control():
    A = assemble(identity_field(2), GridSpec(2), UNIT)
    m = A.matrix.tolil()
    i = A.index_of(np.array([2, 2]))[0]
    j = A.index_of(np.array([3, 2]))[0]
    m[i, j] = m[i, j] * 3
    A.matrix = sp.csr_matrix(m)
    assert not gershgorin_check(A)


def test_quadratic_form_single_knot():
    A = restrict_dirichlet(assemble(identity_field(2), GridSpec(1), UNIT), UNIT)
    u = GridFunction.from_dict(GridSpec(1), {(1, 1): 1.0})
    assert quadratic_form(A, u) == pytest.approx(16.0)


def test_unknown_variant_rejected():
    with pytest.raises(ValueError):
        SchemeKind("weird")


MONOMIALS = [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]


@pytest.mark.parametrize(
    "a,r,variant",
    [
        ([[1.0, -0.3], [-0.3, 1.0]], (1, 1), "basic"),
        ([[2.0, 0.5], [0.5, 1.0]], (2, 1), "basic"),
        ([[10.0, 2.0], [2.0, 1.0]], (3, 1), "extended"),
        ([[10.0, -2.0], [-2.0, 1.0]], (3, 1), "extended"),
        ([[1.0, 0.0], [0.0, 3.0]], (1, 1), "extended"),
    ],
)
def test_quadratic_exactness(a, r, variant):
    a = np.asarray(a)
    spec = GridSpec(4)
    A = assemble(constant_field(a, r), spec, UNIT, SchemeKind(variant))
    kn = A.knots()
    x = kn * spec.h
    inner = np.all((kn >= 5) & (kn <= 11), axis=1)
    scale = abs(A.matrix).max()
    for e in MONOMIALS:
        u = x[:, 0] ** e[0] * x[:, 1] ** e[1]
        au = (A.matrix @ u)[inner]
        ref = operator_of_quadratic(a, e)
        assert np.max(np.abs(au - ref)) <= 1e-11 * scale * max(1.0, np.max(np.abs(u)))


@settings(max_examples=25, deadline=None)
@given(
    st.floats(1.0, 5.0), st.floats(1.0, 5.0), st.floats(-0.9, 0.9),
    st.integers(1, 3), st.integers(1, 3),
)
def test_admissible_constant_fields_compartmental(a11, a22, t, r1, r2):
    a12 = t * min(a11 / r1 * r2, a22 / r2 * r1)
    f = constant_field(np.array([[a11, a12], [a12, a22]]), (r1, r2))
    A = assemble(f, GridSpec.from_step(12), UNIT)
    cert = verify_compartmental(A)
    assert cert.compartmental and cert.conservative_rows
    assert abs(A.matrix - A.matrix.T).max() <= 1e-12 * abs(A.matrix).max()
