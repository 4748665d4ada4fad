import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from monotone_elliptic.grid import (
    AlignmentError,
    DomainBox,
    GridFunction,
    GridSpec,
    backward_diff,
    forward_diff,
    knot_box,
    knots,
    lp_norm,
    shift,
    sobolev_seminorm_sq,
)


def test_interior_knot_counts():
    assert len(knots(GridSpec(1), DomainBox.unit(), "interior")) == 1
    assert len(knots(GridSpec(2), DomainBox.unit(), "interior")) == 9
    assert len(knots(GridSpec.from_step(400), DomainBox.unit(), "interior")) == 399 * 399


def test_closure_and_boundary_partition():
    spec = GridSpec(3)
    D = DomainBox.unit()
    n_cl = len(knots(spec, D, "closure"))
    n_in = len(knots(spec, D, "interior"))
    n_bd = len(knots(spec, D, "boundary"))
    assert n_cl == 81 and n_in == 49 and n_bd == n_cl - n_in


def test_misaligned_domain_rejected():
    with pytest.raises(AlignmentError):
        knot_box(GridSpec(2), DomainBox((0.0, 0.0), (0.3, 1.0)), "interior")


def test_subgrid_offset_reduced_and_coords():
    spec = GridSpec(2, r0=(4, 1), r=(3, 1))
    assert spec.r0 == (1, 0)
    assert spec.vol == 3
    np.testing.assert_allclose(spec.coords(np.array([[1, 2]])), [[1.0, 0.5]])


def test_shift_definition():
    spec = GridSpec(3)
    u = GridFunction.from_dict(spec, {(0, 0): 1.0})
    v = shift(u, 0, 1)
    assert v[(-1, 0)] == 1.0 and v[(0, 0)] == 0.0
    assert shift(u, 0, 0)[(0, 0)] == 1.0
    w = shift(shift(u, 1, 3), 1, -3)
    assert w[(0, 0)] == 1.0


def test_difference_quotients():
    spec = GridSpec(2)
    c = GridFunction.sample(spec, lambda x: np.full(len(x), 3.0), (0, 0), (4, 4))
    assert all(forward_diff(c, 0)[(k, 2)] == 0.0 for k in range(4))
    lin = GridFunction.sample(spec, lambda x: x[:, 0], (0, 0), (8, 4))
    for r in (1, 2, 3):
        g = forward_diff(lin, 0, r)
        assert all(g[(k, 2)] == pytest.approx(1.0) for k in range(0, 8 - r + 1))
    sq = GridFunction.sample(spec, lambda x: x[:, 0] ** 2, (0, 0), (4, 4))
    assert forward_diff(sq, 0)[(2, 1)] == pytest.approx(5 / 4)


def test_backward_is_shifted_forward():
    spec = GridSpec(3)
    rng = np.random.default_rng(0)
    u = GridFunction(spec, (2, 3), rng.normal(size=(4, 5)))
    f = forward_diff(u, 1)
    b = backward_diff(u, 1)
    for k in [(3, 4), (4, 6), (2, 3)]:
        assert b[(k[0], k[1] + 1)] == pytest.approx(f[k])


def test_norm_examples():
    spec = GridSpec(2)
    u = GridFunction.from_dict(spec, {(1, 1): 2.0})
    assert lp_norm(u, 1) == 2.0
    assert lp_norm(u, np.inf) == 2.0
    u3 = GridFunction.from_dict(GridSpec(2, r=(3, 1)), {(1, 1): 2.0})
    assert lp_norm(u3, 1) == 6.0
    assert lp_norm(GridFunction.zeros(spec, (0, 0), (2, 2)), 2) == 0.0
    with pytest.raises(ValueError):
        lp_norm(u, 0.5)


def test_seminorm_single_knot_1d():
    u = GridFunction.from_dict(GridSpec(1, dim=1), {(1,): 1.0})
    assert sobolev_seminorm_sq(u) == pytest.approx(8.0)


def test_nonfinite_values_rejected():
    with pytest.raises(ValueError):
        GridFunction(GridSpec(2), (0, 0), np.array([[np.nan]]))


@settings(max_examples=60, deadline=None)
@given(
    st.integers(1, 3),
    st.lists(st.floats(-5, 5, allow_nan=False), min_size=1, max_size=12),
    st.floats(-4, 4, allow_nan=False),
    st.sampled_from([1.0, 2.0, 3.0, np.inf]),
)
def test_norm_homogeneity_and_triangle(r1, vals, c, p):
    spec = GridSpec(3, dim=1, r=(r1,))
    u = GridFunction(spec, (0,), np.array(vals))
    v = GridFunction(spec, (0,), np.array(vals[::-1]))
    assert lp_norm(u * c, p) == pytest.approx(abs(c) * lp_norm(u, p), rel=1e-12, abs=1e-12)
    assert lp_norm(u + v, p) <= lp_norm(u, p) + lp_norm(v, p) + 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 1), st.integers(1, 3), st.integers(-3, 3))
def test_affine_difference_exact(axis, r, off):
    spec = GridSpec(3)
    a = np.array([0.7, -1.3])
    u = GridFunction.sample(spec, lambda x: x @ a + 0.25, (off, off), (off + 10, off + 10))
    g = forward_diff(u, axis, r)
    # knots whose difference stencil lies inside the sampled block
    for k in range(off, off + 10 - r + 1):
        idx = (k, off + 5) if axis == 0 else (off + 5, k)
        assert g[idx] == pytest.approx(a[axis])
