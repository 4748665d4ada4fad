import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from monotone_elliptic.coeff import (
    CoefficientField,
    Region,
    admissibility,
    auxiliary_tensor,
    check_aux_posdef,
    constant_field,
    example71,
    example72,
    identity_field,
    omega,
)


def test_example_fields_evaluate():
    f71 = example71()
    a = f71.evaluate(np.array([[0.25, 0.5], [0.75, 0.5]]))
    np.testing.assert_array_equal(a[0], np.eye(2))
    np.testing.assert_array_equal(a[1], np.diag([10.0, 1.0]))
    f72 = example72()
    a = f72.evaluate(np.array([[0.5, 0.5], [0.1, 0.5]]))
    np.testing.assert_array_equal(a[0], [[10.0, 2.0], [2.0, 1.0]])
    np.testing.assert_array_equal(a[1], np.diag([10.0, 1.0]))


def test_auxiliary_tensor():
    np.testing.assert_array_equal(auxiliary_tensor([[10, 2], [2, 1]]), [[10, -2], [-2, 1]])
    d = np.diag([3.0, 4.0])
    np.testing.assert_array_equal(auxiliary_tensor(d), d)
    a = auxiliary_tensor([[1, 0.9], [0.9, 1]])
    assert np.linalg.det(a) == pytest.approx(0.19)
    assert np.all(np.linalg.eigvalsh(a) > 0)


def test_aux_posdef_checks():
    assert all(ok for ok, _ in check_aux_posdef(example72()).values())
    a3 = np.full((3, 3), 0.9) + 0.1 * np.eye(3)
    res = check_aux_posdef(constant_field(a3))
    ok, witness = res["all"]
    assert not ok and witness is not None
    # the witness vector (1,1,1) gives a negative form
    one = np.ones(3)
    assert one @ auxiliary_tensor(a3) @ one < 0
    assert all(ok for ok, _ in check_aux_posdef(constant_field(np.diag([1.0, 2.0, 3.0]))).values())


def test_omega_examples():
    assert omega(example72(stride=(3, 1))) == pytest.approx(1 / 3)
    rep = admissibility(example72(stride=(1, 3)))
    assert not rep.admissible
    assert rep.violations[0][0] == "D0" and rep.violations[0][1] == 1
    assert omega(identity_field()) == pytest.approx(1.0)
    assert omega(constant_field(np.diag([2.0, 5.0]))) == pytest.approx(2.0)


def test_region_lookup_first_match():
    f = example72()
    assert f.locate(np.array([[0.25, 0.25]]))[0] == f.index_of("D0")
    assert f.locate(np.array([[0.2, 0.25]]))[0] == f.index_of("outer")


def test_missing_region_raises():
    r = Region("half", [((0.0, 0.0), (0.5, 1.0))], np.eye(2), (1, 1))
    f = CoefficientField(2, [r])
    with pytest.raises(ValueError):
        f.evaluate(np.array([[0.9, 0.5]]))


def test_with_strides_and_scaled():
    f = example72().with_strides({"D0": (2, 1)})
    assert f.regions[f.index_of("D0")].stride == (2, 1)
    g = example72().scaled(2.0)
    np.testing.assert_allclose(g.evaluate(np.array([[0.5, 0.5]]))[0], [[20, 4], [4, 2]])


def test_sign_labels():
    f = example72()
    assert f.sign(f.regions[f.index_of("D0")]) == "nonnegative"
    assert f.sign(f.regions[f.index_of("outer")]) == "zero"


def test_ellipticity_probe_detects_indefinite():
    rng = np.random.default_rng(3)
    assert example72().check_ellipticity(rng)
    bad = Region("bad", [((-np.inf, -np.inf), (np.inf, np.inf))], np.array([[1.0, 2.0], [2.0, 1.0]]), (1, 1))
    assert not CoefficientField(2, [bad], (0.5, 3.0)).check_ellipticity(rng)


@settings(max_examples=80, deadline=None)
@given(
    st.floats(0.5, 10), st.floats(0.5, 10), st.floats(-0.99, 0.99),
    st.integers(1, 4), st.integers(1, 4),
)
def test_omega_formula(a11, a22, t, r1, r2):
    a12 = t * np.sqrt(a11 * a22)
    f = constant_field(np.array([[a11, a12], [a12, a22]]), (r1, r2))
    expected = min(a11 / r1 - abs(a12) / r2, a22 / r2 - abs(a12) / r1)
    assert omega(f) == pytest.approx(expected)
    # in 2D a positive margin forces a positive definite auxiliary tensor
    if expected > 0:
        assert np.all(np.linalg.eigvalsh(auxiliary_tensor(f.regions[0].tensor)) > 0)
