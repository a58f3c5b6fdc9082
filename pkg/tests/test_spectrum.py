import numpy as np
import pytest
from hypothesis import given, strategies as st

from spdefem import (
    BoundaryCase,
    BoundaryConditions,
    FiniteElementModel,
    ValidationError,
    eigen_determinant,
    is_negative_definite,
    scan_nonnegative_spectrum,
)

coeff = st.floats(-5, 5, allow_nan=False).filter(lambda v: abs(v) > 1e-3)


@st.composite
def boundary_conditions(draw):
    sides = []
    for _ in range(2):
        if draw(st.booleans()) and draw(st.booleans()):
            sides += [draw(coeff), 0.0]
        else:
            sides += [draw(st.floats(-5, 5)), draw(coeff)]
    return BoundaryConditions(*sides)


@pytest.mark.parametrize("coeffs, expected", [
    ((1, 0, 1, 0), True),
    ((0, 1, 0, 1), False),
    ((1, 1, 1, 1), True),
    ((1, 0, 0, 1), True),
    ((-0.5, 1, -0.5, 1), False),
    ((-3, 1, -3, 1), False),
])
def test_negative_definite_examples(coeffs, expected):
    assert is_negative_definite(BoundaryConditions(*coeffs)) is expected


def test_boundary_of_set_a_is_excluded():
    # (xi0 + 1)(xi1 + 1) = 1 exactly: strict inequality fails, 0 is an eigenvalue
    bc = BoundaryConditions(1.0, 1.0, -0.5, 1.0)
    assert not is_negative_definite(bc)
    assert eigen_determinant(bc, 0.0) == 0.0


def test_degenerate_side_rejected():
    with pytest.raises(ValidationError):
        BoundaryConditions(0, 0, 1, 0)


def test_canonical_form():
    bc = BoundaryConditions(-1, -2, -3, 0)
    assert bc.as_tuple() == (1.0, 2.0, 3.0, 0.0)
    assert bc.case is BoundaryCase.DIRICHLET_RIGHT
    assert BoundaryConditions(0, -1, 0, -1) == BoundaryConditions.neumann()


def test_cases():
    assert BoundaryConditions.dirichlet().case is BoundaryCase.DIRICHLET_DIRICHLET
    assert BoundaryConditions(1, 0, 0, 1).case is BoundaryCase.DIRICHLET_LEFT
    assert BoundaryConditions.robin(2.0).case is BoundaryCase.ROBIN_ROBIN


def test_parse_roundtrip():
    bc = BoundaryConditions.parse("1, 0.5, 2, 1")
    assert BoundaryConditions.parse(str(bc)) == bc
    with pytest.raises(ValidationError):
        BoundaryConditions.parse("1,2,3")


@pytest.mark.parametrize("coeffs, lam, expected", [
    ((1, 0, 1, 0), 5.0, 1.0),
    ((0, 1, 0, 1), 0.0, 0.0),
    ((1, 1, 1, 1), 0.0, 3.0),
])
def test_eigen_determinant_examples(coeffs, lam, expected):
    assert eigen_determinant(BoundaryConditions(*coeffs), lam) == pytest.approx(expected, abs=1e-15)


def test_eigen_determinant_matches_closed_form():
    bc = BoundaryConditions(0.7, 1.3, -0.2, 0.4)
    lam = np.array([1e-3, 0.5, 3.0, 40.0])
    s = np.sqrt(lam)
    expected = 0.7 * -0.2 + (0.7 * 0.4 + -0.2 * 1.3) * s / np.tanh(s) + 1.3 * 0.4 * lam
    np.testing.assert_allclose(eigen_determinant(bc, lam), expected, rtol=1e-13)


def test_eigen_determinant_rejects_negative():
    with pytest.raises(ValidationError):
        eigen_determinant(BoundaryConditions.dirichlet(), -1.0)


@given(boundary_conditions())
def test_determinant_continuous_at_zero(bc):
    f0 = eigen_determinant(bc, 0.0)
    fe = eigen_determinant(bc, 1e-8)
    assert abs(fe - f0) <= 1e-6 * max(abs(f0), 1.0)


def test_small_lambda_series_matches_direct():
    bc = BoundaryConditions(1, 1, 1, 1)
    for lam in (2e-4, 1.5e-4, 1e-4 * (1 + 1e-12)):
        s = np.sqrt(lam)
        direct = 1 + 2 * s / np.tanh(s) + lam
        assert eigen_determinant(bc, lam) == pytest.approx(direct, rel=1e-12)
    below = 0.99e-4
    s = np.sqrt(below)
    assert eigen_determinant(bc, below) == pytest.approx(1 + 2 * s / np.tanh(s) + below, rel=1e-12)


def test_scan_examples():
    assert not scan_nonnegative_spectrum(BoundaryConditions.dirichlet(), 100).has_nonneg_eigenvalue
    neumann = scan_nonnegative_spectrum(BoundaryConditions.neumann(), 100)
    assert neumann.roots[0] == 0.0
    report = scan_nonnegative_spectrum(BoundaryConditions(-0.5, 1, -0.5, 1), 100)
    assert report.has_nonneg_eigenvalue
    for root in report.roots:
        assert abs(eigen_determinant(report.bc, root)) < 1e-9


def test_scan_root_is_eigenvalue():
    # lambda = k^2 with k tan-type equation; check u = cosh-type eigenfunction residual instead:
    # a root of f must make the 2x2 boundary system singular for u = A cosh(sx) + B sinh(sx).
    bc = BoundaryConditions(-3, 1, -3, 1)
    report = scan_nonnegative_spectrum(bc, 1e4)
    assert len(report.roots) == 2
    for lam in report.roots:
        s = np.sqrt(lam)
        a0, b0, a1, b1 = bc.as_tuple()
        system = np.array([
            [a0, -b0 * s],
            [a1 * np.cosh(s) + b1 * s * np.sinh(s), a1 * np.sinh(s) + b1 * s * np.cosh(s)],
        ])
        assert abs(np.linalg.det(system)) / np.abs(system).max() ** 2 < 1e-8


def test_scan_validation():
    with pytest.raises(ValidationError):
        scan_nonnegative_spectrum(BoundaryConditions.dirichlet(), 0.0)
    with pytest.raises(ValidationError):
        scan_nonnegative_spectrum(BoundaryConditions.dirichlet(), 10.0, n_points=1)


@given(boundary_conditions())
def test_set_a_agrees_with_scan(bc):
    assert scan_nonnegative_spectrum(bc, 1e4).has_nonneg_eigenvalue == (not is_negative_definite(bc))


@given(boundary_conditions(), st.booleans(), st.booleans())
def test_sign_flip_invariance(bc, left, right):
    a0, b0, a1, b1 = bc.as_tuple()
    s0, s1 = (-1 if left else 1), (-1 if right else 1)
    flipped = BoundaryConditions(s0 * a0, s0 * b0, s1 * a1, s1 * b1)
    assert flipped == bc
    assert is_negative_definite(flipped) == is_negative_definite(bc)


@given(boundary_conditions())
def test_consistent_with_stiffness_spectrum(bc):
    n = 64
    top = FiniteElementModel(bc, n).L.eigvalsh().max()
    if is_negative_definite(bc):
        assert top < 0
    else:
        assert top >= -10.0 / n
