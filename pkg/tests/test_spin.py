import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import binom

from macroqubit._linalg import commutator
from macroqubit.spin import (
    as_density,
    basis_state,
    build_spin_operators,
    coherent_state,
    coherent_state_along,
    direction,
    expectation,
    fluctuation_report,
    maximally_mixed,
    mean_spin,
    project_window,
    validate_j,
    window_weight,
)


def test_spin_half_is_pauli_over_two():
    ops = build_spin_operators(0.5)
    np.testing.assert_allclose(ops.J3, np.diag([0.5, -0.5]))
    np.testing.assert_allclose(ops.J1, [[0, 0.5], [0.5, 0]])
    np.testing.assert_allclose(ops.J2, [[0, -0.5j], [0.5j, 0]])


def test_spin_one_ladder_coefficient():
    ops = build_spin_operators(1)
    np.testing.assert_allclose(ops.J3, np.diag([1, 0, -1]))
    J_plus = ops.J1 + 1j * ops.J2
    # <1,1|J+|1,0>, index 0 is m=j
    assert J_plus[0, 1] == pytest.approx(math.sqrt(2))


@pytest.mark.parametrize("j", [0.5, 1, 1.5, 7, 25.5])
def test_commutators_and_casimir(j):
    ops = build_spin_operators(j)
    J1, J2, J3 = ops.vector
    for a, b, c in ((J1, J2, J3), (J2, J3, J1), (J3, J1, J2)):
        assert np.max(np.abs(commutator(a, b) - 1j * c)) < 1e-10
    cas = J1 @ J1 + J2 @ J2 + J3 @ J3
    assert np.max(np.abs(cas - j * (j + 1) * np.eye(ops.dim))) < 1e-10


@pytest.mark.parametrize("bad", [0, -1, 0.3, 1.25, float("nan")])
def test_invalid_j_rejected(bad):
    with pytest.raises(ValueError):
        validate_j(bad)


def test_operators_are_read_only():
    ops = build_spin_operators(2)
    with pytest.raises(ValueError):
        ops.J1[0, 0] = 1


def test_coherent_state_poles():
    j = 7
    np.testing.assert_allclose(np.abs(coherent_state(j, 0, 0)), np.abs(basis_state(j, j)), atol=1e-12)
    np.testing.assert_allclose(np.abs(coherent_state(j, math.pi, 0)), np.abs(basis_state(j, -j)), atol=1e-12)
    assert expectation(coherent_state(j, 0, 0), build_spin_operators(j).J3) == pytest.approx(j)


def test_equatorial_coherent_state_moments():
    j = 10
    ops = build_spin_operators(j)
    psi = coherent_state(j, math.pi / 2, 0)
    assert expectation(psi, ops.J1) == pytest.approx(10)
    v1, v2, v3 = fluctuation_report(psi, ops)
    assert v2 == pytest.approx(5)
    assert v3 == pytest.approx(5)
    assert abs(v1) < 1e-9


def test_expectation_oracles():
    j = 10
    ops = build_spin_operators(j)
    assert expectation(maximally_mixed(j), ops.J3) == pytest.approx(0, abs=1e-14)
    assert expectation(basis_state(j, 3), ops.J3) == pytest.approx(3)
    assert expectation(coherent_state(j, math.pi / 4, 0), ops.J3) == pytest.approx(10 * math.cos(math.pi / 4))


def test_expectation_errors():
    ops = build_spin_operators(1)
    with pytest.raises(ValueError):
        expectation(basis_state(2, 0), ops.J3)
    with pytest.raises(ValueError):
        expectation(coherent_state(1, 1.0, 0.3), 1j * ops.J1 @ ops.J3 - 1j * ops.J3 @ ops.J1 + 1j * ops.J3)


def test_fluctuation_oracles():
    j = 4
    assert fluctuation_report(basis_state(j, j)) == pytest.approx((j / 2, j / 2, 0))
    assert fluctuation_report(maximally_mixed(1))[2] == pytest.approx(2 / 3)
    cat = (basis_state(5, 5) + basis_state(5, -5)) / math.sqrt(2)
    assert fluctuation_report(cat)[2] == pytest.approx(25)


def test_window_projection():
    j = 6
    psi = basis_state(j, j)
    proj = project_window(psi, j)
    np.testing.assert_allclose(proj.state, psi)
    assert proj.discarded_weight == pytest.approx(0, abs=1e-15)
    with pytest.raises(ValueError):
        project_window(psi, j - 1)


def test_window_weight_equatorial_large_j():
    # J3 populations of the equatorial state are binomial(2j, 1/2) in j - m
    j = 50
    psi = coherent_state(j, math.pi / 2, 0)
    m = np.arange(j, -j - 1, -1)
    pmf = binom.pmf(j - m, 2 * j, 0.5)
    for dm in (7, 10):
        proj = project_window(psi, dm)
        assert proj.discarded_weight == pytest.approx(pmf[np.abs(m) > dm].sum(), rel=1e-10)
        assert window_weight(psi, dm) == pytest.approx(1 - proj.discarded_weight)
    # Var(J3) = j/2 puts 13% outside |m| <= 7; |m| <= 10 keeps 96.5%
    assert project_window(psi, 7).flagged
    assert project_window(psi, 10).discarded_weight < 0.05


def test_window_projection_density_matrix():
    psi = coherent_state(10, 1.2, 0.3)
    proj_v = project_window(psi, 3)
    proj_d = project_window(as_density(psi), 3)
    np.testing.assert_allclose(proj_d.state, as_density(proj_v.state), atol=1e-12)
    assert np.trace(proj_d.state).real == pytest.approx(1)


@settings(max_examples=40, deadline=None)
@given(
    twice_j=st.integers(1, 60),
    theta=st.floats(0, math.pi),
    phi=st.floats(-math.pi, math.pi),
)
def test_coherent_state_mean_and_transverse_variance(twice_j, theta, phi):
    j = twice_j / 2
    ops = build_spin_operators(j)
    psi = coherent_state(j, theta, phi)
    n = direction(theta, phi)
    np.testing.assert_allclose(mean_spin(psi, ops), j * n, atol=1e-9 * max(1, j))
    # variance along n is zero; total variance is j
    assert sum(fluctuation_report(psi, ops)) == pytest.approx(j, rel=1e-9, abs=1e-9)


@settings(max_examples=25, deadline=None)
@given(n=st.lists(st.floats(-1, 1), min_size=3, max_size=3).filter(lambda v: np.linalg.norm(v) > 1e-3))
def test_coherent_state_along_direction(n):
    j = 3
    ops = build_spin_operators(j)
    n = np.array(n) / np.linalg.norm(n)
    np.testing.assert_allclose(mean_spin(coherent_state_along(j, n), ops) / j, n, atol=1e-9)
