import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dipspin import oracle as O
from dipspin.geometry import MAGIC_ANGLE

# Pauli matrices give an independent construction from spin operators
SX = np.array([[0, 1], [1, 0]]) / 2
SY = np.array([[0, -1j], [1j, 0]]) / 2
SZ = np.array([[1, 0], [0, -1]]) / 2
I2 = np.eye(2)


def from_spin_operators(theta, w):
    s1 = [np.kron(s, I2) for s in (SX, SY, SZ)]
    s2 = [np.kron(I2, s) for s in (SX, SY, SZ)]
    r = np.array([np.sin(theta), 0.0, np.cos(theta)])
    dot = sum(a @ b for a, b in zip(s1, s2))
    r1 = sum(r[i] * s1[i] for i in range(3))
    r2 = sum(r[i] * s2[i] for i in range(3))
    return -(s1[2] + s2[2]) + 2 * w * (dot - 3 * r1 @ r2)


thetas = st.floats(0, np.pi)
omegas = st.floats(1e-4, 0.5)


@given(thetas, omegas)
def test_matches_spin_operator_construction(theta, w):
    h = O.build_hamiltonian(theta, w).matrix
    ref = from_spin_operators(theta, w)
    assert np.max(np.abs(ref.imag)) < 1e-15
    np.testing.assert_allclose(h, ref.real, atol=1e-14)


@given(thetas, omegas)
def test_symmetric_and_dipole_traceless(theta, w):
    h = O.build_hamiltonian(theta, w)
    np.testing.assert_array_equal(h.matrix, h.matrix.T)
    assert abs(np.trace(h.dipolar)) < 1e-15


@given(thetas, omegas)
def test_eigenvalue_sum_equals_trace(theta, w):
    h = O.build_hamiltonian(theta, w)
    assert abs(O.eigenvalues(h).sum() - np.trace(h.matrix)) < 1e-12


def test_rejects_nonpositive_omega():
    with pytest.raises(ValueError):
        O.build_hamiltonian(0.0, 0.0)


@pytest.mark.parametrize("w", [0.1, 0.01, 0.001])
@pytest.mark.parametrize("theta", [0.0, np.pi / 2])
def test_closed_form_levels(theta, w):
    vals = O.eigenvalues(O.build_hamiltonian(theta, w))
    np.testing.assert_allclose(vals, O.reference_eigenvalues(theta, w), atol=1e-12)


def test_theta_zero_levels_listed_values():
    w = 0.01
    vals = O.eigenvalues(O.build_hamiltonian(0.0, w))
    np.testing.assert_allclose(sorted(vals), sorted([0, 1 - w, 2 * w, -(1 + w)]), atol=1e-12)


def test_quoted_axial_matrices_differ_only_in_zeeman_ordering():
    for theta in (0.0, np.pi / 2):
        cmp = O.compare_with_reference(theta, 0.01)
        # same level set ...
        assert cmp["quoted_matrix_eig_diff"] < 1e-12
        assert cmp["eigenvalue_max_abs_diff"] < 1e-12
        # ... but the |uu>, |dd> diagonal entries are swapped, a difference of 2
        assert cmp["matrix_max_abs_diff"] == pytest.approx(2.0)
        diff = O.build_hamiltonian(theta, 0.01).matrix - O.reference_matrix(theta, 0.01)
        np.testing.assert_allclose(np.abs(np.diag(diff)), [2, 0, 0, 2], atol=1e-12)
        np.testing.assert_allclose(diff - np.diag(np.diag(diff)), 0, atol=1e-12)
    with pytest.raises(ValueError):
        O.reference_matrix(0.3, 0.01)


@pytest.mark.parametrize("w", [0.1, 0.01, 0.001])
def test_magic_angle_levels(w):
    vals = O.eigenvalues(O.build_hamiltonian(MAGIC_ANGLE, w))
    assert np.max(np.abs(vals - O.reference_eigenvalues(MAGIC_ANGLE, w))) < 2 * w**2


def test_weak_coupling_expansion_is_second_order():
    errs = []
    for w in (0.1, 0.01, 0.001):
        vals = O.eigenvalues(O.build_hamiltonian(np.pi / 2, w))
        errs.append(np.max(np.abs(vals - O.weak_coupling_eigenvalues(w))))
    # each decade in w shrinks the error by ~100
    assert 80 < errs[0] / errs[1] < 120
    assert 80 < errs[1] / errs[2] < 120
    # the leading correction is 9 w^2 / 8
    assert errs[1] < 2 * 0.01**2


def test_transition_frequencies_are_single_quantum():
    freqs = O.transition_frequencies(O.build_hamiltonian(0.0, 0.01))
    near = sorted(f for f, _, _ in freqs if abs(f - 1) < 0.1)
    # levels 1 - w, 2w, 0, -(1 + w): four gaps that change total S_z by one
    np.testing.assert_allclose(near, [0.97, 0.99, 1.01, 1.03], atol=1e-12)


def test_splitting_examples():
    for w in (0.01, 0.001):
        s0 = O.predicted_splitting(0.0, w)
        s90 = O.predicted_splitting(np.pi / 2, w)
        assert s0 == pytest.approx(2 * w, rel=1e-9)
        assert s90 / s0 == pytest.approx(0.5, rel=1e-3)
        assert O.predicted_splitting(MAGIC_ANGLE, w) < w**2
    ratio = O.predicted_splitting(0.0, 0.01) / O.predicted_splitting(0.0, 0.001)
    assert ratio == pytest.approx(10.0, rel=1e-9)
