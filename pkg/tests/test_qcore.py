import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qcat.amplify import amplification_channel, gamma_array, gamma_state, sigma_array, sigma_state
from qcat.qcore import (
    ChannelError,
    DensityMatrix,
    KrausChannel,
    LayoutError,
    StateError,
    SystemLayout,
    apply_channel,
    check_covariance,
    check_energy_conserving_unitary,
    commutator_norm,
    energy,
    format_energy,
    partial_trace,
    permutation_unitary,
    product_residual,
    random_density_matrix,
    tensor,
    trace_distance,
)

from oracles import eta_next, trace_distance_svd


def qubit(label="A"):
    return SystemLayout.qubit(label)


def test_energy_parsing_lowest_terms():
    assert energy("6/4") == Fraction(3, 2)
    assert energy(2) == Fraction(2)
    assert energy(0.5) == Fraction(1, 2)
    assert format_energy(Fraction(-3, 6)) == "-1/2"
    with pytest.raises(ValueError):
        energy("1/0")


def test_layout_rejects_duplicates_and_empty():
    with pytest.raises(LayoutError):
        SystemLayout.qubit("A") + SystemLayout.qubit("A")
    with pytest.raises(LayoutError):
        SystemLayout.single("A", [])


def test_layout_energies_additive():
    lay = SystemLayout.single("A", [0, 1]) + SystemLayout.single("B", [0, "1/2", 2])
    assert lay.dim == 6
    np.testing.assert_allclose(lay.energies, [0, 0.5, 2, 1, 1.5, 3])


def test_density_matrix_trace_error_mentions_trace():
    with pytest.raises(StateError, match="trace"):
        DensityMatrix(qubit(), np.diag([0.5, 0.4]))


def test_density_matrix_rejects_negative_and_nonhermitian():
    with pytest.raises(StateError):
        DensityMatrix(qubit(), np.diag([1.2, -0.2]))
    with pytest.raises(StateError):
        DensityMatrix(qubit(), np.array([[0.5, 0.3], [0.1, 0.5]]))


def test_tensor_maximally_mixed():
    a = DensityMatrix.maximally_mixed(qubit("A"))
    b = DensityMatrix.maximally_mixed(qubit("B"))
    out = tensor(a, b)
    np.testing.assert_allclose(out.data, np.eye(4) / 4)
    assert out.labels == ("A", "B")


def test_tensor_basis_states():
    out = tensor(DensityMatrix.basis(qubit("A"), 0), DensityMatrix.basis(qubit("B"), 1))
    expected = np.zeros((4, 4))
    expected[1, 1] = 1
    np.testing.assert_array_equal(out.data, expected)


def test_tensor_sigma_gamma_is_state():
    out = tensor(sigma_state(0.5, label="S"), gamma_state(0.5, label="C"))
    assert abs(np.trace(out.data) - 1) < 1e-12
    assert np.linalg.eigvalsh(out.data).min() > -1e-12
    np.testing.assert_allclose(out.data, np.kron(sigma_array(0.5), gamma_array(0.5)))


def test_tensor_label_collision():
    with pytest.raises(LayoutError):
        tensor(DensityMatrix.basis(qubit("A"), 0), DensityMatrix.basis(qubit("A"), 0))


def test_partial_trace_bell_state():
    lay = qubit("A") + qubit("B")
    bell = DensityMatrix.pure(lay, np.array([1, 0, 0, 1]) / math.sqrt(2))
    np.testing.assert_allclose(partial_trace(bell, ["A"]).data, np.eye(2) / 2, atol=1e-15)


def test_partial_trace_keeps_relative_order():
    rng = np.random.default_rng(1)
    a = random_density_matrix(qubit("A"), rng)
    b = random_density_matrix(SystemLayout.single("B", [0, 1, 2]), rng)
    c = random_density_matrix(qubit("C"), rng)
    out = partial_trace(tensor(a, b, c), ["C", "A"])
    assert out.labels == ("A", "C")
    np.testing.assert_allclose(out.data, np.kron(a.data, c.data), atol=1e-14)


def test_partial_trace_unknown_label():
    with pytest.raises(LayoutError):
        partial_trace(DensityMatrix.basis(qubit("A"), 0), ["Z"])


def test_amplification_marginals():
    eta = 0.5
    out = apply_channel(amplification_channel(), tensor(sigma_state(eta, label="S"), gamma_state(eta, label="C")))
    np.testing.assert_allclose(partial_trace(out, ["C"]).data, gamma_array(eta), atol=1e-12)
    np.testing.assert_allclose(partial_trace(out, ["S"]).data, sigma_array(eta_next(eta)), atol=1e-12)


def test_trace_distance_examples():
    lay = qubit()
    r = DensityMatrix(lay, sigma_array(0.3))
    assert trace_distance(r, r) == 0
    assert trace_distance(DensityMatrix.basis(lay, 0), DensityMatrix.basis(lay, 1)) == pytest.approx(1, abs=1e-15)
    d = trace_distance(sigma_array(0.5), sigma_array(0.515625))
    assert d == pytest.approx(0.0078125, abs=1e-15)
    assert d == pytest.approx(trace_distance_svd(sigma_array(0.5), sigma_array(0.515625)), abs=1e-15)


def test_trace_distance_dimension_mismatch():
    with pytest.raises(ValueError):
        trace_distance(np.eye(2) / 2, np.eye(3) / 3)


def test_apply_channel_identity_and_dephasing():
    lay = qubit("S")
    rho = sigma_state(0.7)
    assert np.allclose(apply_channel(KrausChannel.identity(lay), rho).data, rho.data)
    deph = KrausChannel(lay, lay, (np.diag([1.0, 0.0]), np.diag([0.0, 1.0])))
    np.testing.assert_allclose(apply_channel(deph, rho).data, np.eye(2) / 2)


def test_channel_completeness_enforced():
    lay = qubit()
    with pytest.raises(ChannelError, match="completeness"):
        KrausChannel(lay, lay, (np.diag([1.0, 0.5]),))
    with pytest.raises(ChannelError):
        KrausChannel(lay, lay, (np.eye(3),))


def test_covariance_examples():
    lay = qubit()
    assert check_covariance(KrausChannel.identity(lay)).max_deviation == 0
    rep = check_covariance(amplification_channel(), tol=1e-10)
    assert rep.passed
    H = np.array([[1, 1], [1, -1]]) / math.sqrt(2)
    bad = check_covariance(KrausChannel.from_unitary(H, lay), times=(math.pi,))
    assert not bad.passed
    assert bad.passed == (bad.max_deviation <= bad.tolerance)


def test_energy_conserving_unitary_examples():
    lay = qubit()
    assert check_energy_conserving_unitary(np.eye(2), lay)
    lay2 = qubit("A") + qubit("B")
    swap = permutation_unitary(lay2, ["B", "A"])
    assert check_energy_conserving_unitary(swap, lay2)
    X = np.array([[0, 1], [1, 0]])
    assert not check_energy_conserving_unitary(X, lay)
    assert commutator_norm(X, SystemLayout.qubit("A", "3/2")) == pytest.approx(1.5)
    with pytest.raises(ChannelError):
        check_energy_conserving_unitary(np.diag([1, 2]), lay)


def test_product_residual():
    lay = qubit("A") + qubit("B")
    bell = DensityMatrix.pure(lay, np.array([1, 0, 0, 1]) / math.sqrt(2))
    assert product_residual(bell, ["A"]) == pytest.approx(0.75)
    prod = tensor(sigma_state(0.2, label="A"), sigma_state(0.9, label="B"))
    assert product_residual(prod, ["A"]) < 1e-15


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_partial_trace_inverts_tensor(seed):
    rng = np.random.default_rng(seed)
    a = random_density_matrix(SystemLayout.single("A", [0, 1, 3]), rng)
    b = random_density_matrix(qubit("B"), rng)
    np.testing.assert_allclose(partial_trace(tensor(a, b), ["A"]).data, a.data, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_trace_distance_metric_properties(seed):
    rng = np.random.default_rng(seed)
    lay = SystemLayout.single("A", [0, 1, 2])
    a, b, c = (random_density_matrix(lay, rng) for _ in range(3))
    assert trace_distance(a, c) <= trace_distance(a, b) + trace_distance(b, c) + 1e-10
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3)))
    ua, ub = q @ a.data @ q.conj().T, q @ b.data @ q.conj().T
    assert abs(trace_distance(ua, ub) - trace_distance(a, b)) < 1e-10
    assert 0 <= trace_distance(a, b) <= 1


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_channel_output_is_state(seed):
    rng = np.random.default_rng(seed)
    rho = random_density_matrix(qubit("S") + qubit("C"), rng)
    out = apply_channel(amplification_channel(), rho)
    assert abs(np.trace(out.data) - 1) < 1e-12
    assert np.linalg.eigvalsh(out.data).min() >= -1e-10
