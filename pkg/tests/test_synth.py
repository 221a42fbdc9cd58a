import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qcat.qcore import ChannelError, DensityMatrix, SystemLayout, check_covariance, trace_distance
from qcat.synth import (
    LadderSystem,
    binomial,
    binomial_amplitudes,
    binomial_resource,
    dicke_basis,
    dicke_block,
    dilation_channel,
    implement_channel,
    make_shift_table,
    overlap,
    overlap_exact,
    quasi_unitary_channel,
    shift_operator,
    stinespring_output,
    synthesis_dense,
    synthesis_fidelity,
    synthesis_output,
    single_ladder_shift_table,
    unitary_channel,
    window_shift,
)

from oracles import overlap_dense, overlap_sum

HADAMARD = np.array([[1, 1], [1, -1]]) / math.sqrt(2)


def test_binomial_resource_examples():
    r1 = binomial_resource(1)
    np.testing.assert_allclose(r1.data, np.full((2, 2), 0.5), atol=1e-15)
    np.testing.assert_allclose(binomial_amplitudes(2), [0.5, math.sqrt(2) / 2, 0.5], atol=1e-15)
    for L in (1, 7, 30, 64):
        assert binomial(L).norm_error < 1e-12
    padded = binomial_resource(3, gap="1/2", M=2)
    assert padded.dim == 8
    assert padded.layout.subsystems[0].energies[0] == -1


def test_binomial_matches_product_state_in_dicke_sector():
    L = 5
    plus = np.full(2, 1 / math.sqrt(2))
    prod = plus
    for _ in range(L - 1):
        prod = np.kron(prod, plus)
    np.testing.assert_allclose(dicke_basis(L).T @ prod, binomial_amplitudes(L), atol=1e-14)


@pytest.mark.parametrize("eta,L", [(0.3, 3), (0.8, 4), (0.0, 2), (1.0, 5)])
def test_dicke_block_matches_projection(eta, L):
    s = np.array([[0.5, eta / 2], [eta / 2, 0.5]])
    full = s
    for _ in range(L - 1):
        full = np.kron(full, s)
    V = dicke_basis(L)
    np.testing.assert_allclose(dicke_block(eta, L), V.T @ full @ V, atol=1e-13)


def test_shift_operator_examples():
    L, M = 3, 2
    np.testing.assert_array_equal(shift_operator(L, 0, M), LadderSystem(L, M, 1).projector())
    D = shift_operator(1, 1, 1)
    lad = LadderSystem(1, 1, 1)
    e0 = np.zeros(lad.dim)
    e0[lad.index(0)] = 1
    e1 = np.zeros(lad.dim)
    e1[lad.index(1)] = 1
    np.testing.assert_array_equal(D @ e0, np.eye(lad.dim)[lad.index(-1)])
    np.testing.assert_array_equal(D @ e1, e0)
    with pytest.raises(ValueError):
        shift_operator(3, 3, 2)


@pytest.mark.parametrize("L,m", [(L, m) for L in (1, 2, 5, 8) for m in range(-3, 4) if abs(m) <= 3])
def test_shift_isometry_on_physical_levels(L, m):
    M = 3
    D = shift_operator(L, m, M)
    np.testing.assert_array_equal(D.T @ D, LadderSystem(L, M, 1).projector())


def test_overlap_examples():
    assert overlap(1, 1).exact_value == pytest.approx(0.5, abs=1e-15)
    assert overlap(2, 1).exact_value == pytest.approx(math.sqrt(2) / 2, abs=1e-15)
    assert overlap(8, 1).exact_value == pytest.approx(0.937523, abs=1e-6)
    assert overlap(8, 1).exact_value == pytest.approx(overlap_sum(8, 1), abs=1e-14)
    for L in (1, 5, 20):
        assert overlap(L, 0).exact_value == 1.0
    assert overlap(3, 5).exact_value == 0.0


def test_overlap_two_routes_agree():
    for L in range(1, 21):
        for m in range(-4, 5):
            assert overlap_exact(L, m) == pytest.approx(overlap_dense(L, m), abs=1e-12)


def test_overlap_bounds_even_and_odd():
    for L in range(1, 65):
        rec = overlap(L, 1)
        assert rec.exact_value >= rec.lower_bound
        assert rec.exact_value <= 1
        if L % 2 == 0:
            assert rec.lower_bound == pytest.approx(max(0, 1 - (2 / math.sqrt(2 * math.pi)) / math.sqrt(L)))
            assert rec.exact_value >= 1 - math.comb(L, L // 2) / 2 ** L - 1e-15
    assert overlap(400, 1).exact_value > 0.995


def test_overlap_bound_for_larger_shift():
    for L in range(2, 65, 2):
        for m in (2, 3):
            rec = overlap(L, m)
            assert rec.exact_value >= rec.lower_bound


def test_single_ladder_shift_table_gaps():
    lay = SystemLayout.single("S", [0, "1/2", 2])
    t = single_ladder_shift_table(1, lay)
    assert t.gaps == (-0.5, 1.5)
    assert t.shifts == {0: (1, 0), 1: (0, 0), 2: (0, 1)}


def test_make_shift_table_rejects_bad_resonance():
    lay = SystemLayout.single("S", [0, 1, "3/2"])
    with pytest.raises(ChannelError, match="resonance"):
        make_shift_table(0, {1: (2,), 2: (2,)}, ["1/2"], lay)


def test_unitary_channel_identity():
    lay = SystemLayout.qubit("S")
    ch = unitary_channel(np.eye(2), 0, 4, lay)
    t = single_ladder_shift_table(0, lay)
    amp = binomial_amplitudes(4)
    _, red, p0 = synthesis_dense(ch, t, [np.outer(amp, amp)], 4)
    np.testing.assert_allclose(red, np.diag([1, 0]), atol=1e-14)
    assert p0 == pytest.approx(1, abs=1e-12)


def test_balanced_rotation_fidelity():
    lay = SystemLayout.qubit("S")
    c = overlap_sum(8, 1)
    f_dense = synthesis_fidelity(HADAMARD, 0, 8, lay, dense=True)
    f_formula = synthesis_fidelity(HADAMARD, 0, 8, lay, dense=False)
    assert f_dense == pytest.approx(0.5 + c / 2, abs=1e-12)
    assert f_formula == pytest.approx(f_dense, abs=1e-12)
    assert f_dense == pytest.approx(0.968762, abs=1e-6)
    assert synthesis_fidelity(HADAMARD, 0, 64, lay, dense=False) >= 0.95


def test_unitary_channel_covariant_and_clicks():
    rng = np.random.default_rng(5)
    lay = SystemLayout.single("S", [0, 1, "5/2"])
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3)))
    ch = unitary_channel(q, 1, 2, lay)
    assert ch.completeness_error < 1e-10
    assert check_covariance(ch, trials=5).passed
    t = single_ladder_shift_table(1, lay)
    amp = binomial_amplitudes(2)
    blocks = [np.outer(amp, amp)] * 2
    _, red, p0 = synthesis_dense(ch, t, blocks, 2)
    assert p0 == pytest.approx(1, abs=1e-10)
    np.testing.assert_allclose(red, synthesis_output(q[:, 1], t, blocks), atol=1e-12)


def test_unitary_channel_rejects_nonunitary():
    with pytest.raises(ChannelError):
        unitary_channel(np.diag([1.0, 2.0]), 0, 2, SystemLayout.qubit("S"))


def test_quasi_channel_single_pair_reduces_to_unitary_channel():
    lay = SystemLayout.qubit("S")
    ch_a = quasi_unitary_channel(HADAMARD, 0, {1: (1,)}, [1], 4, lay)
    ch_b = unitary_channel(HADAMARD, 0, 4, lay)
    for a, b in zip(ch_a.kraus_ops, ch_b.kraus_ops):
        np.testing.assert_allclose(a, b)


def test_quasi_channel_three_levels_from_half_gap():
    lay = SystemLayout.single("S", [0, 1, "3/2"])
    psi = np.full(3, 1 / math.sqrt(3))
    V, _ = np.linalg.qr(np.column_stack([psi, np.eye(3)[:, 1:]]))
    V = V * np.sign(V[0, 0] / psi[0])
    L = 6
    ch = quasi_unitary_channel(V, 0, {1: (2,), 2: (3,)}, ["1/2"], L, lay)
    assert check_covariance(ch, trials=4).passed
    t = make_shift_table(0, {1: (2,), 2: (3,)}, ["1/2"], lay)
    amp = binomial_amplitudes(L)
    _, red, p0 = synthesis_dense(ch, t, [np.outer(amp, amp)], L)
    psi = V[:, 0]
    fid = float(np.real(psi.conj() @ red @ psi))
    m = {0: 0, 1: 2, 2: 3}
    expected = sum(abs(psi[k]) ** 2 * abs(psi[q]) ** 2 * overlap_sum(L, m[k] - m[q]) for k in m for q in m)
    assert fid == pytest.approx(expected, abs=1e-12)
    assert p0 == pytest.approx(1, abs=1e-10)


def test_implement_channel_identity():
    rho = DensityMatrix(SystemLayout.qubit("S"), np.array([[0.6, 0.3], [0.3, 0.4]]))
    out = implement_channel(np.eye(4), rho, SystemLayout.qubit("E"), 4)
    np.testing.assert_allclose(out.data, rho.data, atol=1e-14)


def test_implement_channel_dephasing():
    rho = DensityMatrix(SystemLayout.qubit("S"), np.array([[0.6, 0.3], [0.3, 0.4]]))
    env = SystemLayout.qubit("E")
    cnot = np.eye(4)[[0, 1, 3, 2]]
    out = implement_channel(cnot, rho, env, 16)
    exact = stinespring_output(cnot, rho, env)
    assert trace_distance(out, exact) <= 1 - overlap_sum(16, 1) + 1e-9


def test_implement_channel_energy_conserving_damping():
    # the windowed dilation reproduces an energy-conserving dilation at every L
    rho = DensityMatrix(SystemLayout.qubit("S"), np.array([[0.6, 0.3], [0.3, 0.4]]))
    env = SystemLayout.qubit("E")
    g = 0.3
    U = np.eye(4)
    U[1, 1] = U[2, 2] = math.sqrt(1 - g)
    U[1, 2], U[2, 1] = math.sqrt(g), -math.sqrt(g)
    dists = [trace_distance(implement_channel(U, rho, env, L), stinespring_output(U, rho, env))
             for L in (4, 8, 16, 32)]
    assert max(dists) < 1e-12


def test_implement_channel_generic_dilation_converges():
    rho = DensityMatrix(SystemLayout.qubit("S"), np.array([[0.6, 0.3], [0.3, 0.4]]))
    env = SystemLayout.qubit("E")
    rng = np.random.default_rng(3)
    q, _ = np.linalg.qr(rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4)))
    dists = [trace_distance(implement_channel(q, rho, env, L), stinespring_output(q, rho, env))
             for L in (4, 8, 16, 32)]
    assert all(b < a for a, b in zip(dists, dists[1:]))
    assert dists[-1] <= 1 - overlap_sum(32, 1)


def test_dilation_channel_complete_and_covariant():
    lay = SystemLayout.single("SE", [0, 1, "1/2", "3/2"])
    rng = np.random.default_rng(8)
    q, _ = np.linalg.qr(rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4)))
    ch = dilation_channel(q, lay, 2)
    assert ch.completeness_error < 1e-10
    assert check_covariance(ch, trials=3).passed


def test_window_shift_shares_source_projector():
    Ds = [window_shift(5, m, 1, 0, 1) for m in (0, 1)]
    np.testing.assert_array_equal(Ds[0].T @ Ds[0], Ds[1].T @ Ds[1])
    with pytest.raises(ValueError):
        window_shift(5, 2, 1, 0, 1)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 64), st.integers(-4, 4))
def test_overlap_record_invariants(L, m):
    rec = overlap(L, m)
    assert 0 <= rec.exact_value <= 1 + 1e-12
    assert rec.exact_value >= rec.lower_bound
    assert rec.exact_value == pytest.approx(overlap_sum(L, m), abs=1e-12)
