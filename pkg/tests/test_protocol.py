import math
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qcat.amplify import eta_sequence, sigma_state
from qcat.protocol import (
    BudgetError,
    InfeasibleTarget,
    extract_seed,
    plan_budget,
    predicted_error,
    prepare_state,
    quasi_prepare,
    seed_eta_out,
    seed_extraction_unitary,
)
from qcat.qcore import DensityMatrix, QcatError, SystemLayout, check_energy_conserving_unitary
from qcat.reports import Budget
from qcat.spectra import coherence_support, reachable_pairs
from qcat.synth import overlap_exact

from oracles import overlap_sum, random_state


def test_plan_budget_half():
    b = plan_budget(0.5, 2)
    assert b.predicted_error <= 0.5
    assert (b.K, b.L) == (128, 4)


def test_plan_budget_vacuous():
    b = plan_budget(1.0, 2)
    assert (b.K, b.L) == (0, 1)


def test_plan_budget_five_percent():
    b = plan_budget(0.05, 2)
    assert overlap_sum(b.L, 1) >= 0.95
    assert b.eta >= 0.99
    assert b.predicted_error <= 0.05
    assert (b.K, b.L) == (256, 32)


def test_plan_budget_error_model_and_determinism():
    b = plan_budget(0.2, 3)
    eta = eta_sequence(seed_eta_out(), b.K)[-1]
    expect = min(1.0, 2 * (1 - overlap_sum(b.L, 1)) + 2 * b.L * (1 - eta) / 2)
    assert b.predicted_error == pytest.approx(expect, abs=1e-12)
    assert plan_budget(0.2, 3) == b
    assert predicted_error(0.5, 4, 1) == 0.0


def test_plan_budget_errors():
    with pytest.raises(BudgetError):
        plan_budget(0.0, 2)
    with pytest.raises(BudgetError):
        plan_budget(0.001, 2)


def test_incoherent_target_is_free():
    tgt = DensityMatrix.basis(SystemLayout.single("S", [0, 1, 2]), 0)
    rep = prepare_state(tgt, 0.01)
    assert rep.achieved_distance == 0
    assert rep.ledger.n_catalysts == 0


def test_prepare_plus_state():
    rep = prepare_state(sigma_state(1.0), 0.05)
    assert rep.achieved_distance <= 0.05
    assert rep.ledger.max_residual < 1e-9
    assert rep.decoupling_residual <= 1e-9
    assert rep.passed
    assert len(rep.mixture) == 1


@pytest.mark.slow
def test_prepare_random_qutrit():
    rng = np.random.default_rng(5)
    tgt = DensityMatrix(SystemLayout.single("S", [0, 1, 2]), random_state(3, rng))
    rep = prepare_state(tgt, 0.1)
    assert rep.achieved_distance <= 0.1
    assert len(rep.mixture) <= 3
    assert rep.ledger.max_residual < 1e-9
    assert rep.decoupling_residual <= 1e-9
    weights = [w for w, _ in rep.mixture]
    assert sum(weights) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.slow
def test_distance_decreases_as_budget_doubles():
    tgt = sigma_state(1.0)
    path = [(16 * 2 ** k, 2 ** k) for k in range(7)]
    dist = [prepare_state(tgt, 1.0, budget=Budget(0.0, K, L, 0.0, 1.0)).achieved_distance for K, L in path]
    for a, b in zip(dist, dist[1:]):
        assert b <= a + 1e-6
    assert dist[-1] < 0.005


def test_prepare_rejects_bad_epsilon():
    with pytest.raises(BudgetError):
        prepare_state(sigma_state(1.0), 0.0)


def test_extraction_unitary_energy_conserving():
    lay = SystemLayout.single("S", [0, 1, 3]) + SystemLayout.qubit("R", 3)
    assert check_energy_conserving_unitary(seed_extraction_unitary(3, 0, 2), lay)


def test_extract_seed_qubit():
    rho = sigma_state(0.5)
    (seed,) = extract_seed(rho, coherence_support(rho))
    assert seed.data[0, 1].real == pytest.approx(0.25 / math.sqrt(2), abs=1e-14)
    assert seed.data[0, 1] == pytest.approx(rho.data[0, 1] / math.sqrt(2), abs=1e-14)


def test_extract_seed_qutrit_sequence():
    lay = SystemLayout.single("S", [0, 1, 2])
    arr = np.array([[0.3, 0.2, 0.1j], [0.2, 0.4, 0.15], [-0.1j, 0.15, 0.3]])
    rho = DensityMatrix(lay, arr)
    s01, s12 = extract_seed(rho, [(0, 1), (1, 2)])
    assert s01.data[0, 1] == pytest.approx(arr[0, 1] / math.sqrt(2), abs=1e-14)
    # the first unitary scales the (1,2) element by -1/sqrt(2) before the second extraction
    assert s12.data[0, 1] == pytest.approx(-arr[1, 2] / 2, abs=1e-14)
    assert abs(s12.data[0, 1]) > 0
    assert s12.layout.subsystems[0].energies == (F(0), F(1))


def test_extract_seed_needs_support():
    rho = DensityMatrix(SystemLayout.qubit("S"), np.diag([0.4, 0.6]))
    with pytest.raises(QcatError):
        extract_seed(rho, coherence_support(rho))


def test_quasi_prepare_qutrit_from_sigma():
    tgt = DensityMatrix(SystemLayout.single("T", [0, 1, 2]), np.full((3, 3), 1 / 3))
    rep = quasi_prepare(sigma_state(0.5), tgt, 0.1)
    assert rep.kind == "quasi-correlated"
    assert rep.achieved_distance <= 0.1
    assert rep.details["witnesses"] == {"0->0": [0], "0->1": [1], "0->2": [2]}
    assert rep.ledger.passed


def test_quasi_prepare_diagonal_input():
    tgt = DensityMatrix(SystemLayout.single("T", [0, 1, 2]), np.full((3, 3), 1 / 3))
    rho = DensityMatrix(SystemLayout.qubit("S"), np.eye(2) / 2)
    with pytest.raises(InfeasibleTarget):
        quasi_prepare(rho, tgt, 0.1)


def test_quasi_prepare_names_offending_pair():
    tgt = DensityMatrix(SystemLayout.single("T", [0, F(1, 2), 1]), np.full((3, 3), 1 / 3))
    with pytest.raises(InfeasibleTarget, match=r"\(0, 1\).*1/2"):
        quasi_prepare(sigma_state(0.5), tgt, 0.1)


ENERGY_CHOICES = [F(0), F(1, 2), F(1), F(3, 2), F(2), F(2, 3), F(3)]
GAP_CHOICES = [F(1), F(1, 2), F(2, 3)]
PAIRS3 = [(0, 1), (0, 2), (1, 2)]


@settings(max_examples=25, deadline=None)
@given(
    st.sampled_from(GAP_CHOICES),
    st.lists(st.sampled_from(ENERGY_CHOICES), min_size=3, max_size=3, unique=True),
    st.lists(st.sampled_from(PAIRS3), min_size=1, max_size=3, unique=True),
)
def test_quasi_refuses_exactly_when_lattice_refuses(gap, energies, pairs):
    rho = sigma_state(0.6, gap=gap)
    arr = np.eye(3) / 3
    for i, j in pairs:
        arr[i, j] = arr[j, i] = 0.1
    tgt = DensityMatrix(SystemLayout.single("T", energies), arr)
    reach = reachable_pairs(coherence_support(rho), [F(0), gap], energies)
    feasible = all(reach.contains(i, j) for i, j in pairs)
    if feasible:
        rep = quasi_prepare(rho, tgt, 0.3)
        assert rep.achieved_distance <= 0.3
    else:
        with pytest.raises(InfeasibleTarget):
            quasi_prepare(rho, tgt, 0.3)


def test_overlap_used_by_budget_matches_oracle():
    for L in (1, 4, 32):
        assert overlap_exact(L, 1) == pytest.approx(overlap_sum(L, 1), abs=1e-14)
