import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qcat.amplify import gamma_state, run_chain, sigma_state
from qcat.catalytic import (
    RELATIVE_ENTROPY_COHERENCE,
    SKEW_INFORMATION,
    broadcast3,
    broadcast_catalyst,
    broadcast_delta_max,
    check_catalytic_monotonicity,
    convert_asymptotic,
    dephase,
    pad_state,
    relative_entropy_coherence,
    reuse_count,
    reuse_schedule,
    skew_information,
    validate_runs,
)
from qcat.qcore import (DensityMatrix, DimensionError, KrausChannel, QcatError, SystemLayout,
                        apply_channel, check_covariance, partial_trace, tensor)

from oracles import entropy, random_state, reuse_recursion, sigma, skew_eig


def _copies(n, d=2):
    return SystemLayout(tuple(SystemLayout.single(f"S{i + 1}", list(range(d))).subsystems[0] for i in range(n)))


def _power_channel(ops, n):
    out = [np.eye(1)]
    for _ in range(n):
        out = [np.kron(a, k) for a in out for k in ops]
    lay = _copies(n)
    return KrausChannel(lay, lay, tuple(out))


def _ptrace_keep(arr, dims, keep):
    n = len(dims)
    t = arr.reshape(dims + dims)
    for ax in sorted((i for i in range(n) if i != keep), reverse=True):
        t = np.trace(t, axis1=ax, axis2=ax + t.ndim // 2)
    return t


# -- convert ---------------------------------------------------------------

def test_convert_single_copy_exact():
    rho = sigma_state(0.4, label="S1")
    c = 0.75
    ops = (np.diag([1.0, c]), np.diag([0.0, math.sqrt(1 - c * c)]))
    target = DensityMatrix(rho.layout, sigma(0.3))
    cat, lam, rep = convert_asymptotic(rho, target, _power_channel(ops, 1), 1, 1e-12)
    assert rep.achieved_distance < 1e-14
    assert cat.body.labels == ("R",)
    np.testing.assert_allclose(cat.body.data, [[1.0]])
    assert rep.details["catalyst_residual"] < 1e-14


def test_convert_two_copies():
    rho = sigma_state(0.4, label="S1")
    target = DensityMatrix(rho.layout, sigma(0.3))
    c = 0.78
    ops = (np.diag([1.0, c]), np.diag([0.0, math.sqrt(1 - c * c)]))
    big = _power_channel(ops, 2)
    assert check_covariance(big, tol=1e-12).passed
    cat, lam, rep = convert_asymptotic(rho, target, big, 2, 0.02)
    assert rep.details["premise_distance"] <= 0.02
    assert rep.details["catalyst_residual"] < 1e-10
    assert rep.achieved_distance <= 0.02
    # each copy of the output is 0.4 * 0.78 = 0.312 coherent
    assert rep.achieved_distance == pytest.approx(0.006, abs=1e-12)
    assert rep.details["system_oracle_deviation"] < 1e-12
    assert cat.body.labels == ("S2", "R")


def test_convert_three_copies_classical_permutation():
    rho = DensityMatrix(SystemLayout.qubit("S1"), np.diag([0.7, 0.3]))
    P = np.eye(8)
    for a, b in ((0, 7), (3, 4)):
        P[[a, b]] = P[[b, a]]
    lay = _copies(3)
    big = KrausChannel(lay, lay, (P,))
    xi = P @ np.kron(np.kron(rho.data, rho.data), rho.data) @ P.T
    oracle = sum(_ptrace_keep(xi, [2, 2, 2], k) for k in range(3)) / 3
    cat, lam, rep = convert_asymptotic(rho, rho, big, 3, 1.0)
    out = partial_trace(rep.final_state, ["S1"]).data
    np.testing.assert_allclose(out, oracle, atol=1e-12)
    assert rep.details["catalyst_residual"] < 1e-10
    assert np.allclose(cat.body.data, np.diag(np.diag(cat.body.data)))


def test_convert_register_body_matches_definition():
    rho = sigma_state(0.4, label="S1")
    c = 0.78
    ops = (np.diag([1.0, c]), np.diag([0.0, math.sqrt(1 - c * c)]))
    cat, _, _ = convert_asymptotic(rho, DensityMatrix(rho.layout, sigma(0.3)), _power_channel(ops, 2), 2, 0.02)
    xi = cat.xi.data
    xi1 = _ptrace_keep(xi, [2, 2], 1)
    reg = lambda k: np.diag([1.0 if i == k else 0.0 for i in range(2)])
    expect = (np.kron(xi1, reg(0)) + np.kron(rho.data, reg(1))) / 2
    np.testing.assert_allclose(cat.body.data, expect, atol=1e-14)


def test_convert_errors():
    rho = sigma_state(0.4, label="S1")
    far = DensityMatrix(rho.layout, sigma(0.0))
    ident = _power_channel((np.eye(2),), 2)
    with pytest.raises(QcatError, match="premise"):
        convert_asymptotic(rho, far, ident, 2, 0.01)
    with pytest.raises(DimensionError):
        convert_asymptotic(rho, rho, _power_channel((np.eye(2),), 3), 3, 0.1, dim_cap=16)


def test_pad_state():
    p = pad_state(sigma_state(0.5), [2])
    assert p.dim == 3
    assert p.data[2, 2] == 0
    assert p.layout.subsystems[0].energies[-1] == 2


# -- measures --------------------------------------------------------------

def test_measures_vanish_on_diagonal():
    rho = DensityMatrix(SystemLayout.single("A", [0, 1, 3]), np.diag([0.2, 0.3, 0.5]))
    assert skew_information(rho) == 0
    assert relative_entropy_coherence(rho) == 0


def test_plus_state_values():
    plus = sigma_state(1.0)
    assert skew_information(plus) == pytest.approx(0.25, abs=1e-12)
    assert relative_entropy_coherence(plus) == pytest.approx(math.log(2), abs=1e-12)


def test_skew_additive_on_sigma_pair():
    for eta in (0.2, 0.5, 0.9):
        one = skew_information(sigma_state(eta, label="A"))
        two = skew_information(tensor(sigma_state(eta, label="A"), sigma_state(eta, label="B")))
        assert two == pytest.approx(2 * one, abs=1e-10)
        assert one == pytest.approx(skew_eig(sigma(eta), [0, 1]), abs=1e-12)


def _dephase_oracle(arr, energies):
    E = np.asarray(energies, dtype=float)
    return np.where(np.isclose(E[:, None], E[None, :]), arr, 0)


def test_additivity_random_pairs():
    rng = np.random.default_rng(11)
    for _ in range(50):
        ea, eb = [0, float(rng.integers(1, 4))], [0, 1, float(rng.integers(2, 5))]
        a = DensityMatrix(SystemLayout.single("A", ea), random_state(2, rng))
        b = DensityMatrix(SystemLayout.single("B", eb), random_state(3, rng))
        ab = tensor(a, b)
        sa, sb = skew_information(a), skew_information(b)
        assert sa == pytest.approx(skew_eig(a.data, ea), abs=1e-10)
        assert skew_information(ab) == pytest.approx(sa + sb, abs=1e-9)
        ra, rb = relative_entropy_coherence(a), relative_entropy_coherence(b)
        assert ra == pytest.approx(entropy(_dephase_oracle(a.data, ea)) - entropy(a.data), abs=1e-9)
        assert relative_entropy_coherence(ab) == pytest.approx(ra + rb, abs=1e-9)


def test_dephase_local_vs_total():
    lay = SystemLayout.qubit("A") + SystemLayout.qubit("B")
    bell01 = np.zeros((4, 4))
    bell01[1, 1] = bell01[2, 2] = bell01[1, 2] = bell01[2, 1] = 0.5
    rho = DensityMatrix(lay, bell01)
    assert dephase(rho, "total").data[1, 2] == 0.5
    assert dephase(rho, "local").data[1, 2] == 0
    with pytest.raises(ValueError):
        dephase(rho, "other")


# -- monotonicity ----------------------------------------------------------

def test_monotonicity_identity_is_tight():
    joint = tensor(sigma_state(0.6, label="S"), gamma_state(0.6, label="C"))
    rep = check_catalytic_monotonicity(SKEW_INFORMATION, joint, joint, ["S"], ["S"], ["C"])
    assert rep.initial_joint == rep.final_joint
    assert rep.initial_system == rep.final_system
    assert rep.tensor_additive and rep.superadditive and rep.channel_monotone
    assert rep.chain_holds and rep.system_monotone


def test_monotonicity_missing_joint():
    with pytest.raises(QcatError):
        check_catalytic_monotonicity(SKEW_INFORMATION, None, None, ["S"], ["S"], ["C"])


@pytest.mark.slow
def test_chain_breaks_superadditivity():
    K, eta0 = 10, 0.3
    ch = run_chain(eta0, K, joint=True)
    parts = [sigma_state(eta0, label="S")] + [gamma_state(e, label=f"C{j}") for j, e in enumerate(ch.eta_sequence[:-1])]
    initial = tensor(*parts)
    cats = [f"C{j}" for j in range(K)]
    rep = check_catalytic_monotonicity(SKEW_INFORMATION, initial, ch.joint_state, ["S"], ["S"], cats)
    assert rep.final_system > rep.initial_system
    assert rep.catalysts_restored
    assert rep.tensor_additive
    assert rep.channel_monotone
    assert rep.superadditivity_gap < -1e-6
    assert not rep.superadditive
    assert rep.final_joint < rep.final_system + sum(rep.final_catalysts)


def test_dephasing_run_is_monotone():
    lay = SystemLayout.qubit("S") + SystemLayout.qubit("C")
    ops = (np.kron(np.diag([1.0, 0.0]), np.eye(2)), np.kron(np.diag([0.0, 1.0]), np.eye(2)))
    initial = tensor(sigma_state(0.6, label="S"), sigma_state(0.4, label="C"))
    final = apply_channel(KrausChannel(lay, lay, ops), initial)
    rep = check_catalytic_monotonicity(RELATIVE_ENTROPY_COHERENCE, initial, final, ["S"], ["S"], ["C"])
    assert rep.chain_holds
    assert rep.system_monotone
    assert rep.final_system == pytest.approx(0.0, abs=1e-12)


# -- broadcasting ----------------------------------------------------------

def test_broadcast_delta_tenth():
    E1, tau, E2, rep = broadcast3(0.1)
    d = rep.details
    assert d["rho_prime_13"].real == pytest.approx(152 / 225 * 0.01, abs=1e-10)
    assert d["rho_prime_13"].real == pytest.approx(0.0067556, abs=1e-7)
    assert d["catalyst_residual"] < 1e-12
    assert d["tilde_error"] < 1e-12
    assert max(d["catalyst_entry_errors"].values()) < 1e-12
    assert d["covariance_E1"].passed and d["covariance_E2"].passed
    np.testing.assert_allclose(tau.data, broadcast_catalyst(0.1))


def test_broadcast_quadratic_scaling():
    deltas = np.geomspace(1e-3, 0.1, 8)
    vals = [abs(broadcast3(x, check_symmetry=False)[3].details["rho_prime_13"]) for x in deltas]
    slope = np.polyfit(np.log(deltas), np.log(vals), 1)[0]
    assert slope == pytest.approx(2.0, abs=0.01)
    assert vals[0] < 1e-6


def test_broadcast_other_energies():
    _, _, _, rep = broadcast3(0.1, energies=[0, "1/3", "22/7"])
    assert rep.details["covariance_E1"].passed
    assert rep.details["covariance_E2"].passed
    assert rep.details["catalyst_residual"] < 1e-12


def test_broadcast_delta_bounds():
    dmax = broadcast_delta_max()
    assert 0 < dmax <= 0.25
    assert np.linalg.eigvalsh(broadcast_catalyst(dmax)).min() > -1e-12
    with pytest.raises(QcatError):
        broadcast3(dmax * 1.01 + 1e-6)
    with pytest.raises(QcatError):
        broadcast3(0.0)


@settings(max_examples=20, deadline=None)
@given(st.floats(1e-3, 0.95))
def test_broadcast_catalyst_entries_restored(frac):
    delta = frac * broadcast_delta_max()
    _, _, _, rep = broadcast3(delta, check_symmetry=False)
    errs = rep.details["catalyst_entry_errors"]
    for key in ("12", "23", "13"):
        assert errs[key] < 1e-10
    assert rep.details["rho_prime_13_error"] < 1e-10


# -- reuse -----------------------------------------------------------------

@pytest.mark.parametrize("K", [2, 3])
@pytest.mark.parametrize("n", [1, 2, 3])
def test_reuse_counts_and_validation(K, n):
    sched = reuse_schedule(K, n)
    assert sched.count == reuse_recursion(K, n) == reuse_count(K, n) == (n + 1) * K ** n
    assert sched.copies == K ** n
    assert sched.validate("clique").passed
    assert sched.validate("propagate").passed


def test_reuse_paper_counts():
    assert reuse_schedule(3, 1).count == 6
    assert reuse_schedule(3, 2).count == 27
    assert reuse_schedule(2, 1).count == 4


def test_validator_catches_repeat():
    runs = [((0, 0), (1, 1)), ((0, 0), (1, 1))]
    rep = validate_runs(runs, 2)
    assert not rep.passed
    assert rep.violations[0][0] == 1
    assert not validate_runs([((0, 0), (1, 0))], 2).passed


def test_reuse_errors():
    with pytest.raises(QcatError):
        reuse_schedule(1, 2)
    with pytest.raises(DimensionError):
        reuse_schedule(3, 4, cap=27)
