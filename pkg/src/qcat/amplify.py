"""Two-level coherence amplification and the seed-coherence round.

Qubit states on a two-level layout with energies {0, gap}:

    sigma(eta) = (I + eta X) / 2
    gamma(eta) = (I + (sqrt(3) eta / 2) X + ((4 - eta^2) / 6) Z) / 2

One application of the amplification channel to sigma(eta) x gamma(eta)
leaves gamma(eta) on the catalyst and raises the system to
sigma(eta (25 - eta^2) / 24).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import config
from .qcore import (DensityMatrix, DimensionError, KrausChannel, SystemLayout, apply_kraus_array,
                    energy, mutual_information, ptrace_array, trace_distance)

SQ3 = math.sqrt(3.0)
X = np.array([[0.0, 1.0], [1.0, 0.0]])
Z = np.array([[1.0, 0.0], [0.0, -1.0]])
I2 = np.eye(2)


def _check_eta(eta, open_interval=False):
    eta = float(eta)
    if open_interval:
        if not 0.0 < eta < 1.0:
            raise ValueError(f"eta must lie in (0, 1), got {eta}")
    elif not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta must lie in [0, 1], got {eta}")
    return eta


def sigma_array(eta: float) -> np.ndarray:
    return (I2 + eta * X) / 2


def gamma_array(eta: float) -> np.ndarray:
    return (I2 + (SQ3 * eta / 2) * X + ((4 - eta * eta) / 6) * Z) / 2


def sigma_state(eta: float, gap=1, label: str = "S") -> DensityMatrix:
    eta = _check_eta(eta)
    return DensityMatrix(SystemLayout.qubit(label, gap), sigma_array(eta))


def gamma_state(eta: float, gap=1, label: str = "C") -> DensityMatrix:
    eta = _check_eta(eta)
    return DensityMatrix(SystemLayout.qubit(label, gap), gamma_array(eta))


def x_coherence(rho) -> float:
    """eta read off a qubit matrix as 2 Re rho_01."""
    a = rho.data if isinstance(rho, DensityMatrix) else np.asarray(rho)
    return float(2 * a[0, 1].real)


AMP_K0 = np.array([
    [1, 0, 0, 0],
    [0, 1 / 4, SQ3 / 4, 0],
    [0, SQ3 / 4, 3 / 4, 0],
    [0, 0, 0, 1],
], dtype=float)
AMP_K1 = np.array([
    [0, 0, 0, 0],
    [0, 0, 0, 0],
    [0, -SQ3 / 2, 1 / 2, 0],
    [0, 0, 0, 0],
], dtype=float)


def amplification_channel(gap=1, labels=("S", "C")) -> KrausChannel:
    layout = SystemLayout.qubit(labels[0], gap) + SystemLayout.qubit(labels[1], gap)
    return KrausChannel(layout, layout, (AMP_K0, AMP_K1))


def eta_step(eta: float) -> float:
    eta = _check_eta(eta)
    return eta * (25 - eta * eta) / 24


def eta_sequence(eta0: float, rounds: int) -> list[float]:
    seq = [float(eta0)]
    for _ in range(rounds):
        seq.append(eta_step(seq[-1]))
    return seq


def _amplify_pair(sys_arr: np.ndarray, cat_arr: np.ndarray):
    joint = np.kron(sys_arr, cat_arr)
    out = AMP_K0 @ joint @ AMP_K0.T + AMP_K1 @ joint @ AMP_K1.T
    return out, ptrace_array(out, (2, 2), [0]), ptrace_array(out, (2, 2), [1])


@dataclass(frozen=True, eq=False)
class ChainReport:
    eta_sequence: tuple
    final_system_marginal: DensityMatrix
    catalyst_residuals: tuple
    joint_state: DensityMatrix | None
    measured_etas: tuple
    catalyst_marginals: tuple
    fast_path: bool
    gap: Fraction

    @property
    def rounds(self) -> int:
        return len(self.eta_sequence) - 1

    @property
    def max_step_deviation(self) -> float:
        return max((abs(a - b) for a, b in zip(self.measured_etas, self.eta_sequence)), default=0.0)


def chain_labels(rounds: int, system: str = "S", prefix: str = "C") -> list[str]:
    return [system] + [f"{prefix}{j}" for j in range(rounds)]


def run_chain(eta0: float, rounds: int, gap=1, joint: bool = True, dim_cap: int | None = None) -> ChainReport:
    """Run K amplification rounds, each against a fresh catalyst gamma(eta_j).

    With ``joint=True`` the full state of S and all catalysts is simulated
    and retained; the joint dimension is 2**(rounds+1) and must not exceed
    the cap.  With ``joint=False`` only the (S, current catalyst) pair is
    simulated each round, which is exact because every catalyst is fresh
    when it is used.
    """
    eta0 = _check_eta(eta0, open_interval=True)
    if rounds < 0:
        raise ValueError("rounds must be >= 0")
    gap = energy(gap)
    cap = config.dim_cap() if dim_cap is None else dim_cap
    etas = eta_sequence(eta0, rounds)
    if joint and 2 ** (rounds + 1) > cap:
        raise DimensionError(
            f"joint dimension 2^{rounds + 1} exceeds cap {cap}; use the fast path (joint=False)")

    cat_res, cat_marg, measured = [], [], [eta0]
    joint_state = None
    if joint:
        state = sigma_array(eta0).astype(complex)
        for j in range(rounds):
            state = np.kron(state, gamma_array(etas[j]))
            n = j + 2
            state = apply_kraus_array((AMP_K0, AMP_K1), state, [2] * n, [0, n - 1])
            measured.append(x_coherence(ptrace_array(state, [2] * n, [0])))
        n = rounds + 1
        for j in range(rounds):
            m = ptrace_array(state, [2] * n, [j + 1])
            cat_marg.append(m)
            cat_res.append(trace_distance(m, gamma_array(etas[j])))
        sys_m = ptrace_array(state, [2] * n, [0])
        layout = SystemLayout(tuple(SystemLayout.qubit(lab, gap).subsystems[0] for lab in chain_labels(rounds)))
        joint_state = DensityMatrix(layout, state)
    else:
        sys_m = sigma_array(eta0).astype(complex)
        for j in range(rounds):
            _, sys_m, c = _amplify_pair(sys_m, gamma_array(etas[j]))
            cat_marg.append(c)
            cat_res.append(trace_distance(c, gamma_array(etas[j])))
            measured.append(x_coherence(sys_m))
    final = DensityMatrix(SystemLayout.qubit("S", gap), sys_m)
    cats = tuple(DensityMatrix(SystemLayout.qubit(f"C{j}", gap), m) for j, m in enumerate(cat_marg))
    return ChainReport(tuple(etas), final, tuple(cat_res), joint_state, tuple(measured), cats, not joint, gap)


def chain_pair_information(eta_j: float, gap=1) -> float:
    """Mutual information between consecutive chain catalysts C_j, C_{j+1}.

    Exact: before round j the system is sigma(eta_j) and both catalysts are
    fresh, so a three-qubit simulation suffices.
    """
    eta_next = eta_step(eta_j)
    st = np.kron(np.kron(sigma_array(eta_j), gamma_array(eta_j)), gamma_array(eta_next))
    st = apply_kraus_array((AMP_K0, AMP_K1), st, [2, 2, 2], [0, 1])
    st = apply_kraus_array((AMP_K0, AMP_K1), st, [2, 2, 2], [0, 2])
    lay = SystemLayout.qubit("S", gap) + SystemLayout.qubit("Ca", gap) + SystemLayout.qubit("Cb", gap)
    return mutual_information(DensityMatrix(lay, st), ["Ca"], ["Cb"])


# ---------------------------------------------------------------------------
# correlated-catalyst counterexample

def counterexample_polynomial(eta0: float) -> np.ndarray:
    """Closed-form C1 marginal after rerunning on the correlated catalyst."""
    e2 = eta0 * eta0
    num11 = (11919015936 - 1140507536 * e2 + 91814899 * e2 ** 2 + 1471879 * e2 ** 3
             - 161703 * e2 ** 4 + 2493 * e2 ** 5)
    num22 = (2576498688 + 1140507536 * e2 - 91814899 * e2 ** 2 - 1471879 * e2 ** 3
             + 161703 * e2 ** 4 - 2493 * e2 ** 5)
    den = 14495514624
    off = eta0 * (412672 - 19231 * e2 - 234 * e2 ** 2 + 9 * e2 ** 3) / (524288 * SQ3)
    return np.array([[num11 / den, off], [off, num22 / den]])


def gamma_eta1_closed_form(eta0: float) -> np.ndarray:
    e2 = eta0 * eta0
    a = (10 - e2 / 576 * (25 - e2) ** 2) / 12
    off = eta0 * (25 - e2) / (32 * SQ3)
    d = (1152 + 625 * e2 - 50 * e2 ** 2 + e2 ** 3) / 6912
    return np.array([[a, off], [off, d]])


@dataclass(frozen=True, eq=False)
class CounterexampleReport:
    eta0: float
    eta1: float
    reruns: int
    correlated_catalyst: DensityMatrix
    simulated_marginal: DensityMatrix
    rerun_marginals: tuple
    polynomial_matrix: np.ndarray
    gamma_eta1: np.ndarray
    distance_sim_poly: float
    distance_sim_gamma: float
    distance_poly_gamma: float
    maxdev_sim_poly: float
    maxdev_sim_gamma: float
    offdiag_gap: float
    catalyst_mutual_information: float


def _two_round_rerun(eta0: float, tau: np.ndarray) -> np.ndarray:
    st = np.kron(sigma_array(eta0), tau)
    st = apply_kraus_array((AMP_K0, AMP_K1), st, [2, 2, 2], [0, 1])
    return apply_kraus_array((AMP_K0, AMP_K1), st, [2, 2, 2], [0, 2])


def ding_counterexample(eta0: float, gap=1, reruns: int = 2) -> CounterexampleReport:
    """Reuse the correlated C0 C1 output of the K=2 chain as the catalyst.

    The K=2 chain is first run on product catalysts.  Its C0 C1 marginal is
    then fed, with a fresh sigma(eta0), through both rounds again; the C0 C1
    output of that rerun becomes the catalyst of the next one.  The C1
    marginal after ``reruns`` reruns is compared with gamma(eta1) and with
    the closed-form polynomial matrix, which coincides with ``reruns=2``.
    The marginal after every rerun is kept in ``rerun_marginals``.
    """
    eta0 = _check_eta(eta0, open_interval=True)
    if reruns < 1:
        raise ValueError("reruns must be >= 1")
    ch = run_chain(eta0, 2, gap, joint=True)
    tau = ptrace_array(ch.joint_state.data, [2, 2, 2], [1, 2])
    tau0 = tau
    margs = []
    for _ in range(reruns):
        st = _two_round_rerun(eta0, tau)
        margs.append(ptrace_array(st, [2, 2, 2], [2]))
        tau = ptrace_array(st, [2, 2, 2], [1, 2])
    marg = margs[-1]
    poly = counterexample_polynomial(eta0)
    eta1 = eta_step(eta0)
    g1 = gamma_array(eta1)
    lay2 = SystemLayout.qubit("C0", gap) + SystemLayout.qubit("C1", gap)
    tau_dm = DensityMatrix(lay2, tau0)
    c1 = SystemLayout.qubit("C1", gap)
    return CounterexampleReport(
        eta0=eta0,
        eta1=eta1,
        reruns=reruns,
        correlated_catalyst=tau_dm,
        simulated_marginal=DensityMatrix(c1, marg),
        rerun_marginals=tuple(DensityMatrix(c1, m) for m in margs),
        polynomial_matrix=poly,
        gamma_eta1=g1,
        distance_sim_poly=trace_distance(marg, poly),
        distance_sim_gamma=trace_distance(marg, g1),
        distance_poly_gamma=trace_distance(poly, g1),
        maxdev_sim_poly=float(np.max(np.abs(marg - poly))),
        maxdev_sim_gamma=float(np.max(np.abs(marg - g1))),
        offdiag_gap=float(marg[0, 1].real - g1[0, 1]),
        catalyst_mutual_information=mutual_information(tau_dm, ["C0"], ["C1"]),
    )


# ---------------------------------------------------------------------------
# seed round

def seed_unitary(alpha: float, gap=1) -> np.ndarray:
    """Energy-conserving rotation on span{|01>, |10>} of R x C_a."""
    alpha = float(alpha)
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    b = math.sqrt(1 - alpha * alpha)
    U = np.eye(4)
    U[1, 1], U[1, 2] = alpha, b
    U[2, 1], U[2, 2] = -b, alpha
    return U


def alpha_for(eta: float) -> float:
    eta = _check_eta(eta, open_interval=True)
    r = (25 - eta * eta) / 24
    return math.sqrt(2 / (1 + r * r))


def restoration_kraus(alpha: float):
    """Kraus pair on C_a that maps its post-rotation marginal back to sigma(eta)."""
    k0 = np.diag([1 / math.sqrt(2 - alpha ** 2), 1.0])
    k1 = np.zeros((2, 2))
    k1[1, 0] = math.sqrt((1 - alpha ** 2) / (2 - alpha ** 2))
    return k0, k1


def seed_output_kraus(alpha: float):
    """Kraus pair on R that turns its post-rotation state into an X-axis state."""
    k0 = np.diag([1 / math.sqrt(1 + alpha ** 2), -1.0])
    k1 = np.zeros((2, 2))
    k1[1, 0] = alpha / math.sqrt(1 + alpha ** 2)
    return k0, k1


def restoration_identity(eta: float) -> float:
    """alpha * eta' / sqrt(2 - alpha^2); equals eta when alpha = alpha_for(eta)."""
    a = alpha_for(eta)
    return a * eta_step(eta) / math.sqrt(2 - a * a)


def seed_eta_closed_form(eta: float) -> float:
    """Seed coherence as printed: eta' alpha sqrt(1-alpha^2) / sqrt(1+alpha^2)."""
    a = alpha_for(eta)
    return eta_step(eta) * a * math.sqrt(1 - a * a) / math.sqrt(1 + a * a)


def seed_eta_derived(eta: float) -> float:
    """Seed coherence implied by the R-state after the rotation.

    The rotated R state has off-diagonal -eta' sqrt(1-alpha^2)/2, and the
    R Kraus pair scales it by -1/sqrt(1+alpha^2); there is no extra alpha.
    """
    a = alpha_for(eta)
    return eta_step(eta) * math.sqrt(1 - a * a) / math.sqrt(1 + a * a)


@dataclass(frozen=True, eq=False)
class SeedReport:
    eta: float
    alpha: float
    eta_prime: float
    eta_out: float
    eta_out_closed_form: float
    r_state: DensityMatrix
    ca_residual: float
    cb_residual: float
    joint_state: DensityMatrix
    ca_cb_mutual_information: float


def seed_round(eta: float, gap=1) -> SeedReport:
    """Full seed round on |0>_R x sigma(eta)_Ca x gamma(eta)_Cb (8-dim dense)."""
    eta = _check_eta(eta, open_interval=True)
    gap = energy(gap)
    alpha = alpha_for(eta)
    ket0 = np.diag([1.0, 0.0])
    st = np.kron(np.kron(ket0, sigma_array(eta)), gamma_array(eta)).astype(complex)
    dims = [2, 2, 2]
    st = apply_kraus_array((AMP_K0, AMP_K1), st, dims, [1, 2])
    st = apply_kraus_array((seed_unitary(alpha),), st, dims, [0, 1])
    st = apply_kraus_array(restoration_kraus(alpha), st, dims, [1])
    st = apply_kraus_array(seed_output_kraus(alpha), st, dims, [0])
    r = ptrace_array(st, dims, [0])
    ca = ptrace_array(st, dims, [1])
    cb = ptrace_array(st, dims, [2])
    lay = SystemLayout.qubit("R", gap) + SystemLayout.qubit("Ca", gap) + SystemLayout.qubit("Cb", gap)
    joint = DensityMatrix(lay, st)
    return SeedReport(
        eta=eta,
        alpha=alpha,
        eta_prime=eta_step(eta),
        eta_out=x_coherence(r),
        eta_out_closed_form=seed_eta_closed_form(eta),
        r_state=DensityMatrix(SystemLayout.qubit("R", gap), r),
        ca_residual=trace_distance(ca, sigma_array(eta)),
        cb_residual=trace_distance(cb, gamma_array(eta)),
        joint_state=joint,
        ca_cb_mutual_information=mutual_information(joint, ["Ca"], ["Cb"]),
    )
