"""Resource-theory constructions that work with any catalytic run.

Covered here: turning an n-copy transformation into a single-copy
transformation with a register catalyst, two coherence measures with the
monotonicity bookkeeping around them, a three-level channel that moves
coherence onto a gap the input lacks while a qutrit catalyst is restored,
and a scheduler that reuses marginal catalysts across runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

from . import config
from .qcore import (ChannelError, DensityMatrix, DimensionError, KrausChannel, QcatError, StateError,
                    Subsystem, SystemLayout, check_covariance, energy, mutual_information,
                    partial_trace, permutation_unitary, ptrace_array, trace_distance,
                    von_neumann_entropy)
from .reports import CatalystLedger, LedgerEntry, ProtocolReport


# ---------------------------------------------------------------------------
# common embedding

def pad_state(rho: DensityMatrix, extra_energies: Sequence) -> DensityMatrix:
    """Direct-sum padding: append unoccupied levels with the given energies."""
    if len(rho.layout) != 1:
        raise QcatError("pad_state expects a single-subsystem state")
    sub = rho.layout.subsystems[0]
    extra = tuple(energy(e) for e in extra_energies)
    d, k = rho.dim, len(extra)
    arr = np.zeros((d + k, d + k), dtype=complex)
    arr[:d, :d] = rho.data
    return DensityMatrix(SystemLayout((Subsystem(sub.label, sub.energies + extra),)), arr)


# ---------------------------------------------------------------------------
# many-copy to single-copy conversion

@dataclass(frozen=True, eq=False)
class RegisterCatalyst:
    """tau = (1/n) sum_k rho^{(k-1)} x Xi_{n-k} x |k><k| on S2..Sn x R."""

    n: int
    body: DensityMatrix
    xi: DensityMatrix

    @property
    def register_label(self) -> str:
        return self.body.labels[-1]


def _copy_labels(n: int) -> list[str]:
    return [f"S{i + 1}" for i in range(n)]


def _kron(mats, start=None):
    out = np.ones((1, 1), dtype=complex) if start is None else start
    for m in mats:
        out = np.kron(out, m)
    return out


def convert_asymptotic(rho: DensityMatrix, rho_prime: DensityMatrix, big_channel: KrausChannel, n: int,
                       epsilon: float, dim_cap: int | None = None):
    """Build the register catalyst and the single-copy channel from an n-copy map.

    ``big_channel`` acts on n copies of the system.  The returned channel is
    a cyclic system shift after a register relabel after the register-
    conditioned application of ``big_channel``; it acts on S1..Sn and the
    n-level register R, with S1 the fresh input.
    """
    n = int(n)
    if n < 1:
        raise QcatError("n must be at least 1")
    for name, st in (("rho", rho), ("rho_prime", rho_prime)):
        if len(st.layout) != 1:
            raise QcatError(f"{name} must live on a single subsystem")
    sub = rho.layout.subsystems[0]
    if rho_prime.layout.subsystems[0].energies != sub.energies:
        raise QcatError("rho and rho_prime must share one layout; embed them with pad_state first")
    d = rho.dim
    cap = config.dim_cap() if dim_cap is None else int(dim_cap)
    total = d ** n * n
    if total > cap:
        raise DimensionError(f"joint dimension d^n * n = {total} exceeds cap {cap}")
    if big_channel.input_layout.dims != (d,) * n or big_channel.output_layout.dims != (d,) * n:
        raise ChannelError(f"big_channel must act on {n} copies of a {d}-level system")

    xi_arr = big_channel.apply_array(_kron([rho.data] * n))
    premise = trace_distance(xi_arr, _kron([rho_prime.data] * n))
    if premise > epsilon + 1e-12:
        raise QcatError(f"premise fails: n-copy distance {premise:.6g} exceeds epsilon {epsilon}")

    labels = _copy_labels(n)
    copy_subs = tuple(Subsystem(lab, sub.energies) for lab in labels)
    reg = Subsystem("R", (Fraction(0),) * n)
    xi = DensityMatrix(SystemLayout(copy_subs), xi_arr)
    dims = (d,) * n

    def xi_first(m):
        if m == 0:
            return np.ones((1, 1), dtype=complex)
        return ptrace_array(xi_arr, dims, list(range(m)))

    tau_arr = 0
    for k in range(1, n + 1):
        proj = np.zeros((n, n))
        proj[k - 1, k - 1] = 1.0
        tau_arr = tau_arr + _kron([rho.data] * (k - 1) + [xi_first(n - k), proj]) / n
    tau = DensityMatrix(SystemLayout(copy_subs[1:] + (reg,)), tau_arr)

    layout = SystemLayout(copy_subs + (reg,))
    Pn = np.zeros((n, n))
    Pn[n - 1, n - 1] = 1.0
    cond = [np.kron(k, Pn) for k in big_channel.kraus_ops]
    cond.append(np.kron(np.eye(d ** n), np.eye(n) - Pn))
    relab = np.kron(np.eye(d ** n), np.roll(np.eye(n), 1, axis=0))
    # new S1 holds old Sn, new S_{i+1} holds old S_i
    swap = permutation_unitary(layout, [labels[-1]] + labels[:-1] + ["R"])
    lam = KrausChannel(layout, layout, tuple(swap @ relab @ k for k in cond))

    joint_in = np.kron(rho.data, tau_arr)
    out = DensityMatrix(layout, lam.apply_array(joint_in))
    cat_labels = labels[1:] + ["R"]
    cat_out = partial_trace(out, cat_labels)
    sys_out = partial_trace(out, ["S1"])
    cat_residual = trace_distance(cat_out.data, tau_arr)
    if cat_residual > 1e-10:
        raise ChannelError(f"register catalyst not restored: residual {cat_residual:.3e}")
    sys_oracle = sum(ptrace_array(xi_arr, dims, [i]) for i in range(n)) / n
    distance = trace_distance(sys_out.data, rho_prime.data)

    ledger = CatalystLedger(entries=(LedgerEntry("tau", tau, cat_out, cat_residual),),
                            tolerance=1e-10)
    report = ProtocolReport(
        kind="correlated-catalytic",
        achieved_distance=distance,
        budget=None,
        ledger=ledger,
        final_state=out,
        details={
            "n": n,
            "epsilon": float(epsilon),
            "premise_distance": premise,
            "catalyst_residual": cat_residual,
            "system_oracle_deviation": trace_distance(sys_out.data, sys_oracle),
            "system_catalyst_mutual_information": mutual_information(out, ["S1"], cat_labels),
            "joint_dimension": total,
        },
    )
    return RegisterCatalyst(n, tau, xi), lam, report


# ---------------------------------------------------------------------------
# measures

def _hermitian_sqrt(a: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh((a + a.conj().T) / 2)
    return (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T


def skew_information(rho: DensityMatrix) -> float:
    """Wigner-Yanase skew information with the layout's total Hamiltonian.

    Evaluated as (1/2) sum_ij |A_ij|^2 (E_i - E_j)^2 with A = sqrt(rho),
    which equals -(1/2) Tr [A, H]^2 for diagonal H.
    """
    A = _hermitian_sqrt(rho.data)
    E = rho.layout.energies
    gaps = (E[:, None] - E[None, :]) ** 2
    return float(0.5 * np.sum(np.abs(A) ** 2 * gaps))


def _local_energy_keys(layout: SystemLayout) -> np.ndarray:
    """Integer code per basis state identifying its tuple of local energies."""
    codes = np.zeros(1, dtype=np.int64)
    for s in layout.subsystems:
        uniq = sorted(set(s.energies))
        local = np.array([uniq.index(e) for e in s.energies], dtype=np.int64)
        codes = (codes[:, None] * len(uniq) + local[None, :]).ravel()
    return codes


def dephase(rho: DensityMatrix, mode: str = "local") -> DensityMatrix:
    """Erase coherence between levels of different energy.

    ``mode="local"`` compares each subsystem's own energy; ``"total"`` uses
    the summed Hamiltonian.
    """
    if mode == "local":
        key = _local_energy_keys(rho.layout)
        mask = key[:, None] == key[None, :]
    elif mode == "total":
        ex = rho.layout.exact_energies
        _, key = np.unique(np.array([str(e) for e in ex]), return_inverse=True)
        mask = key[:, None] == key[None, :]
    else:
        raise ValueError(f"unknown dephasing mode {mode!r}")
    return DensityMatrix(rho.layout, np.where(mask, rho.data, 0))


def relative_entropy_coherence(rho: DensityMatrix, mode: str = "local") -> float:
    """S(dephase(rho)) - S(rho) in nats."""
    return max(0.0, von_neumann_entropy(dephase(rho, mode)) - von_neumann_entropy(rho))


@dataclass(frozen=True)
class ResourceMeasure:
    name: str
    evaluate: Callable[[DensityMatrix], float] = field(compare=False)

    def __call__(self, rho: DensityMatrix) -> float:
        return float(self.evaluate(rho))


SKEW_INFORMATION = ResourceMeasure("skew_information", skew_information)
RELATIVE_ENTROPY_COHERENCE = ResourceMeasure("relative_entropy_coherence", relative_entropy_coherence)


@dataclass(frozen=True)
class MonotonicityReport:
    measure: str
    initial_joint: float
    final_joint: float
    initial_system: float
    final_system: float
    initial_catalysts: tuple
    final_catalysts: tuple
    catalyst_residuals: tuple
    additivity_gap: float
    superadditivity_gap: float
    tolerance: float

    @property
    def tensor_additive(self) -> bool:
        return abs(self.additivity_gap) <= self.tolerance

    @property
    def superadditive(self) -> bool:
        return self.superadditivity_gap >= -self.tolerance

    @property
    def channel_monotone(self) -> bool:
        return self.final_joint <= self.initial_joint + self.tolerance

    @property
    def catalysts_restored(self) -> bool:
        return all(r <= config.RESTORATION_TOL for r in self.catalyst_residuals)

    @property
    def system_monotone(self) -> bool:
        return self.final_system <= self.initial_system + self.tolerance

    @property
    def chain_holds(self) -> bool:
        """Every link of the additivity / monotonicity / superadditivity chain."""
        return self.tensor_additive and self.channel_monotone and self.superadditive and self.catalysts_restored


def check_catalytic_monotonicity(measure: ResourceMeasure, initial: DensityMatrix | None,
                                 final: DensityMatrix | None, system_in: Sequence[str],
                                 system_out: Sequence[str], catalysts: Sequence[str],
                                 tol: float = 1e-9) -> MonotonicityReport:
    """Evaluate a measure term by term on the joint input and output of a run."""
    if initial is None or final is None:
        raise QcatError("monotonicity check needs the recorded joint initial and final states")
    catalysts = list(catalysts)
    for lab in list(system_in) + catalysts:
        initial.layout.index(lab)
    for lab in list(system_out) + catalysts:
        final.layout.index(lab)
    ci = tuple(measure(partial_trace(initial, [c])) for c in catalysts)
    cf_states = [partial_trace(final, [c]) for c in catalysts]
    cf = tuple(measure(s) for s in cf_states)
    residuals = tuple(trace_distance(partial_trace(initial, [c]).data, s.data)
                      for c, s in zip(catalysts, cf_states))
    ji, jf = measure(initial), measure(final)
    si = measure(partial_trace(initial, system_in))
    sf = measure(partial_trace(final, system_out))
    return MonotonicityReport(
        measure=measure.name,
        initial_joint=ji,
        final_joint=jf,
        initial_system=si,
        final_system=sf,
        initial_catalysts=ci,
        final_catalysts=cf,
        catalyst_residuals=residuals,
        additivity_gap=ji - (si + sum(ci)),
        superadditivity_gap=jf - (sf + sum(cf)),
        tolerance=tol,
    )


# ---------------------------------------------------------------------------
# three-level broadcasting

DEFAULT_BROADCAST_ENERGIES = (0, 1, 3)


def default_broadcast_input() -> np.ndarray:
    """A qutrit input with coherence on the (1,2) and (2,3) gaps only, phased."""
    r = np.array([[0.25, 0.25, 0], [0.25, 0.5, 0.25], [0, 0.25, 0.25]], dtype=complex)
    ph = np.exp(1j * np.array([0.3, -0.7, 1.1]))
    return r * np.outer(ph, ph.conj())


def broadcast_target(delta: float) -> np.ndarray:
    return np.array([[0.25, delta, 0], [delta, 0.5, delta], [0, delta, 0.25]], dtype=complex)


def broadcast_catalyst(delta: float) -> np.ndarray:
    a, b = 38 / 45 * delta, 152 / 225 * delta ** 2
    return np.array([[0.1 + b, a, b], [a, 0.8 - 2 * b, a], [b, a, 0.1 + b]], dtype=complex)


def _tau_min_eig(delta: float) -> float:
    return float(np.linalg.eigvalsh(broadcast_catalyst(delta))[0])


def _input_limits(rho: np.ndarray):
    diag = np.real(np.diag(rho))
    target = np.array([0.25, 0.5, 0.25])
    lam = min(1.0, *(t / p for t, p in zip(target, diag) if p > 0))
    return lam, lam * abs(rho[0, 1]), lam * abs(rho[1, 2])


def broadcast_delta_max(rho: np.ndarray | None = None) -> float:
    """Largest admissible delta: 1/4, the catalyst's PSD edge, and the input's coherence."""
    rho = default_broadcast_input() if rho is None else np.asarray(rho, dtype=complex)
    _, c12, c23 = _input_limits(rho)
    hi = min(0.25, c12, c23)
    grid = np.linspace(0, hi, 257)[1:]
    for lo_d, hi_d in zip(np.concatenate([[0.0], grid[:-1]]), grid):
        if _tau_min_eig(hi_d) < 0:
            return float(brentq(_tau_min_eig, lo_d, hi_d, xtol=1e-15))
    return float(hi)


def _schur_kraus(M: np.ndarray):
    w, v = np.linalg.eigh(M)
    return [np.diag(math.sqrt(x) * v[:, i]) for i, x in enumerate(w) if x > 1e-15]


def broadcast_stage1(delta: float, rho: np.ndarray, layout: SystemLayout) -> KrausChannel:
    """Covariant qutrit map sending ``rho`` to the tridiagonal delta state.

    A phase rotation makes the (1,2), (2,3) entries real and positive, a
    Schur-multiplier dephasing shrinks them, and with weight 1 - lam the
    state is replaced by a diagonal state fixing the populations.
    """
    lam, c12, c23 = _input_limits(rho)
    if c12 <= 0 or c23 <= 0:
        raise StateError("input needs coherence on both neighbouring gaps")
    a, b = delta / c12, delta / c23
    if a > 1 + 1e-12 or b > 1 + 1e-12:
        raise QcatError(f"delta {delta} exceeds what the input coherence supports")
    a, b = min(a, 1.0), min(b, 1.0)
    p12, p23 = np.angle(rho[0, 1]), np.angle(rho[1, 2])
    W = np.diag(np.exp(1j * np.array([-p12, 0.0, p23])))
    M = np.array([[1, a, a * b], [a, 1, b], [a * b, b, 1]], dtype=float)
    ops = [math.sqrt(lam) * k @ W for k in _schur_kraus(M)]
    if lam < 1:
        target = np.array([0.25, 0.5, 0.25])
        omega = (target - lam * np.real(np.diag(rho))) / (1 - lam)
        omega = np.clip(omega, 0, None)
        omega /= omega.sum()
        for i in range(3):
            for j in range(3):
                if omega[i] > 0:
                    k = np.zeros((3, 3), dtype=complex)
                    k[i, j] = math.sqrt((1 - lam) * omega[i])
                    ops.append(k)
    return KrausChannel(layout, layout, tuple(ops))


BROADCAST_PAIRS = ((0, 1), (1, 2), (0, 2))


def broadcast_stage2(layout: SystemLayout) -> KrausChannel:
    """Symmetric-subspace projector plus antisymmetric-to-|E2 E2> compensators."""
    e = np.eye(3)
    ket = lambda i, j: np.kron(e[i], e[j])
    K0 = sum(np.outer(ket(i, i), ket(i, i)) for i in range(3))
    ops = []
    for i, j in BROADCAST_PAIRS:
        plus = (ket(i, j) + ket(j, i)) / math.sqrt(2)
        minus = (ket(i, j) - ket(j, i)) / math.sqrt(2)
        K0 = K0 + np.outer(plus, plus)
        ops.append(np.outer(ket(1, 1), minus))
    return KrausChannel(layout, layout, (K0, *ops))


def broadcast3(delta: float, energies: Sequence = DEFAULT_BROADCAST_ENERGIES, rho=None,
               check_symmetry: bool = True):
    """Catalytic three-level construction creating (1,3) coherence.

    Returns ``(E1, tau, E2, report)``; the report carries the output system
    state, the restoration residuals and the coherence created on the
    outer gap.
    """
    delta = float(delta)
    rho_arr = default_broadcast_input() if rho is None else np.asarray(
        rho.data if isinstance(rho, DensityMatrix) else rho, dtype=complex)
    if rho_arr.shape != (3, 3):
        raise StateError("broadcast3 needs a qutrit input")
    if abs(rho_arr[0, 2]) > config.COHERENCE_TOL:
        raise StateError("input must carry no coherence on the outer gap")
    dmax = broadcast_delta_max(rho_arr)
    if not 0 < delta <= dmax + 1e-15:
        raise QcatError(f"delta must lie in (0, {dmax:.6g}]")
    tau_arr = broadcast_catalyst(delta)
    if _tau_min_eig(delta) < -1e-12:
        raise StateError(f"catalyst is not positive semidefinite at delta={delta}")
    lay_s = SystemLayout.single("S", energies)
    lay_c = SystemLayout.single("C", energies)
    joint_lay = lay_s + lay_c
    rho_in = DensityMatrix(lay_s, rho_arr)
    tau = DensityMatrix(lay_c, tau_arr)
    E1 = broadcast_stage1(delta, rho_arr, lay_s)
    E2 = broadcast_stage2(joint_lay)
    tilde = E1.apply_array(rho_arr)
    joint = np.kron(tilde, tau_arr)
    K0 = E2.kraus_ops[0]
    sigma0 = K0 @ joint @ K0.conj().T
    sigma = DensityMatrix(joint_lay, E2.apply_array(joint))
    cat_out = ptrace_array(sigma.data, (3, 3), [1])
    sys_out = ptrace_array(sigma.data, (3, 3), [0])
    c0 = ptrace_array(sigma0, (3, 3), [1])
    expected13 = 152 / 225 * delta ** 2
    details = {
        "delta": delta,
        "delta_max": dmax,
        "rho_prime_13": complex(sys_out[0, 2]),
        "rho_prime_13_expected": expected13,
        "rho_prime_13_error": abs(sys_out[0, 2] - expected13),
        "tilde_error": float(np.max(np.abs(tilde - broadcast_target(delta)))),
        "catalyst_residual": trace_distance(cat_out, tau_arr),
        "catalyst_entry_errors": {f"{i + 1}{j + 1}": float(abs(cat_out[i, j] - tau_arr[i, j]))
                                  for i, j in ((0, 1), (1, 2), (0, 2), (0, 0), (2, 2), (1, 1))},
        "sigma0_conditions": {
            "matched_entries_error": float(max(abs(c0[i, j] - tau_arr[i, j])
                                               for i, j in ((0, 1), (1, 2), (0, 2), (0, 0), (2, 2)))),
            "middle_deficit": float(np.real(tau_arr[1, 1] - c0[1, 1])),
        },
        "mutual_information": mutual_information(sigma, ["S"], ["C"]),
        "input_state": rho_in,
        "output_system": DensityMatrix(lay_s, sys_out),
    }
    if check_symmetry:
        details["covariance_E1"] = check_covariance(E1)
        details["covariance_E2"] = check_covariance(E2)
    ledger = CatalystLedger(entries=(LedgerEntry("C", tau, DensityMatrix(lay_c, cat_out),
                                                 details["catalyst_residual"]),), tolerance=1e-12)
    report = ProtocolReport(kind="correlated-catalytic", achieved_distance=0.0, budget=None,
                            ledger=ledger, final_state=sigma, details=details)
    return E1, tau, E2, report


# ---------------------------------------------------------------------------
# reuse of marginal catalysts

@dataclass(frozen=True)
class ReuseValidation:
    rule: str
    violations: tuple
    slot_errors: tuple

    @property
    def passed(self) -> bool:
        return not self.violations and not self.slot_errors


@dataclass(frozen=True)
class ReuseSchedule:
    """Runs over catalyst instances ``(copy, slot)``; ``K`` slots per copy."""

    K: int
    n: int
    runs: tuple
    correlation_graph: frozenset

    @property
    def copies(self) -> int:
        return self.K ** self.n

    @property
    def count(self) -> int:
        return len(self.runs)

    def validate(self, rule: str = "clique") -> ReuseValidation:
        return validate_runs(self.runs, self.K, rule)


def _schedule_runs(copies: list[int], K: int, m: int) -> list[tuple]:
    if m == 0:
        (c,) = copies
        return [tuple((c, s) for s in range(K))]
    size = K ** (m - 1)
    groups = [copies[g * size:(g + 1) * size] for g in range(K)]
    runs = []
    for g in groups:
        runs.extend(_schedule_runs(g, K, m - 1))
    # run j of each cross step takes slot s from group (j + s) mod K
    for t in range(size):
        for j in range(K):
            runs.append(tuple((groups[(j + s) % K][t], s) for s in range(K)))
    return runs


def validate_runs(runs: Sequence[tuple], K: int, rule: str = "clique") -> ReuseValidation:
    """Replay runs while tracking which instances may be correlated.

    ``"clique"``: a run correlates its participants with each other.
    ``"propagate"``: additionally, an instance outside the run that was
    correlated with any participant becomes correlated with all of them.
    Either way, a pair untouched by a run keeps its previous status.
    """
    if rule not in ("clique", "propagate"):
        raise ValueError(f"unknown rule {rule!r}")
    adj: dict = {}
    violations, slot_errors = [], []
    for r, run in enumerate(runs):
        slots = [s for _, s in run]
        if sorted(slots) != list(range(K)):
            slot_errors.append(r)
        for a in range(len(run)):
            for b in range(a + 1, len(run)):
                if run[b] in adj.get(run[a], ()):
                    violations.append((r, run[a], run[b]))
        members = set(run)
        if rule == "propagate":
            touched = set()
            for x in members:
                touched |= adj.get(x, set())
            touched -= members
            for y in touched:
                for x in members:
                    adj.setdefault(y, set()).add(x)
                    adj.setdefault(x, set()).add(y)
        for x in members:
            adj.setdefault(x, set()).update(members - {x})
    return ReuseValidation(rule, tuple(violations), tuple(slot_errors))


def reuse_schedule(K: int, n: int, cap: int | None = None) -> ReuseSchedule:
    """Recursive grouping schedule giving (n+1) K^n runs from K^n copies."""
    K, n = int(K), int(n)
    if K < 2 or n < 1:
        raise QcatError("reuse_schedule needs K >= 2 and n >= 1")
    cap = config.dim_cap() if cap is None else int(cap)
    if K ** n > cap:
        raise DimensionError(f"K^n = {K ** n} copies exceeds cap {cap}")
    runs = tuple(_schedule_runs(list(range(K ** n)), K, n))
    edges = set()
    for run in runs:
        for a in range(len(run)):
            for b in range(a + 1, len(run)):
                edges.add(frozenset((run[a], run[b])))
    return ReuseSchedule(K, n, runs, frozenset(edges))


def reuse_count(K: int, n: int) -> int:
    return (n + 1) * K ** n
