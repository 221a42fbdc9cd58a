"""End-to-end preparation of arbitrary states with marginal catalysts.

``prepare_state`` runs the full pipeline for one target: a seed round per
level, an amplification chain per resource copy, ladder-resource
synthesis of each spectral component, and a final swap against a copy of
the output held in an extra catalyst.  Every catalyst marginal is
measured and recorded in a ledger.

``quasi_prepare`` is the variant that draws its seed coherence from an
input state instead of from catalysts, so that each catalyst is touched in
a single correlated-catalytic round.
"""

from __future__ import annotations

import math
from dataclasses import replace
from functools import lru_cache
from typing import Sequence

import numpy as np

from . import config
from .amplify import (chain_pair_information, eta_sequence, eta_step, gamma_state, run_chain, seed_round,
                      sigma_array, sigma_state, x_coherence)
from .catalytic import dephase
from .qcore import (DensityMatrix, DimensionError, QcatError, StateError, Subsystem, SystemLayout,
                    apply_kraus_array, mutual_information, partial_trace, permute_array, product_residual,
                    ptrace_array, trace_distance)
from .reports import Budget, CatalystLedger, LedgerEntry, ProtocolReport
from .spectra import coherence_support, maximal_closed_sets, reachable_pairs
from .synth import (LadderSystem, binomial_amplitudes, dicke_block, make_shift_table, overlap, overlap_exact,
                    shift_operator, synthesis_output, single_ladder_shift_table)

DEFAULT_SEED_ETA = 0.5
# half trace norm of (out - psi psi^dag) is at most 2 (1 - c) for ladder overlap c
SYNTH_BOUND_FACTOR = 2.0
K_GRID = (0,) + tuple(2 ** i for i in range(13))
L_GRID = (1, 2, 4, 8, 16, 32, 64)
JOINT_CHECK_CAP = 2048
QUASI_MAX_ROUNDS = 20000


class BudgetError(QcatError):
    pass


class LedgerViolation(QcatError):
    pass


class InfeasibleTarget(QcatError):
    pass


# ---------------------------------------------------------------------------
# budget

@lru_cache(maxsize=None)
def seed_eta_out(seed_eta: float = DEFAULT_SEED_ETA) -> float:
    """Coherence of the seed produced by one seed round (gap-independent)."""
    return seed_round(seed_eta).eta_out


def predicted_error(eta_K: float, L: int, d: int, shift_max: int = 1) -> float:
    """Union-bound error of the preparation pipeline.

    Resource noise: (d-1) L copies, each at trace distance (1-eta)/2 from
    |+>.  Synthesis: 2 (1 - overlap(L, shift_max)).
    """
    if d <= 1:
        return 0.0
    synth = SYNTH_BOUND_FACTOR * (1.0 - overlap_exact(L, shift_max))
    noise = (d - 1) * L * (1.0 - eta_K) / 2.0
    return min(1.0, synth + noise)


def plan_budget(target_epsilon: float, d_target: int, shift_max: int = 1,
                seed_eta: float = DEFAULT_SEED_ETA) -> Budget:
    """Cheapest (K, L) on a doubling grid whose predicted error meets the target.

    Cost is the catalyst count (d-1) L (K+2); ties go to the smaller L.
    """
    eps = float(target_epsilon)
    if not 0.0 < eps <= 1.0:
        raise BudgetError(f"target epsilon must lie in (0, 1], got {eps}")
    if d_target < 1 or shift_max < 1:
        raise BudgetError("d_target and shift_max must be positive")
    etas = eta_sequence(seed_eta_out(seed_eta), K_GRID[-1])
    best = None
    for L in L_GRID:
        for K in K_GRID:
            err = predicted_error(etas[K], L, d_target, shift_max)
            if err <= eps:
                cost = (max(d_target - 1, 1) * L * (K + 2), L)
                if best is None or cost < best[0]:
                    best = (cost, Budget(etas[K], K, L, err, eps))
                break
    if best is None:
        raise BudgetError(f"epsilon {eps} unreachable with L <= {L_GRID[-1]}, K <= {K_GRID[-1]}")
    return best[1]


# ---------------------------------------------------------------------------
# helpers

def _is_free(target: DensityMatrix, tol: float = 1e-12) -> bool:
    return float(np.max(np.abs(dephase(target, "total").data - target.data))) <= tol


def _spectral_components(arr: np.ndarray, tol: float = 1e-13):
    """Eigen-decomposition with a fixed phase convention, heaviest first."""
    w, v = np.linalg.eigh((arr + arr.conj().T) / 2)
    comps = []
    for i in np.argsort(-w, kind="stable"):
        if w[i] <= tol:
            continue
        vec = v[:, i]
        k = int(np.argmax(np.abs(vec) > 1e-12))
        vec = vec * np.exp(-1j * np.angle(vec[k]))
        comps.append((float(w[i]), vec))
    total = sum(c[0] for c in comps)
    return [(p / total, vec) for p, vec in comps]


def _single_energy(vec: np.ndarray, energies) -> bool:
    levels = {energies[k] for k in range(len(vec)) if abs(vec[k]) > 1e-12}
    return len(levels) <= 1


def unitary_with_column(psi: np.ndarray, j_star: int) -> np.ndarray:
    """A unitary V with V|j*> = psi (QR completion)."""
    psi = np.asarray(psi, dtype=complex)
    d = psi.size
    A = np.eye(d, dtype=complex)
    A[:, [0, j_star]] = A[:, [j_star, 0]]
    A[:, 0] = psi
    Q, R = np.linalg.qr(A)
    Q = Q * (np.diag(R) / np.abs(np.diag(R)))[None, :]
    Q[:, [0, j_star]] = Q[:, [j_star, 0]]
    return Q


def _padded(op: np.ndarray) -> np.ndarray:
    """Append one extra 'outside the symmetric sector' level, untouched by op."""
    n = op.shape[0]
    out = np.zeros((n + 1, n + 1), dtype=complex)
    out[:n, :n] = op
    return out


def _kron_all(mats):
    out = np.ones((1, 1), dtype=complex)
    for m in mats:
        out = np.kron(out, m)
    return out


def _ladder_states(blocks, lads):
    """Ladder register states: embedded Dicke block plus the outside weight."""
    states = []
    for B, lad in zip(blocks, lads):
        st = _padded(lad.embed(B))
        st[-1, -1] = 1.0 - float(np.trace(B).real)
        states.append(st)
    return states


def _joint_output(psi, table, lads, states) -> np.ndarray:
    """S' x ladders output of the shift-table channel on |j*> x ladder states.

    K0 gives sum_kq psi_k conj(psi_q) |k><q| x prod_p D_kp rho_p D_qp^dag and
    K1 leaves |j*> with the ladder weight outside every 0..L window.
    """
    d = psi.size
    keys = [k for k in sorted(table.shifts) if abs(psi[k]) > 0]
    ops = {k: [_padded(shift_operator(lad.L, table.shifts[k][p], lad.M)) for p, lad in enumerate(lads)]
           for k in keys}
    n = math.prod(s.shape[0] for s in states)
    out = np.zeros((d * n, d * n), dtype=complex)
    for k in keys:
        for q in keys:
            blk = _kron_all([A @ s @ B.conj().T for A, s, B in zip(ops[k], states, ops[q])])
            out[k * n:(k + 1) * n, q * n:(q + 1) * n] += psi[k] * np.conj(psi[q]) * blk
    P = [_padded(lad.projector()) for lad in lads]
    rest = _kron_all(states) - _kron_all([p @ s @ p for p, s in zip(P, states)])
    js = table.j_star
    out[js * n:(js + 1) * n, js * n:(js + 1) * n] += rest
    return out


def _ladder_layout(sprime: SystemLayout, table, lads) -> SystemLayout:
    subs = [Subsystem("S'", sprime.subsystems[0].energies)]
    for p, lad in enumerate(lads):
        base = lad.subsystem(f"R{p}")
        subs.append(Subsystem(base.label, base.energies + (base.energies[lad.M],)))
    return SystemLayout(tuple(subs))


# ---------------------------------------------------------------------------
# preparation pipeline

def _free_report(target: DensityMatrix, epsilon: float, comps) -> ProtocolReport:
    return ProtocolReport(
        kind="marginal-catalytic",
        achieved_distance=0.0,
        budget=Budget(1.0, 0, 0, 0.0, float(epsilon)),
        ledger=CatalystLedger(),
        mixture=tuple(comps),
        final_state=target,
        decoupling_residual=0.0,
        details={"free": True, "n_catalysts": 0},
    )


def _run_pipeline(target: DensityMatrix, comps, budget: Budget, j_star: int, seed_eta: float):
    layout = target.layout
    d = layout.dim
    E = layout.subsystems[0].energies
    K, L = budget.K, budget.L
    table = single_ladder_shift_table(j_star, layout)
    others = [i for i in range(d) if i != j_star]
    lads = [LadderSystem(L, table.M[p], table.gaps[p]) for p in range(table.n_ladders)]

    entries, edges, blocks, final_etas, steps = [], [], [], [], []
    for p, level in enumerate(others):
        gap = table.gaps[p]
        sr = seed_round(seed_eta, gap)
        steps.append({"step": "seed", "level": level, "eta_out": sr.eta_out})
        ca, cb = f"Ca[{level}]", f"Cb[{level}]"
        entries.append(LedgerEntry(ca, sigma_state(seed_eta, gap, ca),
                                   DensityMatrix(SystemLayout.qubit(ca, gap), partial_trace(sr.joint_state, ["Ca"]).data),
                                   sr.ca_residual, multiplicity=L))
        entries.append(LedgerEntry(cb, gamma_state(seed_eta, gap, cb),
                                   DensityMatrix(SystemLayout.qubit(cb, gap), partial_trace(sr.joint_state, ["Cb"]).data),
                                   sr.cb_residual, multiplicity=L))
        edges.append((ca, cb, sr.ca_cb_mutual_information))
        r_dev = trace_distance(sr.r_state.data, sigma_array(sr.eta_out))
        if r_dev > 1e-12:
            raise LedgerViolation(f"seed output is not an X-axis state (deviation {r_dev:.3e})")
        chain = run_chain(sr.eta_out, K, gap, joint=False)
        steps.append({"step": "amplify", "level": level, "rounds": K, "eta_final": chain.measured_etas[-1]})
        for j, (m, res) in enumerate(zip(chain.catalyst_marginals, chain.catalyst_residuals)):
            lab = f"C[{level}][{j}]"
            entries.append(LedgerEntry(lab, gamma_state(chain.eta_sequence[j], gap, lab),
                                       DensityMatrix(SystemLayout.qubit(lab, gap), m.data), res, multiplicity=L))
            if j + 1 < K:
                edges.append((lab, f"C[{level}][{j + 1}]", chain_pair_information(chain.eta_sequence[j], gap)))
        eta_fin = x_coherence(chain.final_system_marginal)
        if trace_distance(chain.final_system_marginal.data, sigma_array(eta_fin)) > 1e-12:
            raise LedgerViolation("amplified resource left the X-axis family")
        final_etas.append(eta_fin)
        blocks.append(dicke_block(eta_fin, L))

    states = _ladder_states(blocks, lads)
    n_lad = math.prod(s.shape[0] for s in states)
    joint_dim = d * n_lad
    dense = joint_dim <= config.dim_cap() and joint_dim <= 4 * JOINT_CHECK_CAP

    out = np.zeros((d, d), dtype=complex)
    closed = np.zeros((d, d), dtype=complex)
    joint = np.zeros((joint_dim, joint_dim), dtype=complex) if dense else None
    prod_in = _kron_all(states) if dense else None
    for w, psi in comps:
        if _single_energy(psi, E):
            branch = np.outer(psi, psi.conj())
            out += w * branch
            closed += w * branch
            if dense:
                joint += w * np.kron(branch, prod_in)
            continue
        closed += w * synthesis_output(psi, table, blocks)
        if dense:
            jb = _joint_output(psi, table, lads, states)
            joint += w * jb
            out += w * ptrace_array(jb, [d, n_lad], [0])
    if not dense:
        out = closed
    rho_eps = DensityMatrix(SystemLayout.single("S'", E), (out + out.conj().T) / 2)

    details = {
        "free": False,
        "j_star": j_star,
        "seed_eta": seed_eta,
        "seed_eta_out": seed_eta_out(seed_eta),
        "final_etas": final_etas,
        "synthesis_formula_deviation": float(np.max(np.abs(out - closed))),
        "joint_dimension": joint_dim,
        "dense_joint": dense,
        "steps": steps,
    }

    # correlation removal: C^N holds a copy of rho_eps and is swapped into S'
    cn_layout = SystemLayout.single("CN", E)
    if dense:
        jl = _ladder_layout(layout, table, lads)
        pre = DensityMatrix(jl, (joint + joint.conj().T) / 2)
        details["pre_swap_mutual_information"] = mutual_information(
            pre, ["S'"], [f"R{p}" for p in range(len(lads))]) if lads else 0.0
        full_dim = joint_dim * d
        if full_dim <= JOINT_CHECK_CAP:
            big = np.kron(pre.data, rho_eps.data)
            dims = list(jl.dims) + [d]
            n = len(dims)
            order = [n - 1] + list(range(1, n - 1)) + [0]
            swapped = permute_array(big, dims, order)
            subs = (Subsystem("S'", E),) + jl.subsystems[1:] + (Subsystem("CN", E),)
            post = DensityMatrix(SystemLayout(subs), (swapped + swapped.conj().T) / 2)
            decoupling = product_residual(post, ["S'"])
            cn_final = partial_trace(post, ["CN"]).data
            sys_final = partial_trace(post, ["S'"]).data
            details["decoupling_scope"] = "S' vs all other registers"
        else:
            sys_final, cn_final, decoupling = _pairwise_swap(out, rho_eps.data, d)
            details["decoupling_scope"] = "S' vs CN"
    else:
        sys_final, cn_final, decoupling = _pairwise_swap(out, rho_eps.data, d)
        details["decoupling_scope"] = "S' vs CN"
    cn_res = trace_distance(cn_final, rho_eps.data)
    entries.append(LedgerEntry("CN", DensityMatrix(cn_layout, rho_eps.data),
                               DensityMatrix(cn_layout, (cn_final + cn_final.conj().T) / 2), cn_res,
                               target_dependent=True))
    final = DensityMatrix(SystemLayout.single("S'", E), (sys_final + sys_final.conj().T) / 2)
    ledger = CatalystLedger(tuple(entries), tuple(edges))
    details["n_catalysts"] = ledger.n_catalysts
    achieved = trace_distance(final.data, target.data)
    budget = replace(budget, eta=min(final_etas) if final_etas else 1.0)
    return ProtocolReport(
        kind="marginal-catalytic",
        achieved_distance=achieved,
        budget=budget,
        ledger=ledger,
        overlaps=(overlap(L, 1),),
        mixture=tuple(comps),
        final_state=final,
        decoupling_residual=decoupling,
        details=details,
    )


def _pairwise_swap(sys_arr, cn_arr, d):
    big = np.kron(sys_arr, cn_arr)
    swapped = permute_array(big, [d, d], [1, 0])
    lay = SystemLayout.single("S'", [0] * d) + SystemLayout.single("CN", [0] * d)
    post = DensityMatrix(lay, (swapped + swapped.conj().T) / 2)
    return (ptrace_array(swapped, [d, d], [0]), ptrace_array(swapped, [d, d], [1]),
            product_residual(post, ["S'"]))


def prepare_state(target: DensityMatrix, epsilon: float, j_star: int = 0, budget: Budget | None = None,
                  seed_eta: float = DEFAULT_SEED_ETA, max_escalations: int = 4) -> ProtocolReport:
    """Prepare ``target`` within ``epsilon`` using covariant operations and marginal catalysts.

    The budget comes from :func:`plan_budget` unless given; it is doubled
    if the simulated distance misses the target.
    """
    if len(target.layout) != 1:
        raise QcatError("prepare_state expects a single-subsystem target")
    epsilon = float(epsilon)
    if epsilon <= 0:
        raise BudgetError("epsilon must be positive")
    d = target.dim
    if not 0 <= j_star < d:
        raise QcatError(f"j_star={j_star} out of range")
    comps = _spectral_components(target.data)
    if _is_free(target):
        return _free_report(target, epsilon, comps)
    if budget is None:
        budget = plan_budget(min(epsilon, 1.0), d, 1, seed_eta)
    for _ in range(max_escalations + 1):
        report = _run_pipeline(target, comps, budget, j_star, seed_eta)
        if not report.ledger.passed:
            raise LedgerViolation(f"catalyst residual {report.ledger.max_residual:.3e} exceeds tolerance")
        if report.decoupling_residual > config.RESTORATION_TOL:
            raise LedgerViolation(f"system not decoupled after swap: {report.decoupling_residual:.3e}")
        if report.achieved_distance <= epsilon:
            return report
        K = max(1, 2 * budget.K)
        L = min(2 * budget.L, L_GRID[-1])
        if K > K_GRID[-1] or (L == budget.L and K == budget.K):
            break
        budget = Budget(budget.eta, K, L, budget.predicted_error, budget.target_epsilon)
    raise BudgetError(f"achieved distance {report.achieved_distance:.3e} misses epsilon {epsilon}")


# ---------------------------------------------------------------------------
# seeds drawn from the input state

def seed_extraction_unitary(d: int, i: int, j: int) -> np.ndarray:
    """Energy-conserving U on S x R_ij mixing |i1> and |j0>."""
    U = np.eye(2 * d)
    a, b = 2 * i + 1, 2 * j
    s = 1 / math.sqrt(2)
    U[a, a], U[a, b] = s, s
    U[b, a], U[b, b] = s, -s
    return U


def _extract(rho_arr: np.ndarray, pairs, rounds: int):
    d = rho_arr.shape[0]
    ket0 = np.diag([1.0, 0.0])
    s = rho_arr.astype(complex)
    seeds = []
    for _ in range(rounds):
        for i, j in pairs:
            joint = np.kron(s, ket0)
            joint = apply_kraus_array((seed_extraction_unitary(d, i, j),), joint, [d, 2], [0, 1])
            seeds.append(((i, j), ptrace_array(joint, [d, 2], [1])))
            s = ptrace_array(joint, [d, 2], [0])
    return seeds, s


def extract_seed(rho: DensityMatrix, support, rounds: int = 1) -> list[DensityMatrix]:
    """Sequentially move coherence from ``rho`` into fresh two-level systems.

    One system R_ij per support pair (and per round), with gap E_j - E_i.
    """
    pairs = sorted(support.pairs if hasattr(support, "pairs") else support)
    if not pairs:
        raise QcatError("seed extraction needs a nonempty coherence support")
    if len(rho.layout) != 1:
        raise QcatError("extract_seed expects a single-subsystem state")
    E = rho.layout.subsystems[0].energies
    seeds, _ = _extract(rho.data, pairs, rounds)
    out = []
    for n, ((i, j), arr) in enumerate(seeds):
        lab = f"R{i}{j}" if rounds == 1 else f"R{i}{j}#{n // len(pairs)}"
        out.append(DensityMatrix(SystemLayout.qubit(lab, E[j] - E[i]), arr))
    return out


def to_x_axis(arr: np.ndarray):
    """Covariant phase rotation plus population balancing onto sigma(eta).

    Returns ``(eta, ops)`` where ``ops`` are the Kraus operators used.
    """
    r = np.asarray(arr, dtype=complex)
    phase = np.diag([1.0, np.exp(1j * np.angle(r[0, 1]))])
    p0, p1 = float(r[0, 0].real), float(r[1, 1].real)
    if p1 <= 0.5:
        g = 1 - 0.5 / p0
        ka = np.diag([math.sqrt(1 - g), 1.0])
        kb = np.zeros((2, 2))
        kb[1, 0] = math.sqrt(g)
    else:
        g = 1 - 0.5 / p1
        ka = np.diag([1.0, math.sqrt(1 - g)])
        kb = np.zeros((2, 2))
        kb[0, 1] = math.sqrt(g)
    ops = (ka @ phase, kb @ phase)
    out = sum(k @ r @ k.conj().T for k in ops)
    return float(2 * out[0, 1].real), ops, out


def _rounds_to_reach(eta0: float, threshold: float) -> int:
    eta, k = eta0, 0
    while 1 - eta > threshold:
        eta = eta_step(eta)
        k += 1
        if k > QUASI_MAX_ROUNDS:
            raise BudgetError(f"amplification from eta={eta0:.3e} needs more than {QUASI_MAX_ROUNDS} rounds")
    return k


def quasi_prepare(rho: DensityMatrix, target: DensityMatrix, epsilon: float, coherence_tol: float | None = None,
                  rho_support=None, target_support=None) -> ProtocolReport:
    """Prepare ``target`` from ``rho`` where each catalyst joins a single round.

    The reported distance is a certified upper bound: the exact output
    distance with ideal |+> resources plus sqrt(sum_r (1 - eta_r) / 2),
    which bounds the effect of the actual (possibly correlated) resources.
    """
    epsilon = float(epsilon)
    if epsilon <= 0:
        raise BudgetError("epsilon must be positive")
    if len(rho.layout) != 1 or len(target.layout) != 1:
        raise QcatError("quasi_prepare expects single-subsystem states")
    src_E = rho.layout.subsystems[0].energies
    tgt_E = target.layout.subsystems[0].energies
    sup = coherence_support(rho, coherence_tol, rho_support)
    tsup = coherence_support(target, coherence_tol, target_support)
    reach = reachable_pairs(sup, src_E, tgt_E)
    for i, j in sorted(tsup.pairs):
        if not reach.contains(i, j):
            gens = [str(src_E[l] - src_E[k]) for k, l in sorted(sup.pairs)]
            raise InfeasibleTarget(
                f"target coherence on pair ({i}, {j}) with gap {tgt_E[j] - tgt_E[i]} is outside the integer "
                f"lattice generated by the input gaps {gens}")
    d = target.dim
    partition = maximal_closed_sets(reach, d)
    if not tsup.pairs:
        comps = _spectral_components(target.data)
        rep = _free_report(target, epsilon, comps)
        return replace(rep, kind="quasi-correlated",
                       details={**rep.details, "blocks": [list(b) for b in partition.blocks]})

    pairs = sorted(sup.pairs)
    gaps = [src_E[j] - src_E[i] for i, j in pairs]
    # block decomposition and per-block shift tables
    block_plan = []
    for blk in partition.blocks:
        P = np.zeros(d, dtype=bool)
        P[list(blk)] = True
        sub = target.data[np.ix_(P, P)]
        weight = float(np.trace(sub).real)
        if weight <= 1e-14:
            continue
        js = blk[0]
        sub_layout = SystemLayout.single("S'", [tgt_E[k] for k in blk])
        shifts = {}
        for pos, k in enumerate(blk):
            w = reach.witness(js, k)
            shifts[pos] = tuple(int(w.get(pr, 0)) for pr in pairs)
        table = make_shift_table(0, shifts, gaps, sub_layout)
        comps = _spectral_components(sub / weight)
        block_plan.append((blk, weight, table, comps))
    shift_max = max(max((abs(m) for ms in t.shifts.values() for m in ms), default=0)
                    for _, _, t, _ in block_plan)

    def ideal_output(L):
        amp = binomial_amplitudes(L)
        B = np.outer(amp, amp)
        out = np.zeros((d, d), dtype=complex)
        for blk, weight, table, comps in block_plan:
            idx = np.array(blk)
            for w, psi in comps:
                o = synthesis_output(psi, table, [B] * len(pairs))
                out[np.ix_(idx, idx)] += weight * w * o
        return out

    L = None
    for cand in L_GRID:
        out_ideal = ideal_output(cand)
        ideal = trace_distance(out_ideal, target.data)
        if ideal <= 0.9 * epsilon:
            L = cand
            break
    if L is None:
        raise BudgetError(f"ideal synthesis error {ideal:.3e} above 0.9*epsilon even at L={L_GRID[-1]}")

    n_res = L * len(pairs)
    threshold = 2 * (0.1 * epsilon) ** 2 / n_res
    seeds, s_final = _extract(rho.data, pairs, L)
    entries, steps, final_etas, seed_etas = [], [], [], []
    for r, ((i, j), arr) in enumerate(seeds):
        gap = src_E[j] - src_E[i]
        copy = r // len(pairs)
        steps.append({"step": "extract", "pair": [i, j], "copy": copy, "offdiag": complex(arr[0, 1])})
        eta0, _, conv = to_x_axis(arr)
        if not 0 < eta0 < 1:
            raise StateError(f"extracted seed on pair ({i}, {j}) has no usable coherence")
        seed_etas.append(eta0)
        K = _rounds_to_reach(eta0, threshold)
        chain = run_chain(eta0, K, gap, joint=False)
        for jj, (m, res) in enumerate(zip(chain.catalyst_marginals, chain.catalyst_residuals)):
            lab = f"C[{i}{j}#{copy}][{jj}]"
            entries.append(LedgerEntry(lab, gamma_state(chain.eta_sequence[jj], gap, lab),
                                       DensityMatrix(SystemLayout.qubit(lab, gap), m.data), res))
        steps.append({"step": "amplify", "pair": [i, j], "copy": copy, "rounds": K,
                      "eta_final": chain.measured_etas[-1]})
        final_etas.append(x_coherence(chain.final_system_marginal))
    cert = math.sqrt(max(0.0, sum(1 - e for e in final_etas)) / 2)
    for blk, weight, _, comps in block_plan:
        steps.append({"step": "synthesize", "block": list(blk), "weight": weight, "components": len(comps)})
    ideal = trace_distance(out_ideal, target.data)
    achieved = ideal + cert
    ledger = CatalystLedger(tuple(entries), ())
    final = DensityMatrix(target.layout, (out_ideal + out_ideal.conj().T) / 2)
    mixture = tuple((weight * w, _embed(psi, blk, d)) for blk, weight, _, comps in block_plan for w, psi in comps)
    budget = Budget(min(final_etas), max(s["rounds"] for s in steps if s["step"] == "amplify"), L,
                    0.9 * epsilon + 0.1 * epsilon, epsilon)
    return ProtocolReport(
        kind="quasi-correlated",
        achieved_distance=achieved,
        budget=budget,
        ledger=ledger,
        overlaps=tuple(overlap(L, m) for m in range(1, 2 * shift_max + 1)),
        mixture=mixture,
        final_state=final,
        decoupling_residual=float("nan"),
        details={
            "ideal_distance": ideal,
            "resource_bound": cert,
            "blocks": [list(b) for b in partition.blocks],
            "support": [list(p) for p in pairs],
            "witnesses": {f"{blk[0]}->{blk[pos]}": list(t.shifts[pos]) for blk, _, t, _ in block_plan
                          for pos in range(len(blk))},
            "seed_etas": seed_etas,
            "final_etas": final_etas,
            "n_resources": n_res,
            "input_after_extraction": s_final,
            "steps": steps,
        },
    )


def _embed(psi, blk, d):
    v = np.zeros(d, dtype=complex)
    v[list(blk)] = psi
    return v
