"""Coherent ladder resources and the covariant channels that consume them.

L copies of a qubit state on a two-level system with gap g are viewed
through their symmetric (Dicke) sector as a ladder with levels 0..L and
energies n*g.  The ladder is padded with M extra levels below and above so
that shift operators Delta(m) = sum_k |k-m><k| stay inside it.

Two resource-consuming channels are built here: one that prepares
V|j*> from |j*> (one ladder per level other than j*), and a general
shift-table version used when coherence is only available in other
modes.  ``implement_channel`` extends the first construction to arbitrary
inputs so that a Stinespring dilation can be applied.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.special import gammaln

from . import config
from .qcore import (ChannelError, DensityMatrix, DimensionError, KrausChannel, Subsystem, SystemLayout,
                    energy, ptrace_array)


@dataclass(frozen=True)
class LadderSystem:
    L: int
    M: int
    gap: Fraction

    def __post_init__(self):
        if self.L < 0 or self.M < 0:
            raise ValueError("ladder needs L >= 0 and M >= 0")
        object.__setattr__(self, "gap", energy(self.gap))

    @property
    def levels(self) -> range:
        return range(-self.M, self.L + self.M + 1)

    @property
    def dim(self) -> int:
        return self.L + 2 * self.M + 1

    def index(self, n: int) -> int:
        return n + self.M

    def subsystem(self, label: str) -> Subsystem:
        return Subsystem(label, tuple(n * self.gap for n in self.levels))

    def layout(self, label: str = "R") -> SystemLayout:
        return SystemLayout((self.subsystem(label),))

    def projector(self) -> np.ndarray:
        """P onto the physical levels 0..L."""
        p = np.zeros(self.dim)
        p[self.M:self.M + self.L + 1] = 1.0
        return np.diag(p)

    def embed(self, block: np.ndarray) -> np.ndarray:
        """Place an (L+1)x(L+1) block on levels 0..L."""
        out = np.zeros((self.dim, self.dim), dtype=complex)
        out[self.M:self.M + self.L + 1, self.M:self.M + self.L + 1] = block
        return out


def binomial_amplitudes(L: int) -> np.ndarray:
    """sqrt(C(L, n)) / 2^(L/2) for n = 0..L, evaluated in log space."""
    n = np.arange(L + 1)
    logc = gammaln(L + 1) - gammaln(n + 1) - gammaln(L - n + 1)
    return np.exp(0.5 * logc - 0.5 * L * math.log(2.0))


@dataclass(frozen=True, eq=False)
class BinomialResource:
    L: int
    gap: Fraction
    amplitudes: np.ndarray

    @property
    def norm_error(self) -> float:
        return abs(float(np.sum(self.amplitudes ** 2)) - 1.0)


def _check_L(L: int):
    if L < 1:
        raise ValueError("L must be >= 1")
    if L > config.LADDER_CAP:
        raise DimensionError(f"L = {L} exceeds the ladder cap {config.LADDER_CAP}")


def binomial(L: int, gap=1) -> BinomialResource:
    _check_L(L)
    amp = binomial_amplitudes(L)
    res = BinomialResource(L, energy(gap), amp)
    if res.norm_error > 1e-12:
        raise ArithmeticError(f"binomial amplitudes lost normalisation ({res.norm_error:.2e})")
    return res


def binomial_resource(L: int, gap=1, M: int = 0, label: str = "R") -> DensityMatrix:
    """|+>^{(x)L} on the ladder [-M, L+M] as a pure density matrix."""
    res = binomial(L, gap)
    lad = LadderSystem(L, M, res.gap)
    v = np.zeros(lad.dim)
    v[M:M + L + 1] = res.amplitudes
    return DensityMatrix.pure(lad.layout(label), v)


def shift_operator(L: int, m: int, M: int) -> np.ndarray:
    """Delta(m) = sum_{k=0}^{L} |k-m><k| on the ladder [-M, L+M]."""
    if abs(m) > M:
        raise ValueError(f"|m| = {abs(m)} exceeds ladder padding M = {M}")
    d = L + 2 * M + 1
    D = np.zeros((d, d))
    for k in range(L + 1):
        D[k - m + M, k + M] = 1.0
    return D


@dataclass(frozen=True)
class OverlapRecord:
    L: int
    m: int
    exact_value: float
    lower_bound: float
    combinatorial_bound: float


def overlap_exact(L: int, m: int) -> float:
    """2^-L sum_n sqrt(C(L, n+|m|) C(L, n)) in log space."""
    m = abs(m)
    if m > L:
        return 0.0
    if m == 0:
        return 1.0
    n = np.arange(L - m + 1)
    lg = gammaln(L + 1)
    a = lg - gammaln(n + m + 1) - gammaln(L - n - m + 1)
    b = lg - gammaln(n + 1) - gammaln(L - n + 1)
    return float(np.sum(np.exp(0.5 * (a + b) - L * math.log(2.0))))


def stirling_bound(L: int, m: int) -> float:
    """Asymptotic lower bound on the overlap, floored at zero."""
    m = abs(m)
    c = 2 * m / math.sqrt(2 * math.pi)
    if L % 2 == 0:
        val = 1 - c * L ** -0.5
    elif L == 1:
        val = -math.inf
    else:
        val = 1 - c * (1 + 1 / L) ** (-L / 2) * (1 - 1 / L) ** (-L / 2) / (math.sqrt(L) + 1 / math.sqrt(L))
    return max(0.0, val)


def central_binomial_bound(L: int, m: int) -> float:
    """1 - |m| C(L, ceil(L/2)) / 2^L, floored at zero."""
    c = math.comb(L, (L + 1) // 2) / 2.0 ** L
    return max(0.0, 1 - abs(m) * c)


def overlap(L: int, m: int) -> OverlapRecord:
    if L < 1:
        raise ValueError("L must be >= 1")
    return OverlapRecord(L, m, overlap_exact(L, m), stirling_bound(L, m), central_binomial_bound(L, m))


def shift_trace(B: np.ndarray, delta: int) -> complex:
    """Tr[Delta(m')^dag Delta(m) B] for a block B on levels 0..L, delta = m - m'.

    Equals sum_b B[b, b - delta]; for the ideal binomial block it is the
    overlap at shift delta.
    """
    return complex(np.trace(B, offset=-delta))


# ---------------------------------------------------------------------------
# Dicke-sector compression of L identical qubit states

def dicke_block(eta: float, L: int) -> np.ndarray:
    """<D_n| sigma(eta)^{(x)L} |D_m> for n, m = 0..L (subnormalised).

    Pairs of bit strings with weights n, m and a shared ones are counted by
    the multinomial L!/(a!(n-a)!(m-a)!(L-n-m+a)!); their Hamming distance is
    n+m-2a.
    """
    _check_L(L)
    B = np.zeros((L + 1, L + 1))
    lgL = gammaln(L + 1)
    for n in range(L + 1):
        for m in range(n, L + 1):
            a = np.arange(max(0, n + m - L), n + 1)
            logmult = lgL - gammaln(a + 1) - gammaln(n - a + 1) - gammaln(m - a + 1) - gammaln(L - n - m + a + 1)
            k = n + m - 2 * a
            if eta == 0.0:
                terms = np.where(k == 0, np.exp(logmult), 0.0)
            else:
                terms = np.exp(logmult + k * math.log(eta))
            lognorm = -L * math.log(2.0) - 0.5 * (
                2 * lgL - gammaln(n + 1) - gammaln(L - n + 1) - gammaln(m + 1) - gammaln(L - m + 1))
            B[n, m] = B[m, n] = float(np.sum(terms)) * math.exp(lognorm)
    return B


def dicke_basis(L: int) -> np.ndarray:
    """Columns are the normalised Dicke states |D_n> in the 2^L product basis."""
    w = np.array([bin(x).count("1") for x in range(2 ** L)])
    V = np.zeros((2 ** L, L + 1))
    for n in range(L + 1):
        sel = w == n
        V[sel, n] = 1.0 / math.sqrt(sel.sum())
    return V


# ---------------------------------------------------------------------------
# resource-consuming channels

@dataclass(frozen=True, eq=False)
class ShiftTable:
    """Per-level shifts m[k][p] against ladder p, with ladder gaps and padding."""
    j_star: int
    shifts: dict
    gaps: tuple
    M: tuple

    @property
    def n_ladders(self) -> int:
        return len(self.gaps)


def make_shift_table(j_star: int, shifts: dict, gaps: Sequence, layout: SystemLayout,
                     M: Sequence[int] | None = None) -> ShiftTable:
    """Validate a shift table against the exact resonance condition.

    For every level k listed, E_k - E_{j*} must equal sum_p m[k][p] * gap_p
    exactly.
    """
    gaps = tuple(energy(g) for g in gaps)
    E = layout.subsystems[0].energies
    table = {}
    for k, ms in shifts.items():
        ms = tuple(int(x) for x in ms)
        if len(ms) != len(gaps):
            raise ChannelError(f"level {k}: {len(ms)} shifts for {len(gaps)} ladders")
        lhs = E[k] - E[j_star]
        rhs = sum((m * g for m, g in zip(ms, gaps)), Fraction(0))
        if lhs != rhs:
            raise ChannelError(f"resonance violated at level {k}: E_k - E_j* = {lhs} but sum m*gap = {rhs}")
        table[int(k)] = ms
    if j_star not in table:
        table[j_star] = (0,) * len(gaps)
    if any(table[j_star]):
        raise ChannelError("the reference level must carry zero shifts")
    need = tuple(max((abs(ms[p]) for ms in table.values()), default=0) for p in range(len(gaps)))
    if M is None:
        M = need
    M = tuple(int(x) for x in M)
    if any(a < b for a, b in zip(M, need)):
        raise ChannelError(f"padding {M} smaller than required {need}")
    return ShiftTable(j_star, table, gaps, M)


def single_ladder_shift_table(j_star: int, layout: SystemLayout) -> ShiftTable:
    """One ladder per level i != j*, gap E_i - E_j*, level i shifts its own ladder by one."""
    d = layout.dim
    E = layout.subsystems[0].energies
    others = [i for i in range(d) if i != j_star]
    gaps = [E[i] - E[j_star] for i in others]
    shifts = {k: tuple(int(k == i) for i in others) for k in range(d)}
    return make_shift_table(j_star, shifts, gaps, layout, M=[1] * len(others))


def ladder_labels(table: ShiftTable, prefix: str = "R") -> list[str]:
    return [f"{prefix}{p}" for p in range(table.n_ladders)]


def _ladder_layout(layout: SystemLayout, table: ShiftTable, L: int, prefix: str = "R") -> SystemLayout:
    subs = [layout.subsystems[0]]
    for p, lab in enumerate(ladder_labels(table, prefix)):
        subs.append(LadderSystem(L, table.M[p], table.gaps[p]).subsystem(lab))
    return SystemLayout(tuple(subs))


def _kron_all(mats):
    out = np.ones((1, 1))
    for m in mats:
        out = np.kron(out, m)
    return out


def _check_dense(dim: int):
    cap = config.dim_cap()
    if dim > cap:
        raise DimensionError(f"dense channel dimension {dim} exceeds cap {cap}")


def _check_unitary(V, d):
    V = np.asarray(V, dtype=complex)
    if V.shape != (d, d):
        raise ChannelError(f"V has shape {V.shape}, expected ({d}, {d})")
    if np.max(np.abs(V.conj().T @ V - np.eye(d))) > 1e-10:
        raise ChannelError("V is not unitary")
    return V


def shift_table_channel(V, table: ShiftTable, L: int, layout: SystemLayout, prefix: str = "R") -> KrausChannel:
    """Two-Kraus covariant channel that prepares V|j*> on the listed levels.

    K0 = sum_k |k><k|V|j*><j*| (x) prod_p Delta_p(m[k][p]),
    K1 = I - |j*><j*| (x) P,   P the projector onto levels 0..L of every ladder.
    """
    d = layout.dim
    V = _check_unitary(V, d)
    js = table.j_star
    col = V[:, js]
    outside = [k for k in range(d) if k not in table.shifts and abs(col[k]) > 1e-12]
    if outside:
        raise ChannelError(f"V|j*> has weight on levels {outside} missing from the shift table")
    full = _ladder_layout(layout, table, L, prefix)
    _check_dense(full.dim)
    lads = [LadderSystem(L, table.M[p], table.gaps[p]) for p in range(table.n_ladders)]
    K0 = np.zeros((full.dim, full.dim), dtype=complex)
    for k, ms in table.shifts.items():
        if abs(col[k]) == 0:
            continue
        e = np.zeros((d, d))
        e[k, js] = 1.0
        ops = [shift_operator(L, ms[p], lads[p].M) for p in range(len(lads))]
        K0 += col[k] * np.kron(e, _kron_all(ops))
    Pall = _kron_all([lad.projector() for lad in lads])
    ej = np.zeros((d, d))
    ej[js, js] = 1.0
    K1 = np.eye(full.dim) - np.kron(ej, Pall)
    return KrausChannel(full, full, (K0, K1))


def unitary_channel(V, j_star: int, L: int, layout: SystemLayout, prefix: str = "R") -> KrausChannel:
    """Resource-consuming channel preparing V|j*> (ladders for levels != j*)."""
    if not 0 <= j_star < layout.dim:
        raise ValueError(f"j_star = {j_star} out of range")
    _check_L(L)
    return shift_table_channel(V, single_ladder_shift_table(j_star, layout), L, layout, prefix)


def quasi_unitary_channel(V, j_star: int, shifts: dict, gaps: Sequence, L: int, layout: SystemLayout,
                          prefix: str = "R") -> KrausChannel:
    """Shift-table channel; the resonance identity is checked exactly."""
    _check_L(L)
    table = make_shift_table(j_star, shifts, gaps, layout)
    return shift_table_channel(V, table, L, layout, prefix)


def synthesis_output(psi, table: ShiftTable, blocks: Sequence[np.ndarray]) -> np.ndarray:
    """Reduced output of a shift-table channel on |j*> (x) prod_p B_p.

    ``blocks`` are (L+1)x(L+1) ladder blocks on levels 0..L, possibly
    subnormalised (weight outside the symmetric sector passes |j*>
    through K1).  ``psi`` is V|j*>.

        <k|out|q> = psi_k conj(psi_q) prod_p Tr[Delta(m_qp)^dag Delta(m_kp) B_p]
                    + (1 - prod_p Tr B_p) [k = q = j*]
    """
    psi = np.asarray(psi, dtype=complex)
    d = psi.shape[0]
    out = np.zeros((d, d), dtype=complex)
    keys = sorted(table.shifts)
    for k in keys:
        for q in keys:
            f = psi[k] * np.conj(psi[q])
            if f == 0:
                continue
            for p, B in enumerate(blocks):
                f *= shift_trace(B, table.shifts[k][p] - table.shifts[q][p])
            out[k, q] = f
    w = np.prod([np.trace(B).real for B in blocks]) if len(blocks) else 1.0
    out[table.j_star, table.j_star] += 1.0 - w
    return out


def synthesis_dense(ch: KrausChannel, table: ShiftTable, blocks: Sequence[np.ndarray], L: int):
    """Dense run of a shift-table channel on |j*> (x) prod_p B_p.

    Returns (joint output on the symmetric sector, reduced S' output,
    K0 click probability).  The reduced output includes the pass-through
    term for weight outside the symmetric sector.
    """
    d = ch.input_layout.dims[0]
    lads = [LadderSystem(L, table.M[p], table.gaps[p]) for p in range(table.n_ladders)]
    ej = np.zeros((d, d))
    ej[table.j_star, table.j_star] = 1.0
    rin = np.kron(ej, _kron_all([lad.embed(B) for lad, B in zip(lads, blocks)]))
    K0, K1 = ch.kraus_ops
    a0 = K0 @ rin @ K0.conj().T
    a1 = K1 @ rin @ K1.conj().T
    joint = a0 + a1
    dims = ch.input_layout.dims
    red = ptrace_array(joint, dims, [0])
    w = np.prod([np.trace(B).real for B in blocks]) if len(blocks) else 1.0
    red = red.copy()
    red[table.j_star, table.j_star] += 1.0 - w
    return joint, red, float(np.trace(a0).real / max(w, 1e-300))


def synthesis_fidelity(V, j_star: int, L: int, layout: SystemLayout, dense: bool = True) -> float:
    """<psi|out|psi> for psi = V|j*> with ideal ladder resources."""
    V = _check_unitary(V, layout.dim)
    table = single_ladder_shift_table(j_star, layout)
    amp = binomial(L).amplitudes
    blocks = [np.outer(amp, amp)] * table.n_ladders
    psi = V[:, j_star]
    if dense:
        ch = unitary_channel(V, j_star, L, layout)
        _, out, _ = synthesis_dense(ch, table, blocks, L)
    else:
        out = synthesis_output(psi, table, blocks)
    return float(np.real(psi.conj() @ out @ psi))


# ---------------------------------------------------------------------------
# arbitrary channels through a Stinespring dilation

VECTOR_CAP = 2 ** 24

def _apply_axis(T: np.ndarray, op: np.ndarray, axis: int) -> np.ndarray:
    return np.moveaxis(np.tensordot(op, T, axes=(1, axis)), 0, axis)


def _window(table: ShiftTable, p: int) -> tuple[int, int]:
    ms = [m[p] for m in table.shifts.values()]
    return min(ms + [0]), max(ms + [0])


def window_shift(L: int, m: int, M: int, lo: int, hi: int) -> np.ndarray:
    """sum_{n=lo}^{L+hi} |n-m><n| on the ladder [-M, L+M].

    With every level's shift drawn from [lo, hi] and M >= hi - lo, all of
    these share the source projector, and each moves a physical level
    0..L up and back down without leaving the ladder.
    """
    if not (lo <= m <= hi and M >= hi - lo and lo <= 0 <= hi):
        raise ValueError(f"shift {m} incompatible with window [{lo}, {hi}] and padding {M}")
    d = L + 2 * M + 1
    D = np.zeros((d, d))
    for n in range(lo, L + hi + 1):
        D[n - m + M, n + M] = 1.0
    return D


def _x_dagger(psi: np.ndarray, table: ShiftTable, lads, adjoint: bool) -> np.ndarray:
    """Apply X^dag (adjoint=True) or X to a state tensor of shape (d, n_1, ..., n_P).

    X = sum_k |k><k| (x) X_k with X_k the level-k windowed shift on every
    ladder.
    """
    out = np.zeros_like(psi)
    for k, ms in table.shifts.items():
        part = psi[k]
        for p, lad in enumerate(lads):
            D = window_shift(lad.L, ms[p], lad.M, *_window(table, p))
            part = _apply_axis(part, D.T if adjoint else D, p)
        out[k] = part
    return out


def dilation_channel(V, layout: SystemLayout, L: int, j_star: int = 0, prefix: str = "R") -> KrausChannel:
    """Dense covariant channel approximating an arbitrary unitary V on S'.

    K0 = X (V (x) I) X^dag with windowed shifts.  X^dag X is one projector
    I (x) Q for every level, so K0^dag K0 = X X^dag and K1 = I - X X^dag
    completes it.  On |j*> inputs K0 agrees with unitary_channel,
    and V = I is reproduced exactly on resources supported on 0..L.
    """
    d = layout.dim
    V = _check_unitary(V, d)
    table = single_ladder_shift_table(j_star, layout)
    full = _ladder_layout(layout, table, L, prefix)
    _check_dense(full.dim)
    lads = [LadderSystem(L, table.M[p], table.gaps[p]) for p in range(table.n_ladders)]
    blocks = []
    for k in range(d):
        e = np.zeros((d, d))
        e[k, k] = 1.0
        ops = [window_shift(L, table.shifts[k][p], lads[p].M, *_window(table, p)) for p in range(len(lads))]
        blocks.append(np.kron(e, _kron_all(ops)))
    X = sum(blocks)
    n = full.dim // d
    K0 = X @ np.kron(V, np.eye(n)) @ X.conj().T
    K1 = np.eye(full.dim) - X @ X.conj().T
    return KrausChannel(full, full, (K0, K1))


def _dilation_apply_vector(vec: np.ndarray, V: np.ndarray, table: ShiftTable, lads) -> tuple:
    d = V.shape[0]
    amp = [np.zeros(lad.dim) for lad in lads]
    for a, lad in zip(amp, lads):
        a[lad.M:lad.M + lad.L + 1] = binomial_amplitudes(lad.L)
    psi = vec.reshape(d, *([1] * len(lads)))
    for p, a in enumerate(amp):
        shape = [1] * (len(lads) + 1)
        shape[p + 1] = a.size
        psi = psi * a.reshape(shape)
    y = _x_dagger(psi, table, lads, adjoint=True)
    k0 = _x_dagger(_apply_axis(y, V, 0), table, lads, adjoint=False)
    k1 = psi - _x_dagger(y, table, lads, adjoint=False)
    return k0, k1


def implement_channel(stinespring_V, rho: DensityMatrix, env: SystemLayout, L: int,
                      j_star: int = 0) -> DensityMatrix:
    """Approximate Tr_E[V (rho (x) |0><0|_E) V^dag] with covariant operations.

    S' = S E is treated as one system.  One ideal ladder |+>^{(x)L} per SE
    level other than j*, with gap E_i - E_j*, drives the channel
    K0 = X (V (x) I) X^dag, K1 = I - X X^dag.  Evaluated on state vectors per
    eigencomponent of rho, so larger L stay cheap.
    """
    _check_L(L)
    if len(rho.layout) != 1 or len(env) != 1:
        raise ValueError("implement_channel expects single-subsystem S and E layouts")
    se = SystemLayout.single("SE", [a + b for a in rho.layout.subsystems[0].energies
                                    for b in env.subsystems[0].energies])
    dS, dE = rho.dim, env.dim
    d = dS * dE
    V = _check_unitary(stinespring_V, d)
    table = single_ladder_shift_table(j_star, se)
    lads = [LadderSystem(L, table.M[p], table.gaps[p]) for p in range(table.n_ladders)]
    n_rest = math.prod(lad.dim for lad in lads)
    if d * n_rest > VECTOR_CAP:
        raise DimensionError(f"state-vector dimension {d * n_rest} too large")
    lam, vecs = np.linalg.eigh(rho.data)
    out = np.zeros((d, d), dtype=complex)
    e0 = np.zeros(dE)
    e0[0] = 1.0
    for p, v in zip(lam, vecs.T):
        if p < 1e-15:
            continue
        k0, k1 = _dilation_apply_vector(np.kron(v, e0), V, table, lads)
        for t in (k0, k1):
            m = t.reshape(d, -1)
            out += p * (m @ m.conj().T)
    red = ptrace_array(out, (dS, dE), [0])
    return DensityMatrix(rho.layout, red)


def stinespring_output(stinespring_V, rho: DensityMatrix, env: SystemLayout) -> DensityMatrix:
    dS, dE = rho.dim, env.dim
    V = np.asarray(stinespring_V, dtype=complex)
    e0 = np.zeros((dE, dE))
    e0[0, 0] = 1.0
    full = V @ np.kron(rho.data, e0) @ V.conj().T
    return DensityMatrix(rho.layout, ptrace_array(full, (dS, dE), [0]))
