"""Exact energy bookkeeping for multi-level coherence.

A state's coherence support is the set of level pairs with nonzero
off-diagonal entries.  A target pair is reachable when its energy gap is an
integer combination of the support gaps; the integer coefficients form the
witness.  Reachable pairs split the target levels into maximal closed
blocks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from . import config
from .qcore import DensityMatrix, QcatError, energy

Pair = tuple[int, int]


class LatticeError(QcatError):
    pass


def hermite_normal_form(A: Sequence[Sequence[int]]):
    """Row-style Hermite normal form over the integers.

    Returns ``(H, U)`` with ``U`` unimodular and ``U @ A == H``.  ``H`` is
    upper triangular in echelon form with positive pivots, and entries
    above each pivot are reduced into ``[0, pivot)``.  Pure Python ints are
    used throughout, so there is no overflow.
    """
    H = [list(map(int, row)) for row in A]
    m = len(H)
    n = len(H[0]) if m else 0
    U = [[int(i == j) for j in range(m)] for i in range(m)]

    def combine(i, k, a, b, c, d):
        # rows (i, k) <- (a*ri + b*rk, c*ri + d*rk) with ad - bc = +-1
        for M in (H, U):
            ri, rk = M[i], M[k]
            M[i] = [a * x + b * y for x, y in zip(ri, rk)]
            M[k] = [c * x + d * y for x, y in zip(ri, rk)]

    r = 0
    for col in range(n):
        if r >= m:
            break
        for k in range(r + 1, m):
            if H[k][col] == 0:
                continue
            x, y = H[r][col], H[k][col]
            g, s, t = _xgcd(x, y)
            # [s t; -y/g x/g] has determinant (s x + t y)/g = 1
            combine(r, k, s, t, -y // g, x // g)
        if H[r][col] == 0:
            continue
        if H[r][col] < 0:
            H[r] = [-v for v in H[r]]
            U[r] = [-v for v in U[r]]
        p = H[r][col]
        for i in range(r):
            q = H[i][col] // p
            if q:
                H[i] = [a - q * b for a, b in zip(H[i], H[r])]
                U[i] = [a - q * b for a, b in zip(U[i], U[r])]
        r += 1
    return H, U


def _xgcd(a: int, b: int):
    """(g, s, t) with s*a + t*b = g = gcd(a, b) >= 0."""
    s0, s1, t0, t1 = 1, 0, 0, 1
    while b:
        q, a, b = a // b, b, a % b
        s0, s1 = s1, s0 - q * s1
        t0, t1 = t1, t0 - q * t1
    if a < 0:
        a, s0, t0 = -a, -s0, -t0
    return a, s0, t0


def lattice_witness(generators: Sequence[Fraction], target: Fraction):
    """Integer coefficients m with sum m_i g_i == target, or None.

    Denominators are cleared with their lcm; the single-column generator
    matrix is reduced to Hermite form, whose first row carries the gcd and
    the unimodular multipliers.
    """
    gens = [Fraction(g) for g in generators]
    target = Fraction(target)
    if target == 0:
        return [0] * len(gens)
    if not gens or all(g == 0 for g in gens):
        return None
    D = math.lcm(*(g.denominator for g in gens), target.denominator)
    col = [[int(g * D)] for g in gens]
    b = int(target * D)
    H, U = hermite_normal_form(col)
    g = H[0][0]
    if b % g:
        return None
    q = b // g
    m = [q * u for u in U[0]]
    if sum(mi * gi for mi, gi in zip(m, gens)) != target:
        raise LatticeError("lattice solver produced a witness that does not substitute")
    return m


@dataclass(frozen=True)
class CoherenceSupport:
    pairs: frozenset
    n_levels: int

    def __iter__(self):
        return iter(sorted(self.pairs))

    def __len__(self):
        return len(self.pairs)


def coherence_support(rho, tol: float | None = None, declared: Iterable[Pair] | None = None) -> CoherenceSupport:
    """Pairs (i, j), i < j, whose off-diagonal magnitude exceeds ``tol``.

    ``declared`` bypasses the floating-point judgement with an explicit
    list of coherent pairs.
    """
    tol = config.COHERENCE_TOL if tol is None else tol
    if isinstance(rho, DensityMatrix):
        if len(rho.layout) != 1:
            raise QcatError("coherence_support expects a single-subsystem state")
        arr = rho.data
    else:
        arr = np.asarray(rho)
    d = arr.shape[0]
    if declared is not None:
        pairs = set()
        for i, j in declared:
            i, j = int(i), int(j)
            if i == j or not (0 <= i < d and 0 <= j < d):
                raise QcatError(f"declared support pair ({i}, {j}) is invalid for dimension {d}")
            pairs.add((min(i, j), max(i, j)))
        return CoherenceSupport(frozenset(pairs), d)
    pairs = {(i, j) for i in range(d) for j in range(i + 1, d) if abs(arr[i, j]) > tol}
    return CoherenceSupport(frozenset(pairs), d)


@dataclass(frozen=True)
class ReachableSet:
    pairs: frozenset
    witnesses: dict = field(hash=False)
    support: CoherenceSupport = field(hash=False)
    source_energies: tuple = ()
    target_energies: tuple = ()

    def gap(self, pair: Pair) -> Fraction:
        i, j = pair
        return self.target_energies[j] - self.target_energies[i]

    def witness(self, i: int, j: int) -> dict:
        """Coefficients for E_j - E_i (either order)."""
        if (i, j) in self.witnesses:
            return dict(self.witnesses[(i, j)])
        if (j, i) in self.witnesses:
            return {p: -m for p, m in self.witnesses[(j, i)].items()}
        if i == j:
            return {p: 0 for p in sorted(self.support.pairs)}
        raise LatticeError(f"pair ({i}, {j}) is not reachable")

    def contains(self, i: int, j: int) -> bool:
        return i == j or (min(i, j), max(i, j)) in self.pairs


def substitute(witness: dict, source_energies: Sequence[Fraction]) -> Fraction:
    return sum((m * (source_energies[l] - source_energies[k]) for (k, l), m in witness.items()), Fraction(0))


def reachable_pairs(support: CoherenceSupport, source_energies, target_energies) -> ReachableSet:
    src = tuple(energy(e) for e in source_energies)
    tgt = tuple(energy(e) for e in target_energies)
    if support.n_levels != len(src):
        raise QcatError(f"support is over {support.n_levels} levels but {len(src)} source energies were given")
    order = sorted(support.pairs)
    gens = [src[l] - src[k] for k, l in order]
    pairs, wit = set(), {}
    for i in range(len(tgt)):
        for j in range(i + 1, len(tgt)):
            m = lattice_witness(gens, tgt[j] - tgt[i])
            if m is None:
                continue
            w = dict(zip(order, m))
            if substitute(w, src) != tgt[j] - tgt[i]:
                raise LatticeError(f"witness for ({i}, {j}) fails exact substitution")
            pairs.add((i, j))
            wit[(i, j)] = w
    return ReachableSet(frozenset(pairs), wit, support, src, tgt)


@dataclass(frozen=True)
class ClosedIndexPartition:
    blocks: tuple

    def block_of(self, level: int) -> tuple:
        for b in self.blocks:
            if level in b:
                return b
        raise KeyError(level)


def maximal_closed_sets(reach: ReachableSet, n_levels: int) -> ClosedIndexPartition:
    """Partition target levels into maximal closed index sets.

    Blocks are the connected components of the reachability graph.  The
    result is then checked: every pair inside a block must itself be
    reachable, which holds whenever the lattice solver is correct because
    a difference of two reachable gaps is again reachable.
    """
    parent = list(range(n_levels))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, j in reach.pairs:
        if not (0 <= i < n_levels and 0 <= j < n_levels):
            raise LatticeError(f"pair ({i}, {j}) outside {n_levels} levels")
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    groups = {}
    for x in range(n_levels):
        groups.setdefault(find(x), []).append(x)
    blocks = tuple(tuple(sorted(g)) for g in sorted(groups.values()))
    for b in blocks:
        for a in range(len(b)):
            for c in range(a + 1, len(b)):
                if not reach.contains(b[a], b[c]):
                    raise LatticeError(
                        f"closure violated: ({b[a]}, {b[c]}) connected through reachable pairs but not reachable")
    return ClosedIndexPartition(blocks)
