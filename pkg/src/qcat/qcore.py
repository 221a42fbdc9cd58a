"""Dense linear algebra over labelled composite quantum systems.

States, Kraus channels, partial traces, trace distance and the two
symmetry checks used throughout the package (time-translation covariance
of a channel and energy conservation of a unitary).

Energies are exact :class:`fractions.Fraction` values.  Floating point
copies are only used for spot-checks such as covariance sampling.
"""

from __future__ import annotations

import math
import string
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-12
PSD_TOL = 1e-10
COMPLETENESS_TOL = 1e-10

RationalEnergy = Fraction


class QcatError(ValueError):
    """Base class for input and invariant errors."""


class LayoutError(QcatError):
    pass


class StateError(QcatError):
    pass


class ChannelError(QcatError):
    pass


class DimensionError(QcatError):
    pass


def energy(value) -> Fraction:
    """Coerce ``value`` to an exact rational energy.

    Accepts ints, Fractions and strings such as ``"3/2"``.  Floats are read
    through their shortest decimal repr, so ``0.1`` becomes ``1/10``.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise LayoutError("boolean is not an energy")
    if isinstance(value, (int, np.integer)):
        return Fraction(int(value))
    if isinstance(value, (float, np.floating)):
        if not math.isfinite(value):
            raise LayoutError(f"energy must be finite, got {value}")
        return Fraction(repr(float(value)))
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise LayoutError(f"cannot parse energy {value!r}") from exc
    raise LayoutError(f"unsupported energy type {type(value).__name__}")


def format_energy(e: Fraction) -> str:
    return f"{e.numerator}/{e.denominator}"


@dataclass(frozen=True)
class Subsystem:
    label: str
    energies: tuple[Fraction, ...]

    def __post_init__(self):
        if not isinstance(self.label, str) or not self.label:
            raise LayoutError("subsystem label must be a non-empty string")
        es = tuple(energy(e) for e in self.energies)
        if len(es) == 0:
            raise LayoutError(f"subsystem {self.label!r} has no levels")
        object.__setattr__(self, "energies", es)

    @property
    def dim(self) -> int:
        return len(self.energies)


@dataclass(frozen=True)
class SystemLayout:
    """Ordered subsystems with an additive diagonal Hamiltonian."""

    subsystems: tuple[Subsystem, ...]

    def __post_init__(self):
        subs = tuple(self.subsystems)
        if not subs:
            raise LayoutError("layout needs at least one subsystem")
        labels = [s.label for s in subs]
        if len(set(labels)) != len(labels):
            dup = sorted({x for x in labels if labels.count(x) > 1})
            raise LayoutError(f"duplicate subsystem labels: {dup}")
        object.__setattr__(self, "subsystems", subs)

    @classmethod
    def single(cls, label: str, energies: Iterable) -> "SystemLayout":
        return cls((Subsystem(label, tuple(energies)),))

    @classmethod
    def qubit(cls, label: str, gap=1) -> "SystemLayout":
        return cls.single(label, (0, energy(gap)))

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(s.label for s in self.subsystems)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(s.dim for s in self.subsystems)

    @property
    def dim(self) -> int:
        return math.prod(self.dims)

    def __len__(self):
        return len(self.subsystems)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise LayoutError(f"unknown subsystem label {label!r}; layout has {list(self.labels)}") from None

    def __getitem__(self, label: str) -> Subsystem:
        return self.subsystems[self.index(label)]

    def concat(self, other: "SystemLayout") -> "SystemLayout":
        clash = set(self.labels) & set(other.labels)
        if clash:
            raise LayoutError(f"label collision: {sorted(clash)}")
        return SystemLayout(self.subsystems + other.subsystems)

    __add__ = concat

    def select(self, labels: Iterable[str]) -> "SystemLayout":
        """Sub-layout on ``labels``, kept in the original relative order."""
        want = set(labels)
        for lab in want:
            self.index(lab)
        return SystemLayout(tuple(s for s in self.subsystems if s.label in want))

    def relabel(self, mapping: dict) -> "SystemLayout":
        return SystemLayout(tuple(Subsystem(mapping.get(s.label, s.label), s.energies) for s in self.subsystems))

    def reorder(self, order: Sequence[str]) -> "SystemLayout":
        if sorted(order) != sorted(self.labels):
            raise LayoutError(f"reorder needs a permutation of {list(self.labels)}, got {list(order)}")
        return SystemLayout(tuple(self[lab] for lab in order))

    def same_shape(self, other: "SystemLayout") -> bool:
        """Equal dimensions and energies, ignoring labels."""
        return [s.energies for s in self.subsystems] == [s.energies for s in other.subsystems]

    @cached_property
    def exact_energies(self) -> tuple[Fraction, ...]:
        tot = [Fraction(0)]
        for s in self.subsystems:
            tot = [a + b for a in tot for b in s.energies]
        return tuple(tot)

    @cached_property
    def energies(self) -> np.ndarray:
        """Float copy of the total energies, one per basis state."""
        tot = np.zeros(1)
        for s in self.subsystems:
            tot = np.add.outer(tot, np.array([float(e) for e in s.energies])).ravel()
        tot.flags.writeable = False
        return tot

    def hamiltonian(self) -> np.ndarray:
        return np.diag(self.energies)


def _as_matrix(data, dim: int, what: str) -> np.ndarray:
    arr = np.array(data, dtype=complex)
    if arr.shape != (dim, dim):
        raise StateError(f"{what}: expected shape ({dim}, {dim}), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise StateError(f"{what}: non-finite entries")
    return arr


def state_violations(arr: np.ndarray) -> list[str]:
    """Human-readable list of broken density-matrix invariants."""
    problems = []
    herm = np.max(np.abs(arr - arr.conj().T)) if arr.size else 0.0
    if herm > HERMITIAN_TOL:
        problems.append(f"not Hermitian (max |A - A^dag| = {herm:.3e})")
    tr = np.trace(arr)
    if abs(tr - 1.0) > TRACE_TOL:
        problems.append(f"trace = {tr.real:.15g} differs from 1 by {abs(tr - 1.0):.3e}")
    lam = np.linalg.eigvalsh((arr + arr.conj().T) / 2)[0]
    if lam < -PSD_TOL:
        problems.append(f"negative eigenvalue {lam:.3e}")
    return problems


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Unit-trace positive semidefinite matrix attached to a layout.

    Construction validates the invariants and never renormalises; a
    violation raises :class:`StateError`.
    """

    layout: SystemLayout
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = _as_matrix(self.data, self.layout.dim, "density matrix")
        problems = state_violations(arr)
        if problems:
            raise StateError("density matrix invalid: " + "; ".join(problems))
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @classmethod
    def pure(cls, layout: SystemLayout, vec) -> "DensityMatrix":
        v = np.asarray(vec, dtype=complex).ravel()
        return cls(layout, np.outer(v, v.conj()))

    @classmethod
    def basis(cls, layout: SystemLayout, index: int) -> "DensityMatrix":
        v = np.zeros(layout.dim, dtype=complex)
        v[index] = 1.0
        return cls.pure(layout, v)

    @classmethod
    def maximally_mixed(cls, layout: SystemLayout) -> "DensityMatrix":
        return cls(layout, np.eye(layout.dim) / layout.dim)

    @property
    def dim(self) -> int:
        return self.layout.dim

    @property
    def labels(self):
        return self.layout.labels

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)

    def eigvalsh(self) -> np.ndarray:
        return np.linalg.eigvalsh((self.data + self.data.conj().T) / 2)

    def ptrace(self, keep: Iterable[str]) -> "DensityMatrix":
        return partial_trace(self, keep)


def _letters(n: int) -> str:
    pool = string.ascii_letters
    if n > len(pool):
        raise DimensionError("too many subsystems for einsum bookkeeping")
    return pool[:n]


def ptrace_array(arr: np.ndarray, dims: Sequence[int], keep: Sequence[int]) -> np.ndarray:
    """Partial trace of a raw matrix; ``keep`` holds subsystem positions."""
    dims = tuple(dims)
    keep = sorted(keep)
    n = len(dims)
    if keep == list(range(n)):
        return arr
    letters = _letters(2 * n)
    row = list(letters[:n])
    col = list(letters[n:])
    for i in range(n):
        if i not in keep:
            col[i] = row[i]
    out = "".join(row[i] for i in keep) + "".join(col[i] for i in keep)
    res = np.einsum("".join(row) + "".join(col) + "->" + out, arr.reshape(dims + dims))
    dk = math.prod(dims[i] for i in keep)
    return res.reshape(dk, dk)


def tensor(*states: DensityMatrix) -> DensityMatrix:
    if not states:
        raise StateError("tensor needs at least one state")
    layout = states[0].layout
    arr = states[0].data
    for s in states[1:]:
        layout = layout.concat(s.layout)
        arr = np.kron(arr, s.data)
    return DensityMatrix(layout, arr)


def partial_trace(rho: DensityMatrix, keep: Iterable[str]) -> DensityMatrix:
    keep = set(keep)
    if not keep:
        raise LayoutError("partial_trace needs at least one label to keep")
    idx = [rho.layout.index(lab) for lab in keep]
    sub = rho.layout.select(keep)
    return DensityMatrix(sub, ptrace_array(rho.data, rho.layout.dims, idx))


def _matrix_of(x) -> np.ndarray:
    return x.data if isinstance(x, DensityMatrix) else np.asarray(x, dtype=complex)


def trace_norm(m) -> float:
    return float(np.sum(np.linalg.svd(_matrix_of(m), compute_uv=False)))


def trace_distance(a, b) -> float:
    """Half the trace norm of ``a - b`` (singular values)."""
    A, B = _matrix_of(a), _matrix_of(b)
    if A.shape != B.shape:
        raise DimensionError(f"dimension mismatch: {A.shape} vs {B.shape}")
    return 0.5 * trace_norm(A - B)


def von_neumann_entropy(rho) -> float:
    """Entropy in nats."""
    A = _matrix_of(rho)
    lam = np.linalg.eigvalsh((A + A.conj().T) / 2)
    lam = lam[lam > 1e-15]
    return float(-np.sum(lam * np.log(lam)))


def mutual_information(rho: DensityMatrix, a: Iterable[str], b: Iterable[str]) -> float:
    a, b = set(a), set(b)
    if a & b:
        raise LayoutError(f"overlapping label groups {sorted(a & b)}")
    return (von_neumann_entropy(partial_trace(rho, a)) + von_neumann_entropy(partial_trace(rho, b))
            - von_neumann_entropy(partial_trace(rho, a | b)))


def product_residual(rho: DensityMatrix, a: Iterable[str]) -> float:
    """Trace distance between ``rho`` and marginal(a) x marginal(rest).

    The product is assembled in the layout order of ``rho``.
    """
    a = set(a)
    rest = set(rho.labels) - a
    if not a or not rest:
        return 0.0
    ra = partial_trace(rho, a)
    rb = partial_trace(rho, rest)
    prod = tensor(ra, rb)
    order = [prod.labels.index(lab) for lab in rho.labels]
    arr = permute_array(prod.data, prod.layout.dims, order)
    return trace_distance(arr, rho.data)


def permute_array(arr: np.ndarray, dims: Sequence[int], order: Sequence[int]) -> np.ndarray:
    """Reorder subsystems: new position k holds old subsystem ``order[k]``."""
    dims = tuple(dims)
    n = len(dims)
    t = arr.reshape(dims + dims)
    t = np.transpose(t, list(order) + [n + i for i in order])
    d = math.prod(dims)
    return t.reshape(d, d)


def permutation_unitary(layout: SystemLayout, order: Sequence[str]) -> np.ndarray:
    """Unitary mapping the layout to ``layout.reorder(order)``."""
    pos = [layout.index(lab) for lab in order]
    d = layout.dim
    ident = np.arange(d).reshape(layout.dims)
    src = np.transpose(ident, pos).ravel()
    P = np.zeros((d, d))
    P[np.arange(d), src] = 1.0
    return P


def permute(rho: DensityMatrix, order: Sequence[str]) -> DensityMatrix:
    """Explicit subsystem reordering; an energy-conserving unitary."""
    new_layout = rho.layout.reorder(order)
    pos = [rho.layout.index(lab) for lab in order]
    return DensityMatrix(new_layout, permute_array(rho.data, rho.layout.dims, pos))


@dataclass(frozen=True, eq=False)
class KrausChannel:
    input_layout: SystemLayout
    output_layout: SystemLayout
    kraus_ops: tuple

    def __post_init__(self):
        ops = tuple(np.array(k, dtype=complex) for k in self.kraus_ops)
        if not ops:
            raise ChannelError("channel needs at least one Kraus operator")
        shape = (self.output_layout.dim, self.input_layout.dim)
        for i, k in enumerate(ops):
            if k.shape != shape:
                raise ChannelError(f"Kraus operator {i} has shape {k.shape}, expected {shape}")
            k.flags.writeable = False
        object.__setattr__(self, "kraus_ops", ops)
        err = self.completeness_error
        if err > COMPLETENESS_TOL:
            raise ChannelError(f"completeness violated: max |sum K^dag K - I| = {err:.3e}")

    @cached_property
    def completeness_error(self) -> float:
        s = sum(k.conj().T @ k for k in self.kraus_ops)
        return float(np.max(np.abs(s - np.eye(self.input_layout.dim))))

    @classmethod
    def identity(cls, layout: SystemLayout) -> "KrausChannel":
        return cls(layout, layout, (np.eye(layout.dim),))

    @classmethod
    def from_unitary(cls, U, layout: SystemLayout) -> "KrausChannel":
        return cls(layout, layout, (np.asarray(U, dtype=complex),))

    def after(self, first: "KrausChannel") -> "KrausChannel":
        """Composition ``self o first``."""
        if not first.output_layout.same_shape(self.input_layout):
            raise ChannelError("composition layouts do not match")
        ops = [b @ a for b in self.kraus_ops for a in first.kraus_ops]
        ops = [k for k in ops if np.any(np.abs(k) > 0)] or ops[:1]
        return KrausChannel(first.input_layout, self.output_layout, tuple(ops))

    def apply_array(self, arr: np.ndarray) -> np.ndarray:
        return sum(k @ arr @ k.conj().T for k in self.kraus_ops)


def apply_kraus_array(ops, arr: np.ndarray, dims: Sequence[int], targets: Sequence[int],
                      out_dims: Sequence[int] | None = None) -> np.ndarray:
    """Apply Kraus operators acting on subsystems ``targets`` of a joint matrix.

    ``ops`` act on the targets taken in the listed order; output subsystems
    replace them in place with dimensions ``out_dims``.  No validation.
    """
    dims = list(dims)
    n = len(dims)
    targets = list(targets)
    out_dims = list(out_dims) if out_dims is not None else [dims[i] for i in targets]
    rest = [i for i in range(n) if i not in targets]
    din = math.prod(dims[i] for i in targets)
    dout = math.prod(out_dims)
    drest = math.prod(dims[i] for i in rest)
    t = arr.reshape(dims + dims)
    t = np.transpose(t, targets + rest + [n + i for i in targets] + [n + i for i in rest])
    t = t.reshape(din, drest, din, drest)
    acc = np.zeros((dout, drest, dout, drest), dtype=complex)
    for k in ops:
        k = np.asarray(k)
        left = np.tensordot(k, t, axes=(1, 0))
        acc += np.tensordot(left, k.conj(), axes=(2, 1)).transpose(0, 1, 3, 2)
    new_dims = list(dims)
    for pos, i in enumerate(targets):
        new_dims[i] = out_dims[pos]
    ordered = [new_dims[i] for i in targets] + [new_dims[i] for i in rest]
    acc = acc.reshape(ordered + ordered)
    perm = targets + rest
    inv = [perm.index(i) for i in range(n)]
    acc = np.transpose(acc, inv + [n + i for i in inv])
    d = math.prod(new_dims)
    return acc.reshape(d, d)


def apply_channel(ch: KrausChannel, rho: DensityMatrix, on: Sequence[str] | None = None) -> DensityMatrix:
    """Apply ``ch`` to ``rho``.

    With ``on`` given, the channel's input subsystems are matched by position
    to those labels of ``rho`` and the outputs replace them in place, keeping
    the labels.
    """
    if on is None:
        if not rho.layout.same_shape(ch.input_layout):
            raise ChannelError("state layout does not match channel input layout")
        return DensityMatrix(ch.output_layout, ch.apply_array(rho.data))
    on = list(on)
    if len(on) != len(ch.input_layout) or len(ch.output_layout) != len(ch.input_layout):
        raise ChannelError("local application needs equal numbers of input/output subsystems and labels")
    sub = SystemLayout(tuple(rho.layout[lab] for lab in on))
    if not sub.same_shape(ch.input_layout):
        raise ChannelError(f"subsystems {on} do not match the channel input layout")
    idx = [rho.layout.index(lab) for lab in on]
    arr = apply_kraus_array(ch.kraus_ops, rho.data, rho.layout.dims, idx, ch.output_layout.dims)
    subs = list(rho.layout.subsystems)
    for pos, i in enumerate(idx):
        subs[i] = Subsystem(on[pos], ch.output_layout.subsystems[pos].energies)
    return DensityMatrix(SystemLayout(tuple(subs)), arr)


def time_evolution(layout: SystemLayout, t: float) -> np.ndarray:
    return np.exp(-1j * layout.energies * t)


def random_density_array(dim: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    rank = dim if rank is None else rank
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    m = g @ g.conj().T
    return m / np.trace(m).real


def random_density_matrix(layout: SystemLayout, rng: np.random.Generator, rank: int | None = None) -> DensityMatrix:
    return DensityMatrix(layout, random_density_array(layout.dim, rng, rank))


@dataclass(frozen=True)
class CovarianceReport:
    max_deviation: float
    sampled_times: tuple
    passed: bool
    tolerance: float


DEFAULT_TIMES = (0.1, 1.0, math.pi, 10.0)


def check_covariance(ch: KrausChannel, times: Sequence[float] = DEFAULT_TIMES, trials: int = 20,
                     tol: float = 1e-9, seed: int = 0) -> CovarianceReport:
    """Sampled check that ``ch`` commutes with time translation.

    For each random state and time, the trace norm of
    U_out E(rho) U_out^dag - E(U_in rho U_in^dag) is evaluated.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        rho = random_density_array(ch.input_layout.dim, rng)
        out = ch.apply_array(rho)
        for t in times:
            ui = time_evolution(ch.input_layout, t)
            uo = time_evolution(ch.output_layout, t)
            lhs = uo[:, None] * out * uo.conj()[None, :]
            rhs = ch.apply_array(ui[:, None] * rho * ui.conj()[None, :])
            worst = max(worst, trace_norm(lhs - rhs))
    return CovarianceReport(worst, tuple(float(t) for t in times), worst <= tol, tol)


def kraus_covariance_defect(ch: KrausChannel) -> float:
    """Largest off-resonant Kraus entry (zero means manifestly covariant).

    A Kraus operator whose nonzero entries all shift energy by one common
    amount generates a covariant channel; this returns the largest entry
    magnitude that breaks that, after the best common shift per operator.
    """
    ein = ch.input_layout.exact_energies
    eout = ch.output_layout.exact_energies
    worst = 0.0
    for k in ch.kraus_ops:
        rows, cols = np.nonzero(np.abs(k) > 1e-14)
        if rows.size == 0:
            continue
        shifts = {}
        for r, c in zip(rows, cols):
            s = eout[r] - ein[c]
            shifts[s] = max(shifts.get(s, 0.0), abs(k[r, c]))
        if len(shifts) > 1:
            keep = max(shifts, key=shifts.get)
            worst = max(worst, max(v for s, v in shifts.items() if s != keep))
    return worst


def check_energy_conserving_unitary(U, layout: SystemLayout, tol: float = 1e-10) -> bool:
    """True when the spectral norm of [U, H] is at most ``tol``."""
    U = np.asarray(U, dtype=complex)
    d = layout.dim
    if U.shape != (d, d):
        raise ChannelError(f"unitary has shape {U.shape}, layout dimension is {d}")
    if np.max(np.abs(U.conj().T @ U - np.eye(d))) > tol:
        raise ChannelError("matrix is not unitary within tolerance")
    return commutator_norm(U, layout) <= tol


def commutator_norm(U, layout: SystemLayout) -> float:
    E = layout.energies
    comm = U * E[None, :] - E[:, None] * U
    return float(np.linalg.norm(comm, 2))
