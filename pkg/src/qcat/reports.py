"""Report records shared by the protocol and catalytic modules."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import config
from .qcore import DensityMatrix


@dataclass(frozen=True, eq=False)
class LedgerEntry:
    label: str
    declared: DensityMatrix
    measured: DensityMatrix
    residual: float
    multiplicity: int = 1
    target_dependent: bool = False


@dataclass(frozen=True, eq=False)
class CatalystLedger:
    """Restoration record for every catalytic subsystem of a run.

    ``correlation_graph`` holds ``(label_a, label_b, mutual_information)``
    triples measured on the final joint state.
    """

    entries: tuple = ()
    correlation_graph: tuple = ()
    tolerance: float = config.RESTORATION_TOL

    @property
    def max_residual(self) -> float:
        return max((e.residual for e in self.entries), default=0.0)

    @property
    def passed(self) -> bool:
        return all(e.residual <= self.tolerance for e in self.entries)

    @property
    def n_catalysts(self) -> int:
        return sum(e.multiplicity for e in self.entries)


@dataclass(frozen=True)
class Budget:
    eta: float
    K: int
    L: int
    predicted_error: float
    target_epsilon: float


@dataclass(frozen=True, eq=False)
class ProtocolReport:
    kind: str
    achieved_distance: float
    budget: Budget | None
    ledger: CatalystLedger
    overlaps: tuple = ()
    mixture: tuple = ()
    final_state: DensityMatrix | None = None
    decoupling_residual: float = 0.0
    details: dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        if not self.ledger.passed:
            return False
        if self.budget is not None and self.achieved_distance > self.budget.target_epsilon + 1e-12:
            return False
        return bool(np.isfinite(self.achieved_distance))
