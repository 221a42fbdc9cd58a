"""JSON encoding of states, channels and reports.

Complex numbers are ``[re, im]`` pairs and energies are ``"p/q"`` strings,
so every value round-trips exactly.
"""

from __future__ import annotations

import csv
import io
import json
from fractions import Fraction
from typing import Any

import numpy as np

from .qcore import DensityMatrix, KrausChannel, StateError, Subsystem, SystemLayout, energy, format_energy
from .reports import Budget, CatalystLedger, ProtocolReport
from .synth import OverlapRecord


def complex_matrix(m) -> list:
    a = np.asarray(m, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in a]


def parse_complex_matrix(obj, where: str = "matrix") -> np.ndarray:
    try:
        a = np.array(obj, dtype=float)
    except (TypeError, ValueError) as exc:
        raise StateError(f"{where}: entries must be [re, im] pairs") from exc
    if a.ndim != 3 or a.shape[2] != 2 or a.shape[0] != a.shape[1]:
        raise StateError(f"{where}: expected a square matrix of [re, im] pairs, got shape {a.shape}")
    return a[..., 0] + 1j * a[..., 1]


def parse_complex_vector(obj, where: str = "vector") -> np.ndarray:
    a = np.array(obj, dtype=float)
    if a.ndim != 2 or a.shape[1] != 2:
        raise StateError(f"{where}: expected a list of [re, im] pairs")
    return a[:, 0] + 1j * a[:, 1]


def layout_to_json(layout: SystemLayout) -> list:
    return [{"label": s.label, "energies": [format_energy(e) for e in s.energies]} for s in layout.subsystems]


def layout_from_json(obj) -> SystemLayout:
    return SystemLayout(tuple(Subsystem(s["label"], tuple(energy(e) for e in s["energies"])) for s in obj))


def state_to_json(rho: DensityMatrix) -> dict:
    return {"schema": "qcat.state/1", "layout": layout_to_json(rho.layout), "matrix": complex_matrix(rho.data)}


def state_from_json(obj: dict) -> DensityMatrix:
    layout = layout_from_json(obj["layout"])
    if "matrix" in obj:
        arr = parse_complex_matrix(obj["matrix"], "matrix")
        return DensityMatrix(layout, arr)
    vec = parse_complex_vector(obj["vector"], "vector")
    n = np.linalg.norm(vec)
    if abs(n - 1) > 1e-12:
        raise StateError(f"vector: norm {n:.12g} differs from 1 (trace of the pure state)")
    return DensityMatrix.pure(layout, vec)


def channel_to_json(ch: KrausChannel) -> dict:
    return {
        "schema": "qcat.channel/1",
        "input_layout": layout_to_json(ch.input_layout),
        "output_layout": layout_to_json(ch.output_layout),
        "kraus": [complex_matrix(k) for k in ch.kraus_ops],
    }


def channel_from_json(obj: dict) -> KrausChannel:
    ops = []
    for n, k in enumerate(obj["kraus"]):
        a = np.array(k, dtype=float)
        if a.ndim != 3 or a.shape[2] != 2:
            raise StateError(f"kraus[{n}]: expected a matrix of [re, im] pairs")
        ops.append(a[..., 0] + 1j * a[..., 1])
    return KrausChannel(layout_from_json(obj["input_layout"]), layout_from_json(obj["output_layout"]), tuple(ops))


def to_jsonable(x: Any) -> Any:
    """Recursive conversion to plain JSON types."""
    if isinstance(x, DensityMatrix):
        return state_to_json(x)
    if isinstance(x, KrausChannel):
        return channel_to_json(x)
    if isinstance(x, Fraction):
        return format_energy(x)
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        v = float(x)
        return v if np.isfinite(v) else None
    if isinstance(x, complex) or isinstance(x, np.complexfloating):
        return [float(x.real), float(x.imag)]
    if isinstance(x, np.ndarray):
        if np.iscomplexobj(x):
            return complex_matrix(x) if x.ndim == 2 else [[float(z.real), float(z.imag)] for z in x.ravel()]
        return x.tolist()
    if isinstance(x, dict):
        return {str(k): to_jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [to_jsonable(v) for v in x]
    if hasattr(x, "__dataclass_fields__"):
        return {k: to_jsonable(getattr(x, k)) for k in x.__dataclass_fields__}
    if x is None or isinstance(x, str):
        return x
    return str(x)


def budget_to_json(b: Budget | None):
    return None if b is None else to_jsonable(b)


def ledger_to_json(ledger: CatalystLedger, states: bool = False) -> dict:
    entries = []
    for e in ledger.entries:
        item = {"label": e.label, "residual": float(e.residual), "multiplicity": int(e.multiplicity),
                "target_dependent": bool(e.target_dependent)}
        if states:
            item["declared"] = complex_matrix(e.declared.data)
            item["measured"] = complex_matrix(e.measured.data)
        entries.append(item)
    return {
        "entries": entries,
        "correlation_graph": [[a, b, float(w)] for a, b, w in ledger.correlation_graph],
        "max_residual": float(ledger.max_residual),
        "n_catalysts": int(ledger.n_catalysts),
        "tolerance": float(ledger.tolerance),
        "passed": bool(ledger.passed),
    }


def overlap_to_json(o: OverlapRecord) -> dict:
    return {"L": o.L, "m": o.m, "exact_value": o.exact_value, "lower_bound": o.lower_bound,
            "combinatorial_bound": o.combinatorial_bound}


def report_to_json(r: ProtocolReport, ledger_states: bool = False, skip: tuple = ()) -> dict:
    details = {k: v for k, v in r.details.items() if k not in skip}
    return {
        "kind": r.kind,
        "achieved_distance": float(r.achieved_distance),
        "budget": budget_to_json(r.budget),
        "ledger": ledger_to_json(r.ledger, ledger_states),
        "overlaps": [overlap_to_json(o) for o in r.overlaps],
        "mixture": [{"weight": float(w), "vector": to_jsonable(np.asarray(v, dtype=complex))} for w, v in r.mixture],
        "final_state": None if r.final_state is None else state_to_json(r.final_state),
        "decoupling_residual": to_jsonable(r.decoupling_residual),
        "details": to_jsonable(details),
        "passed": bool(r.passed),
    }


def dumps(obj: dict) -> str:
    """Deterministic JSON text: sorted keys, fixed indentation, trailing newline."""
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def csv_text(header: list, rows: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()
