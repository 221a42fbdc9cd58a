"""Run-time knobs shared across modules."""

import os

DEFAULT_DIM_CAP = 2 ** 14
COHERENCE_TOL = 1e-9
RESTORATION_TOL = 1e-9
COVARIANCE_TOL = 1e-9
LADDER_CAP = 64

# dense synthesis channels above this size switch to the factorised evaluator
DENSE_SYNTH_CAP = 1024


def dim_cap() -> int:
    """Joint-dimension cap, overridable through ``QCAT_DIM_CAP``."""
    raw = os.environ.get("QCAT_DIM_CAP")
    if raw is None or raw.strip() == "":
        return DEFAULT_DIM_CAP
    try:
        value = int(raw)
    except ValueError as exc:
        raise ValueError(f"QCAT_DIM_CAP must be an integer, got {raw!r}") from exc
    if value < 1:
        raise ValueError("QCAT_DIM_CAP must be positive")
    return value
