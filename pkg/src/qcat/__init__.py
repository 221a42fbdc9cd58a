"""Simulation and numerical verification of catalytic coherence transformations."""

from .qcore import (
    DensityMatrix,
    KrausChannel,
    QcatError,
    StateError,
    Subsystem,
    SystemLayout,
    energy,
    trace_distance,
)

__version__ = "0.1.0"

__all__ = [
    "DensityMatrix",
    "KrausChannel",
    "QcatError",
    "StateError",
    "Subsystem",
    "SystemLayout",
    "energy",
    "trace_distance",
    "__version__",
]
