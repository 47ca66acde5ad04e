from taplab.core.functionals import parisi_value, tap_value
from taplab.core.measures import AtomicMeasure, EmpiricalMu, PrefixSpec
from taplab.core.mixture import Mixture
from taplab.core.parisi_pde import GridSpec, ParisiSolution, solve

__all__ = [
    "AtomicMeasure",
    "EmpiricalMu",
    "GridSpec",
    "Mixture",
    "ParisiSolution",
    "PrefixSpec",
    "parisi_value",
    "solve",
    "tap_value",
]
