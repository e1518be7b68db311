"""Entanglement dynamics of long-range spin chains: exact, closed-form and DTWA engines."""

from .moments import CollectiveMoments, MomentTable
from .spinmodel import CouplingMatrix, Kind, ModelSpec, Schedule, mean_coupling, power_law_couplings

__all__ = [
    "CollectiveMoments",
    "CouplingMatrix",
    "Kind",
    "ModelSpec",
    "MomentTable",
    "Schedule",
    "mean_coupling",
    "power_law_couplings",
]
__version__ = "0.1.0"
