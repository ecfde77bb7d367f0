"""Classical interaction-picture-like evolution on the space of free solutions.

The three descriptions of a split system H = H0 + H1:

* phase space: the state moves along the flow of H (``evolve_direct``);
* space of motions: the state is fixed, observables move (``evolve_heisenberg``);
* space of free motions M_F: the state drifts under the pulled-back
  interaction while observables are read through the free flow
  (``evolve_interaction`` + ``reconstruct``).
"""

__version__ = "0.1.0"

from .errors import MFPictureError
from .freespace import FreeFlow, FreeSolutionPoint, MTangentVector
from .numeric import IntegratorConfig
from .pictures import (
    EquivalenceReport,
    Trajectory,
    equivalence_report,
    evolve_direct,
    evolve_heisenberg,
    evolve_interaction,
    reconstruct,
)
from .systems import PhasePoint, SplitSystem, SystemSpec, TangentPoint, load_system

__all__ = [
    "EquivalenceReport",
    "FreeFlow",
    "FreeSolutionPoint",
    "IntegratorConfig",
    "MFPictureError",
    "MTangentVector",
    "PhasePoint",
    "SplitSystem",
    "SystemSpec",
    "TangentPoint",
    "Trajectory",
    "equivalence_report",
    "evolve_direct",
    "evolve_heisenberg",
    "evolve_interaction",
    "load_system",
    "reconstruct",
]
