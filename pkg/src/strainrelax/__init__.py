"""strainrelax: occupation-measure moment relaxations and quasiconvex
envelopes for stored energies convex in the Cauchy-Green strain."""

__version__ = "0.1.0"

from .poly import Polynomial, VariableSpace
from .energy import (EnergyDensity, StiffnessForm, anisotropic_energy,
                     check_frame_indifference, check_growth,
                     check_sos_convexity, custom_energy, hessian, svk_energy)

__all__ = [
    "__version__", "Polynomial", "VariableSpace", "EnergyDensity",
    "StiffnessForm", "svk_energy", "anisotropic_energy", "custom_energy",
    "hessian", "check_sos_convexity", "check_frame_indifference",
    "check_growth",
]
