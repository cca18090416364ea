"""Quantum-classical correspondence in the Rabi-Stark model: mean-field
dynamics, Fock-space evolution and entanglement maps over phase space."""

__version__ = "0.1.0"

from .model import ModelParams, PhasePoint, eom_rhs, hcl_energy, solve_p2_on_section  # noqa: E402
from .quantum import FockTruncation  # noqa: E402

__all__ = ["ModelParams", "PhasePoint", "FockTruncation", "eom_rhs", "hcl_energy", "solve_p2_on_section",
           "__version__"]
