"""Verification harness: manufactured solutions, box oracle, equilibrium, stability and linear probes."""
from .box import BoxState, box_oracle, box_vs_pde
from .equilibrium import equilibrium_drift, equilibrium_residual
from .linop import eps_sweep, linearized_operator_residual
from .mms import CASES, MMSCase, mms_convergence
from .stability import StabilityReport, stability_experiment

__all__ = [
    "BoxState", "CASES", "MMSCase", "StabilityReport", "box_oracle", "box_vs_pde", "eps_sweep",
    "equilibrium_drift", "equilibrium_residual", "linearized_operator_residual", "mms_convergence",
    "stability_experiment",
]
