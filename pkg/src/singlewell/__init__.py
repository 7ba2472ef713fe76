"""Eigenpairs of 1D semiclassical Schrodinger operators with single-well
potentials, and numerical verification of their decay envelopes, limit
measures, and boundary-derivative limits."""

__version__ = "0.1.0"

from .agmon import AgmonProfile, agmon_distance, agmon_profile
from .bounds import (
    bounds_report,
    energy_densities,
    geometric_control_check,
    lower_bound_report,
    agmon_upper_report,
    rough_gronwall_check,
    tunneling_check,
)
from .eigensolve import (
    Eigenpair,
    Grid,
    TridiagonalOperator,
    assemble,
    eigenpair,
    eigenvalues_in_window,
    residual,
    shooting_eigenvalue,
    sturm_count,
)
from .measure import (
    HusimiField,
    MeasureSpec,
    RegimeTarget,
    husimi,
    limit_measure,
    measure_convergence_report,
    predicted_boundary_traces,
    predicted_moment,
)
from .potential import (
    Perturbation,
    Potential,
    TurningPoints,
    WellCertificate,
    turning_points,
    validate_single_well,
)

__all__ = [
    "AgmonProfile", "agmon_distance", "agmon_profile",
    "bounds_report", "energy_densities", "geometric_control_check",
    "lower_bound_report", "agmon_upper_report", "rough_gronwall_check",
    "tunneling_check",
    "Eigenpair", "Grid", "TridiagonalOperator", "assemble", "eigenpair",
    "eigenvalues_in_window", "residual", "shooting_eigenvalue", "sturm_count",
    "HusimiField", "MeasureSpec", "RegimeTarget", "husimi", "limit_measure",
    "measure_convergence_report", "predicted_boundary_traces",
    "predicted_moment",
    "Perturbation", "Potential", "TurningPoints", "WellCertificate",
    "turning_points", "validate_single_well",
]
