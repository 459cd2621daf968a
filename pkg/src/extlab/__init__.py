"""extlab: a numerical laboratory for finite-time extinction ODEs.

Systems y' = -H(y) A y + f(t) with H positively homogeneous of degree
-alpha hit zero at a finite time T*.  The package integrates them to the
terminal regime, identifies the eigenvalue Lambda selected by the
dynamics, fits the profile y(t) ~ (T* - t)^(1/alpha) xi*, and checks the
normalization alpha * Lambda * H(xi*) = 1 together with the correction
power laws around it.
"""

from ._version import __version__
from .analysis import (
    AsymptoticProfile,
    VerificationReport,
    dirichlet_quotient_series,
    estimate_extinction_time,
    estimate_profile,
    fit_power_law,
    identify_eigenvalue,
    verify_main_theorem,
)
from .config import ExperimentConfig, config_hash, load_config, parse_config
from .dynamics import (
    IntegratorOptions,
    PerturbationSpec,
    SystemSpec,
    Trajectory,
    bounded_perturbation,
    custom_perturbation,
    extinction_radius,
    integrate_desingularized,
    integrate_direct,
    no_perturbation,
    to_symmetric_frame,
    transformed_system,
)
from .errors import ExtlabError
from .homog import (
    HomogeneousFn,
    compose_linear,
    egs_a1,
    egs_a2,
    egs_c,
    estimate_degree,
    from_expression,
    power_norm,
    probe_holder,
    sphere_extrema,
    weighted_pnorm,
)
from .oracle import (
    SpecialCaseProfile,
    reference_integrate,
    scalar_closed_form,
    special_case_profile,
)
from .runner import RunSummary, run_experiment, sweep
from .serialize import export_trajectory, read_trajectory
from .spectral import SpectralData, spectral_gap, validate_and_decompose

__all__ = [
    "__version__",
    "ExtlabError",
    # spectral
    "SpectralData", "validate_and_decompose", "spectral_gap",
    # homogeneous catalog
    "HomogeneousFn", "power_norm", "weighted_pnorm", "egs_a1", "egs_a2",
    "egs_c", "from_expression", "compose_linear", "estimate_degree",
    "sphere_extrema", "probe_holder",
    # dynamics
    "SystemSpec", "PerturbationSpec", "IntegratorOptions", "Trajectory",
    "no_perturbation", "bounded_perturbation", "custom_perturbation",
    "integrate_direct", "integrate_desingularized", "to_symmetric_frame",
    "transformed_system", "extinction_radius",
    # oracle
    "scalar_closed_form", "SpecialCaseProfile", "special_case_profile",
    "reference_integrate",
    # analysis
    "AsymptoticProfile", "VerificationReport", "estimate_extinction_time",
    "dirichlet_quotient_series", "identify_eigenvalue", "fit_power_law",
    "estimate_profile", "verify_main_theorem",
    # configuration and execution
    "ExperimentConfig", "parse_config", "load_config", "config_hash",
    "RunSummary", "run_experiment", "sweep",
    "export_trajectory", "read_trajectory",
]
