"""Switching-feedback stabilization of bilinear PDE models, with certificates.

The package simulates two concrete closed loops (a spectral heat model and a
left-moving transport model with boundary coupling), estimates the
admissibility and observability constants that the decay theory consumes,
assembles exponential-decay certificates, and verifies them against
simulated trajectories.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .certificates import (
    DecompositionReport,
    EnsembleSpec,
    boundary_regularity_check,
    check_decomposition,
    compute_theorem2_certificate,
    compute_theorem3_certificate,
    estimate_admissibility_M,
    estimate_observability_delta,
    formula_reference,
    search_rho1,
    smoothing_constant_L,
    tail_audit,
)
from .closedloop import (
    heat_closed_loop_solve,
    transport_closed_loop_solve,
    vpf_fixed_point_solve,
)
from .core import (
    GridFunction,
    ModalVector,
    SpectralDiffusionModel,
    StabilityCertificate,
    Trajectory,
    TransportModel,
    contraction_condition_check,
    dirichlet_eigenvalues,
    grid_to_modal,
    modal_to_grid,
    model_fingerprint,
    potential_matrix,
    sine_basis_matrix,
    trapezoid_weights,
    uniform_grid,
)
from .semigroups import (
    control_apply,
    diag_semigroup_apply,
    perturbed_semigroup_apply,
    transport_semigroup_apply,
    yosida_control_apply,
)
from .verifier import (
    DecayReport,
    Lemma1Report,
    fit_decay_rate,
    oracle_expm_compare,
    transport_characteristics_oracle,
    verify_decay,
    verify_lemma1,
)

__all__ = [
    "__version__",
    "DecayReport",
    "DecompositionReport",
    "EnsembleSpec",
    "GridFunction",
    "Lemma1Report",
    "ModalVector",
    "SpectralDiffusionModel",
    "StabilityCertificate",
    "Trajectory",
    "TransportModel",
    "boundary_regularity_check",
    "check_decomposition",
    "compute_theorem2_certificate",
    "compute_theorem3_certificate",
    "contraction_condition_check",
    "control_apply",
    "diag_semigroup_apply",
    "dirichlet_eigenvalues",
    "estimate_admissibility_M",
    "estimate_observability_delta",
    "fit_decay_rate",
    "formula_reference",
    "grid_to_modal",
    "heat_closed_loop_solve",
    "modal_to_grid",
    "model_fingerprint",
    "oracle_expm_compare",
    "perturbed_semigroup_apply",
    "potential_matrix",
    "search_rho1",
    "sine_basis_matrix",
    "smoothing_constant_L",
    "tail_audit",
    "transport_characteristics_oracle",
    "transport_closed_loop_solve",
    "transport_semigroup_apply",
    "trapezoid_weights",
    "uniform_grid",
    "verify_decay",
    "verify_lemma1",
    "vpf_fixed_point_solve",
    "yosida_control_apply",
]
