"""Fractionally damped wave equation: Newmark time stepping with discrete
Caputo damping, adjoint gradients, and photoacoustic initial-pressure
reconstruction."""

from .fracquad import (
    ConvolutionWeights,
    TimeGrid,
    apply_frac_convolution,
    galerkin_weights,
    hat_I_alpha,
    l1_weights,
    quadrature_gram,
    tilde_I_alpha,
)
from .fem import (
    StructuredMesh,
    SurfaceSampler,
    apply_dirichlet,
    assemble_mass,
    assemble_stiffness,
    circle_sampler,
    omega_interior_nodes,
    rectangle_mesh,
    surface_load,
    trace_on_sigma,
)
from .timestepper import (
    NewmarkParams,
    SemidiscreteSystem,
    StateHistory,
    initial_acceleration,
    run_forward,
    step_effective_mass,
    step_effective_stiffness,
    three_stage_residual,
)
from .oracle import exact_dw_half, exact_field, exact_w_half
from .pat import ObservationTrace, PATModel, build_pat_model
from .adjoint import (
    adjoint_identity_check,
    compute_gradient,
    gradient_riesz,
    solve_adjoint,
)
from .recon import (
    BiLaplacianPrior,
    OptimizerSettings,
    ReconProblem,
    apply_prior_inverse,
    cost,
    disk_inclusion,
    generate_data,
    minimize,
)
from .verification import (
    ConvergenceReport,
    coercivity_suite,
    convergence_study,
    lemma1_check,
    lemma2_check,
    lemma_suite,
)

__version__ = "0.1.0"
