"""cyllab: a numerical laboratory for perturbed Cauchy-Riemann cylinders.

Solves ``(d_s + J0 d_t) u = eps V(u)`` on finite cylinders with mode-split
spectral boundary data, verifies the interior decay estimates of the
center-of-mass machinery at desk scale, and reproduces the degeneration of
long thin cylinders into two end disks joined by a flow line of the
limiting vector field.
"""

__version__ = "0.1.0"

from cyllab.cylinder import (
    Cylinder,
    SpectralField,
    Window,
    apply_delbar,
    poincare_check,
    sup_derivative_norm,
    window_sobolev_sq,
)
from cyllab.solver import (
    SolveReport,
    SpectralBoundaryData,
    make_instance,
    solve_linear,
    solve_nonlinear,
)
from cyllab.vfield import (
    FlowSegment,
    GradientField,
    LinearField,
    MonomialField,
    RotationField,
    VectorFieldSequence,
    eval_dv,
    eval_v,
    flow_ode,
    mean_value_matrix,
)
from cyllab.estimates import (
    BumpFunction,
    CenterOfMassCurve,
    EstimateConstants,
    GammaProfile,
    build_bump,
    center_of_mass,
    check_diff_inequality,
    com_residual,
    convolution_window_check,
    elliptic_constant_probe,
    exp_bound_check,
    gamma_profile,
    pointwise_decay_check,
    window_decay_check,
)
from cyllab.degeneration import (
    DegenerationReport,
    FamilySchedule,
    NeckDecomposition,
    compare_flowline,
    end_pieces,
    estimate_endpoints,
    rescale_trace,
    run_family,
    select_rho,
)

__all__ = [name for name in dir() if not name.startswith("_")]
