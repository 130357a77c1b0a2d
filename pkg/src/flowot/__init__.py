"""Contraction of transport distances along shrinking-scale metric families.

Two model surfaces (round sphere, flat square torus) carry scale families
g_tau = c(tau) g_std.  The package verifies, numerically and at desk scale,
that optimal transport costs between heat-type diffusions contract along
families satisfying the backward curvature rate bound, that the pointwise
second-variation inequality behind the contraction holds with quantifiable
slack, and that the space-time length machinery (weighted path length,
induced distance, normalized clock distance) behaves as derived.
"""

from .backend import active_backend, backend_reason
from .config import ExperimentConfig, build_cost, build_density, build_flow, load_config
from .costs import (
    AdmissibilityReport,
    CostFunction,
    PowerCost,
    TabulatedCost,
    admissibility_check,
    eval_cost,
    eval_cost_matrix,
    load_cost_table,
    power_cost,
)
from .coupling import (
    CoupledPair,
    closed_form_second_variation,
    coupled_hessian_bound,
    lemma_gap,
    make_pair,
    time_derivative_cost,
)
from .diffusion import (
    ScalarField,
    SpectralDensity,
    density_values,
    duality_functional,
    evaluate,
    evolve_conjugate,
    evolve_dual,
    fit_torus_field,
    fit_zonal_field,
    laplace_eigenvalues,
    mass,
    periodic_gaussian_density,
    uniform_density,
    zonal_bump_density,
)
from .errors import (
    AdmissibilityError,
    ConfigError,
    ConvergenceError,
    CutLocusError,
    FlowConstructionError,
    FlowDomainError,
    FlowotError,
    SuperRicciViolationError,
    UnderResolvedError,
)
from .geometry import (
    Model,
    PointCloud,
    ScaleFlow,
    ScaleLaw,
    cloud_for,
    distance,
    distance_matrix,
    geodesic_point,
    metric_scale,
    parallel_frame,
    scalar_curvature,
    sphere_cloud,
    std_distance,
    super_ricci_margin,
    torus_cloud,
)
from .lflow import (
    LClock,
    LPath,
    evolve_dual_lclock,
    frame_transport,
    harnack_K,
    l_distance,
    l_geodesic,
    l_length,
    l_wasserstein,
    partl_residual,
    summed_variation_check,
    theta,
    theta_record,
)
from .transport import (
    DiscreteMeasure,
    DualPotentials,
    TransportPlan,
    brute_force_uniform_value,
    dirac,
    duality_gap,
    solve_entropic,
    solve_exact,
    transport_cost,
    uniform_measure,
    verify_competitive_preservation,
    wasserstein_p,
)

__version__ = "0.1.0"
