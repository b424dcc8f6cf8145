"""Load-management toolkit for two-layer anycast CDNs.

Models a primary layer of capacity-limited proxies with co-located DNS
servers, all behind one anycast address, plus a far data-center layer.
Includes the provably-convergent distributed price iteration (with its
FastControl coordination channel), the greedy feedback heuristic as an
ODE with full stability analysis, and a seeded experiment harness.
"""

from .errors import AnycastLBError
from .model import (
    CostParams,
    SystemInstance,
    effective_self_correlation,
    instance_from_dict,
    load_instance,
    load_map,
    load_matrix,
    routing_matrix,
    validate_correlation,
)
from .costs import (
    minimize_scalar_convex,
    offload_cost,
    proxy_cost,
    solve_sub_S,
    solve_sub_x,
    total_cost,
)
from .dual import (
    ConvergenceReport,
    DualState,
    StepSizePolicy,
    beta_projection,
    dual_step,
    reference_optimum,
    run_dual,
    step_size,
    supergradient_norm_bound,
)
from .fastcontrol import (
    AnycastChannel,
    LocalObservation,
    NodeAgent,
    deliver,
    generation_rates,
    recover_beta,
    run_distributed,
    validate_channel_support,
)
from .greedy import (
    FixedPointReport,
    OdeConfig,
    StabilityVerdict,
    Trajectory,
    TwoNodeVerdict,
    classify_fixed_point,
    detect_uncontrollable_overload,
    find_fixed_points,
    integrate,
    jacobian,
    orbit_average_load,
    stability_polytope_check,
    stability_report,
    two_node_classify,
    vector_field,
)
from .experiments import (
    CorrelationSpec,
    ExperimentConfig,
    SummaryStats,
    TrialResult,
    config_from_dict,
    config_from_json,
    generate_correlation,
    generate_instance,
    run_sweep,
    run_trial,
    summarize,
)

__version__ = "0.1.0"
