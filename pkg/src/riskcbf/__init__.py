"""Risk-perception-aware safety filtering toolkit.

Perceived-risk models (expected risk, CVaR, cumulative prospect theory)
over uncertain spatial cost fields, barrier-based safety filtering with
a closed-form QP, and a 2D simulator for agents avoiding moving
obstacles.
"""

from ._kernels import NUMBA_ENABLED
from .barrier import (
    AffineConstraint,
    BarrierConfig,
    FeasibilityDiagnostics,
    InfeasibleConstraintError,
    ProbeResult,
    barrier_value,
    constraint,
    control_set_probe,
    feasibility_margin,
    min_compose,
    qp_filter,
)
from .config import Config, ConfigError, load_config
from .distributions import (
    DiscreteCost,
    discretize_truncated_gaussian,
    std_normal_cdf,
    std_normal_pdf,
    std_normal_quantile,
)
from .field import (
    CostFieldParams,
    FieldGrid,
    InclusivenessReport,
    VersatilityReport,
    cost_gradients,
    cost_mean,
    cost_sigma,
    inclusiveness_audit,
    level_set,
    perceived_risk,
    rasterize,
    risk_gradient,
    safe_mask,
    versatility_audit,
)
from .risk import (
    CPT,
    CVaR,
    ExpectedRisk,
    RiskPartials,
    RiskSpec,
    SingularPartialError,
    cpt_closed_form,
    cpt_value,
    cvar_gaussian_closed_form,
    cvar_value,
    decision_weights,
    er_value,
    parse_spec,
    partials,
    prob_weight,
    risk_value,
    spec_label,
    utility,
)
from .sim import (
    ComparisonRow,
    ObstacleModel,
    Scenario,
    SimLog,
    SimStep,
    SingleIntegrator,
    Unicycle,
    compare_models,
    default_obstacle_speed,
    multi_obstacle_scenario,
    nominal_control,
    run,
    single_obstacle_scenario,
    step_obstacle,
    unicycle_transform,
)

__version__ = "0.1.0"
