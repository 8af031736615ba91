"""Opacity verification for finite stochastic systems with metric outputs.

The package checks whether an outside observer that sees outputs up to a
finite precision can deduce secret information about a system's state.
Two notions are supported: whether the *initial* state was secret, and
whether the *current* state is secret.  Both come with a probabilistic
confidence level, verified exactly on finite models and transferred to
continuous-state models through finite abstractions.
"""

from opaquemdp.model import (
    FiniteGmdp,
    ValidationReport,
    check_initial_assumption,
    eps_ball,
    initial_assumption_violations,
    output_distance,
    validate,
)
from opaquemdp.estimators import (
    CurrentEstimatorState,
    EstimatorGmdp,
    InitialEstimatorState,
    build_current_estimator,
    build_initial_estimator,
    initial_state_estimate,
)
from opaquemdp.reachability import (
    OpacityVerdict,
    ReachabilityResult,
    StateClassification,
    brute_force_max_violation,
    classify_states,
    exact_violation_probability,
    value_iteration,
    verify_opacity,
)
from opaquemdp.relations import (
    GuaranteeTransfer,
    RelationCheckReport,
    RelationFailure,
    StateRelation,
    check_cursop,
    check_initsop,
    lifting_exists,
    max_coupling_mass,
    transfer_guarantee,
)
from opaquemdp.abstraction import (
    AbstractionParams,
    ContinuousAffineSystem,
    DeltaIssCertificate,
    FeasibilityReport,
    build_abstraction,
    check_cursop_params,
    check_initsop_params,
    gaussian_cell_masses,
    relation_radius,
)
from opaquemdp.montecarlo import (
    EstimateReport,
    SimulationConfig,
    estimate_violation,
    sample_trajectory,
)

__version__ = "0.1.0"

__all__ = [
    "FiniteGmdp",
    "ValidationReport",
    "validate",
    "output_distance",
    "eps_ball",
    "check_initial_assumption",
    "initial_assumption_violations",
    "InitialEstimatorState",
    "CurrentEstimatorState",
    "EstimatorGmdp",
    "build_initial_estimator",
    "build_current_estimator",
    "initial_state_estimate",
    "StateClassification",
    "ReachabilityResult",
    "OpacityVerdict",
    "classify_states",
    "value_iteration",
    "exact_violation_probability",
    "brute_force_max_violation",
    "verify_opacity",
    "StateRelation",
    "RelationFailure",
    "RelationCheckReport",
    "GuaranteeTransfer",
    "max_coupling_mass",
    "lifting_exists",
    "check_initsop",
    "check_cursop",
    "transfer_guarantee",
    "DeltaIssCertificate",
    "ContinuousAffineSystem",
    "AbstractionParams",
    "FeasibilityReport",
    "check_initsop_params",
    "check_cursop_params",
    "relation_radius",
    "gaussian_cell_masses",
    "build_abstraction",
    "SimulationConfig",
    "EstimateReport",
    "sample_trajectory",
    "estimate_violation",
    "__version__",
]
