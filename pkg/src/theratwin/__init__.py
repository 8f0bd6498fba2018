"""Desk-scale theranostic digital twin.

Simulates radiopharmaceutical kinetics in a virtual patient, computes
organ-level absorbed doses, trains a physics-informed neural surrogate of
the kinetics, and optimizes multi-cycle dosing policies with a tabular MDP
solver. Exposed as a library, CLI (``theratwin``), and HTTP service.
"""

from .dosimetry import (
    DoseReport,
    absorbed_dose,
    dose_from_trajectory,
    s_factor_from_energetics,
    time_integrated_activity,
)
from .dss import (
    CohortEvaluation,
    Episode,
    MdpModel,
    MdpSpec,
    Policy,
    Recommendation,
    RewardConfig,
    baseline_policy,
    build_mdp,
    evaluate_policy,
    policy_evaluation,
    policy_iteration,
    q_learning,
    recommend,
    reward,
    simulate_cycle,
    surrogate_cycle_batch,
)
from .errors import (
    DomainError,
    GradientError,
    IntegrationError,
    TailFitError,
    TheratwinError,
    TrainingError,
)
from .metrics import (
    ProfileBand,
    RunMatrix,
    cvar,
    iqr,
    performance_profile,
    sampling_efficiency,
)
from .pbpk import (
    COMPARTMENTS,
    TARGET_ORGANS,
    CohortSpec,
    PatientParams,
    Trajectory,
    derivative,
    integrate,
    sample_cohort,
)
from .surrogate import (
    SurrogateParams,
    TrainConfig,
    TrainReport,
    forward,
    grad,
    grad_total,
    loss_ic,
    loss_ode,
    loss_phys,
    loss_total,
    predict,
    time_derivative,
    train,
)

__version__ = "0.1.0"
