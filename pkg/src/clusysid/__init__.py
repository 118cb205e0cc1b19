"""Clustered system identification for collections of linear time-invariant systems."""
from .algorithm import (
    Assignment,
    ModelSet,
    RunHistory,
    StepRule,
    estimate_cluster,
    frobenius_cost,
    model_update_step,
    run,
    safe_step_size,
    warm_init,
)
from .baselines import least_squares, least_squares_pooled, pooled_run, single_agent_run
from .errors import ConfigurationError, DegeneracyError
from .lti_sim import (
    BatchData,
    ClusterGroundTruth,
    Rollout,
    SystemSpec,
    collect_batches,
    sample_rollout,
    system_rng,
    verify_batch_relation,
)
from .metrics import (
    assumption_diagnostics,
    misclassification_count,
    separation,
    snr,
    spectral_error,
)
from .moments import impulse_blocks, state_input_covariance, suggested_iterations, theoretical_step_size

__version__ = "0.1.0"
