"""Python bindings for the driftlab core library."""

from ._core import (
    Checkpoint,
    MmdEstimate,
    Schedule,
    TrainConfig,
    cumulative_error_perfect,
    drift_ratio,
    linear_schedule,
    load_checkpoint,
    measure_drift,
    mmd,
    mmd_gradient,
    parse_config,
    run_oracle,
    sample,
    train,
)

__all__ = [
    "Checkpoint",
    "MmdEstimate",
    "Schedule",
    "TrainConfig",
    "cumulative_error_perfect",
    "drift_ratio",
    "linear_schedule",
    "load_checkpoint",
    "measure_drift",
    "mmd",
    "mmd_gradient",
    "parse_config",
    "run_oracle",
    "sample",
    "train",
]
