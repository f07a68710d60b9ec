"""Python access to the rlab environment, tabular learners and training commands."""

from ._rlab import (
    RunnerEnv,
    StepResult,
    SumTree,
    Summary,
    cliff,
    double_dqn_target,
    dqn_target,
    evaluate,
    is_weights,
    preprocess,
    summarize,
    train,
)

__all__ = [
    "RunnerEnv",
    "StepResult",
    "SumTree",
    "Summary",
    "cliff",
    "double_dqn_target",
    "dqn_target",
    "evaluate",
    "is_weights",
    "preprocess",
    "summarize",
    "train",
]
