__version__ = "0.1.0"

from .core import MaxLossError, ProblemInstance, QueryLedger, eval_fmax, subgrad_fmax
from .accel import AccelConfig, accelerate, solve_max_loss

__all__ = [
    "MaxLossError",
    "ProblemInstance",
    "QueryLedger",
    "eval_fmax",
    "subgrad_fmax",
    "AccelConfig",
    "accelerate",
    "solve_max_loss",
]
