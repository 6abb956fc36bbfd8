"""Streaming data balancer.

Learns per-example weights that simultaneously pull group prevalences toward
a target distribution and remove attribute/label correlations, then uses the
weights to subsample. Includes a bias auditor, a synthetic stream generator,
and an exact small-scale solver for verification.
"""

from .auditor import (
    AuditReport,
    PredictionRecord,
    audit,
    data_ab,
    data_rb,
    model_ab,
    model_rb,
    weighted_pearson,
)
from .biasvec import bias_matrix, bias_vector
from .core import (
    BalanceSpec,
    Dataset,
    Example,
    Hyperparams,
    Schedule,
    SolverState,
    WeightedExample,
    validate_example,
)
from .errors import DataBalanceError
from .oracle import ExactSolution, solve_exact
from .sampler import SampleDecision, subsample
from .solver import (
    DualLossSample,
    FitResult,
    dual_objective,
    fit,
    load_checkpoint,
    max_violation,
    primal_objective,
    save_checkpoint,
    search_eta,
    update,
    weigh,
    weigh_batch,
)
from .synth import StreamSpec, generate

__version__ = "0.1.0"

__all__ = [
    "AuditReport",
    "BalanceSpec",
    "DataBalanceError",
    "Dataset",
    "DualLossSample",
    "ExactSolution",
    "Example",
    "FitResult",
    "Hyperparams",
    "SampleDecision",
    "PredictionRecord",
    "Schedule",
    "SolverState",
    "StreamSpec",
    "WeightedExample",
    "audit",
    "bias_matrix",
    "bias_vector",
    "data_ab",
    "data_rb",
    "dual_objective",
    "fit",
    "generate",
    "load_checkpoint",
    "max_violation",
    "model_ab",
    "model_rb",
    "primal_objective",
    "save_checkpoint",
    "search_eta",
    "solve_exact",
    "subsample",
    "update",
    "validate_example",
    "weigh",
    "weigh_batch",
    "weighted_pearson",
]
