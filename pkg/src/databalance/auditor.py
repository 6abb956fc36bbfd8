"""Bias measurements on data and on model predictions.

Representation bias of a set of indicators is the largest deviation of any
category's (weighted) prevalence from its target. Association bias is the
largest difference, over attribute/label pairs, between a label's prevalence
on the two sides of an attribute indicator. Both are computed under the
empirical measure reweighted by the supplied weights, so the same functions
audit raw data, weighted data, and kept subsets.

All statistics derive from a single pass of weighted moments, and moment
accumulators merge associatively, so audits over shards can be map-reduced.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import Dataset
from .errors import DegenerateGroup, DimensionMismatch, EmptyStream


@dataclass
class PredictionRecord:
    """One model output: probabilities per category, optional true attributes.

    ``probs`` entries lie in [0, 1]; rows fed to the representation measure
    must additionally form a distribution (sum 1 within 1e-9). ``s`` carries
    the ground-truth sensitive attributes needed by the association measure.
    """

    probs: np.ndarray
    s: np.ndarray | None = None

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64).reshape(-1)
        if np.any(self.probs < -1e-12) or np.any(self.probs > 1.0 + 1e-12):
            raise ValueError(f"probs entries must lie in [0, 1]: {self.probs}")
        if self.s is not None:
            self.s = np.asarray(self.s, dtype=np.float64).reshape(-1)
            if not np.all((self.s == 0.0) | (self.s == 1.0)):
                raise ValueError(f"s entries must be 0 or 1: {self.s}")


def _as_prob_matrix(predictions) -> np.ndarray:
    if isinstance(predictions, np.ndarray):
        return np.asarray(predictions, dtype=np.float64)
    rows = list(predictions)
    if rows and isinstance(rows[0], PredictionRecord):
        return np.stack([r.probs for r in rows]) if rows else np.empty((0, 0))
    return np.asarray(rows, dtype=np.float64)


@dataclass
class Moments:
    """Weighted first and second moments of (s, y) over a stream."""

    m: int
    c: int
    w_total: float = 0.0
    s_sum: np.ndarray = None
    y_sum: np.ndarray = None
    sy_sum: np.ndarray = None

    def __post_init__(self):
        if self.s_sum is None:
            self.s_sum = np.zeros(self.m)
        if self.y_sum is None:
            self.y_sum = np.zeros(self.c)
        if self.sy_sum is None:
            self.sy_sum = np.zeros((self.m, self.c))

    def update(self, S: np.ndarray, Y: np.ndarray, weights: np.ndarray | None = None):
        S = np.asarray(S, dtype=np.float64)
        Y = np.asarray(Y, dtype=np.float64)
        if weights is None:
            weights = np.ones(S.shape[0])
        weights = np.asarray(weights, dtype=np.float64)
        self.w_total += float(np.sum(weights))
        self.s_sum += weights @ S
        self.y_sum += weights @ Y
        self.sy_sum += (S * weights[:, None]).T @ Y
        return self

    def merge(self, other: "Moments") -> "Moments":
        if (self.m, self.c) != (other.m, other.c):
            raise DimensionMismatch("cannot merge moments of different shapes")
        self.w_total += other.w_total
        self.s_sum += other.s_sum
        self.y_sum += other.y_sum
        self.sy_sum += other.sy_sum
        return self

    @property
    def s_mean(self) -> np.ndarray:
        return self.s_sum / self.w_total

    @property
    def y_mean(self) -> np.ndarray:
        return self.y_sum / self.w_total

    @property
    def sy_mean(self) -> np.ndarray:
        return self.sy_sum / self.w_total


def _moments(dataset: Dataset, weights) -> Moments:
    if len(dataset) == 0:
        raise EmptyStream("audit requires at least one example")
    if weights is not None:
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != (len(dataset),):
            raise DimensionMismatch("weights length does not match dataset")
        if float(np.sum(weights)) <= 0.0:
            raise EmptyStream("total weight is zero")
    return Moments(dataset.m, dataset.c).update(dataset.S, dataset.Y, weights)


def data_rb(dataset: Dataset, pi: np.ndarray, weights: np.ndarray | None = None) -> float:
    """Representation bias: max_k |pi_k - weighted prevalence of s_k|."""
    pi = np.asarray(pi, dtype=np.float64).reshape(-1)
    mom = _moments(dataset, weights)
    if pi.shape != (dataset.m,):
        raise DimensionMismatch(f"pi has length {pi.size}, expected {dataset.m}")
    return float(np.max(np.abs(pi - mom.s_mean)))


@dataclass
class AssociationResult:
    """Max association bias plus the per-pair residual matrix (m x c).

    Pairs whose attribute has zero weighted mass on one side are NaN in the
    matrix, listed in `skipped`, and excluded from the max.
    """

    value: float
    residuals: np.ndarray
    skipped: list[int] = field(default_factory=list)


def data_ab(dataset: Dataset, weights: np.ndarray | None = None) -> AssociationResult:
    """Association bias: max over (k, r) of |E[y_r | s_k=1] - E[y_r | s_k=0]|.

    Computed under the weighted empirical measure. Attributes with an empty
    group on either side are skipped with a Warning rather than poisoning
    the summary.
    """
    mom = _moments(dataset, weights)
    m, c = dataset.m, dataset.c
    residuals = np.full((m, c), np.nan)
    skipped = []
    for k in range(m):
        mass1 = mom.s_sum[k]
        mass0 = mom.w_total - mass1
        if mass1 <= 0.0 or mass0 <= 0.0:
            skipped.append(k)
            continue
        cond1 = mom.sy_sum[k] / mass1
        cond0 = (mom.y_sum - mom.sy_sum[k]) / mass0
        residuals[k] = np.abs(cond1 - cond0)
    if skipped:
        warnings.warn(
            f"association bias: attribute(s) {skipped} have an empty group "
            "on one side and were skipped",
            UserWarning,
            stacklevel=2,
        )
    finite = residuals[np.isfinite(residuals)]
    value = float(np.max(finite)) if finite.size else 0.0
    return AssociationResult(value=value, residuals=residuals, skipped=skipped)


@dataclass
class PearsonResult:
    """Weighted Pearson correlations per (attribute, label) pair.

    Zero-variance pairs are NaN and excluded from the median/max summaries,
    which are taken over absolute values.
    """

    matrix: np.ndarray
    median_abs: float
    max_abs: float


def weighted_pearson(
    dataset: Dataset,
    weights: np.ndarray | None = None,
    pairs: list[tuple[int, int]] | None = None,
) -> PearsonResult:
    """Weighted Pearson correlation for each (s_k, y_r) pair.

    For binary variables the weighted covariance and variances follow from
    the weighted prevalences. `pairs` restricts which (k, r) combinations
    enter the matrix and summaries; the default is all of them.
    """
    mom = _moments(dataset, weights)
    m, c = dataset.m, dataset.c
    p_s = mom.s_mean
    p_y = mom.y_mean
    cov = mom.sy_mean - np.outer(p_s, p_y)
    var_s = p_s * (1.0 - p_s)
    var_y = p_y * (1.0 - p_y)
    denom = np.sqrt(np.outer(var_s, var_y))
    matrix = np.full((m, c), np.nan)
    mask = denom > 0.0
    matrix[mask] = cov[mask] / denom[mask]
    if pairs is not None:
        selected = np.full((m, c), False)
        for k, r in pairs:
            selected[k, r] = True
        matrix = np.where(selected, matrix, np.nan)
    finite = np.abs(matrix[np.isfinite(matrix)])
    if finite.size:
        return PearsonResult(matrix, float(np.median(finite)), float(np.max(finite)))
    return PearsonResult(matrix, float("nan"), float("nan"))


def _check_distributions(probs: np.ndarray) -> None:
    if np.any(probs < -1e-12) or np.any(probs > 1.0 + 1e-12):
        raise ValueError("prediction probabilities must lie in [0, 1]")
    sums = probs.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > 1e-9):
        raise ValueError("prediction rows must sum to 1 within 1e-9")


def model_rb(predictions, pi: np.ndarray) -> float:
    """Representation bias of a classifier: max_k |pi_k - mean(probs_k)|.

    `predictions` is an (n, m) array of probability distributions, or a
    sequence of PredictionRecord.
    """
    probs = _as_prob_matrix(predictions)
    if probs.ndim != 2 or probs.shape[0] == 0:
        raise EmptyStream("model_rb requires a non-empty (n, m) array")
    pi = np.asarray(pi, dtype=np.float64).reshape(-1)
    if probs.shape[1] != pi.size:
        raise DimensionMismatch("probs width does not match pi")
    _check_distributions(probs)
    return float(np.max(np.abs(pi - probs.mean(axis=0))))


def model_ab(predictions, S: np.ndarray | None = None) -> float:
    """Association bias of a model: max_{k,r} |E[f_r|s_k=1] - E[f_r|s_k=0]|.

    `predictions` is an (n, c) array with S supplied separately, or a
    sequence of PredictionRecord carrying ground-truth attributes.
    """
    if S is None:
        rows = list(predictions)
        if not rows or not isinstance(rows[0], PredictionRecord):
            raise DimensionMismatch("model_ab needs ground-truth attributes S")
        if any(r.s is None for r in rows):
            raise DimensionMismatch(
                "every PredictionRecord must carry ground-truth s")
        S = np.stack([r.s for r in rows])
        probs = np.stack([r.probs for r in rows])
    else:
        probs = _as_prob_matrix(predictions)
    S = np.asarray(S, dtype=np.float64)
    if probs.ndim != 2 or probs.shape[0] == 0:
        raise EmptyStream("model_ab requires a non-empty (n, c) array")
    if S.shape[0] != probs.shape[0]:
        raise DimensionMismatch("probs and S row counts disagree")
    if np.any(probs < -1e-12) or np.any(probs > 1.0 + 1e-12):
        raise ValueError("prediction probabilities must lie in [0, 1]")
    count1 = S.sum(axis=0)
    if np.any(count1 == 0.0) or np.any(count1 == S.shape[0]):
        bad = [
            int(k)
            for k in range(S.shape[1])
            if count1[k] == 0.0 or count1[k] == S.shape[0]
        ]
        raise DegenerateGroup(f"attribute(s) {bad} have an empty group on one side")
    cond1 = (S.T @ probs) / count1[:, None]
    cond0 = ((1.0 - S).T @ probs) / (S.shape[0] - count1)[:, None]
    return float(np.max(np.abs(cond1 - cond0)))


@dataclass
class Measures:
    """One side (before or after) of an audit."""

    rb: float
    ab: float
    ab_residuals: np.ndarray
    pearson: PearsonResult
    prevalence: np.ndarray
    skipped: list[int]

    def to_dict(self) -> dict:
        return {
            "rb": self.rb,
            "ab": self.ab,
            "ab_residuals": _matrix_to_list(self.ab_residuals),
            "pearson": _matrix_to_list(self.pearson.matrix),
            "pearson_median_abs": _json_float(self.pearson.median_abs),
            "pearson_max_abs": _json_float(self.pearson.max_abs),
            "prevalence": [float(x) for x in self.prevalence],
            "skipped_attributes": self.skipped,
        }


@dataclass
class AuditReport:
    """Before/after bias audit of a dataset under a weighting."""

    pi: np.ndarray
    before: Measures
    after: Measures | None = None

    def to_dict(self) -> dict:
        doc = {"pi": [float(x) for x in self.pi], "before": self.before.to_dict()}
        if self.after is not None:
            doc["after"] = self.after.to_dict()
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def render(self) -> str:
        """Plain-text summary table."""
        rows = [("before", self.before)]
        if self.after is not None:
            rows.append(("after", self.after))
        lines = []
        lines.append("absolute Pearson correlations and bias measures")
        lines.append(
            f"{'':10s} {'RB':>8s} {'AB':>8s} {'|rho| median':>13s} {'|rho| max':>10s}"
        )
        for name, measures in rows:
            lines.append(
                f"{name:10s} {measures.rb:8.4f} {measures.ab:8.4f} "
                f"{measures.pearson.median_abs:13.4f} {measures.pearson.max_abs:10.4f}"
            )
        lines.append("")
        lines.append("group prevalence (target | before" + (
            " | after)" if self.after is not None else ")"
        ))
        for k in range(len(self.pi)):
            row = f"  s[{k}]  {self.pi[k]:.4f} | {self.before.prevalence[k]:.4f}"
            if self.after is not None:
                row += f" | {self.after.prevalence[k]:.4f}"
            lines.append(row)
        return "\n".join(lines)


def _measures(dataset: Dataset, pi: np.ndarray, weights) -> Measures:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        ab = data_ab(dataset, weights)
        pearson = weighted_pearson(dataset, weights)
    mom = _moments(dataset, weights)
    return Measures(
        rb=data_rb(dataset, pi, weights),
        ab=ab.value,
        ab_residuals=ab.residuals,
        pearson=pearson,
        prevalence=mom.s_mean,
        skipped=ab.skipped,
    )


def audit(
    dataset: Dataset, pi: np.ndarray, weights: np.ndarray | None = None
) -> AuditReport:
    """Audit a dataset; with weights, report unweighted vs weighted side by side."""
    pi = np.asarray(pi, dtype=np.float64).reshape(-1)
    before = _measures(dataset, pi, None)
    after = _measures(dataset, pi, weights) if weights is not None else None
    return AuditReport(pi=pi, before=before, after=after)


def _json_float(x: float):
    return None if not np.isfinite(x) else float(x)


def _matrix_to_list(mat: np.ndarray) -> list:
    return [[_json_float(x) for x in row] for row in mat]
