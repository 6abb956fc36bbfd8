"""Seeded generators for synthetic (s, y, u) streams.

Attributes are independent Bernoulli columns with requested prevalences.
Each label column is drawn from a linear probability model

    P(y_r = 1 | s) = lambda_r + sum_k c_k * (s_k - p_k)

with the coefficients chosen so every requested pairwise Pearson
correlation comes out exactly in expectation while the label marginal stays
lambda_r. Correlations are controlled pairwise only; anything higher-order
defaults to the product measure. Requests outside the attainable range for
the given marginals (the conditional probability would leave [0, 1], which
for a single pair is exactly the Frechet bound on the joint cell) are
rejected.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Dataset
from .errors import InfeasibleCorrelation


@dataclass
class StreamSpec:
    """Recipe for a synthetic stream.

    target_corr maps (attribute index, label index) to a desired Pearson
    correlation; omitted pairs are independent. utility is either
    ("constant", 1.0) or ("lognormal", sigma).
    """

    n: int
    attr_prevalence: np.ndarray
    label_prevalence: np.ndarray
    target_corr: dict[tuple[int, int], float] = field(default_factory=dict)
    utility: tuple[str, float] = ("constant", 1.0)
    seed: int = 0
    id_prefix: str = "e"

    def __post_init__(self):
        self.attr_prevalence = np.asarray(self.attr_prevalence, dtype=np.float64)
        self.label_prevalence = np.asarray(self.label_prevalence, dtype=np.float64)
        if np.any(self.attr_prevalence <= 0.0) or np.any(self.attr_prevalence >= 1.0):
            raise ValueError("attribute prevalences must lie strictly inside (0, 1)")
        if self.label_prevalence.size and (
            np.any(self.label_prevalence <= 0.0) or np.any(self.label_prevalence >= 1.0)
        ):
            raise ValueError("label prevalences must lie strictly inside (0, 1)")

    @property
    def m(self) -> int:
        return self.attr_prevalence.size

    @property
    def c(self) -> int:
        return self.label_prevalence.size


def feasible_corr_range(p: float, lam: float) -> tuple[float, float]:
    """Attainable Pearson correlation range for Bernoulli marginals (p, lam).

    These are the Frechet-Hoeffding bounds expressed as correlations: the
    joint cell P(s=1, y=1) must stay within [max(0, p+lam-1), min(p, lam)].
    """
    denom = np.sqrt(p * (1.0 - p) * lam * (1.0 - lam))
    lo = (max(0.0, p + lam - 1.0) - p * lam) / denom
    hi = (min(p, lam) - p * lam) / denom
    return float(lo), float(hi)


def _label_coefficients(spec: StreamSpec, r: int) -> dict[int, float]:
    """Linear-model coefficients for label r; validates attainability."""
    lam = spec.label_prevalence[r]
    coeffs = {}
    for (k, rr), rho in spec.target_corr.items():
        if rr != r or rho == 0.0:
            continue
        p = spec.attr_prevalence[k]
        coeffs[k] = rho * np.sqrt(lam * (1.0 - lam) / (p * (1.0 - p)))
    if not coeffs:
        return coeffs
    # P(y=1 | s) must stay within [0, 1] over every attribute combination.
    ks = sorted(coeffs)
    lo, hi = lam, lam
    for k in ks:
        p = spec.attr_prevalence[k]
        contrib = (coeffs[k] * (1.0 - p), -coeffs[k] * p)
        lo += min(contrib)
        hi += max(contrib)
    if lo < -1e-12 or hi > 1.0 + 1e-12:
        raise InfeasibleCorrelation(
            f"label {r}: requested correlations push P(y|s) to [{lo:.4f}, {hi:.4f}]"
        )
    return coeffs


def generate(spec: StreamSpec) -> Dataset:
    """Materialize a stream as a Dataset. Deterministic per seed."""
    for k, r in spec.target_corr:
        if not (0 <= k < spec.m and 0 <= r < spec.c):
            raise ValueError(f"target_corr pair ({k}, {r}) out of range")
    rng = np.random.default_rng(spec.seed)
    n, m, c = spec.n, spec.m, spec.c
    S = (rng.random((n, m)) < spec.attr_prevalence).astype(np.float64)
    Y = np.empty((n, c), dtype=np.float64)
    for r in range(c):
        prob = np.full(n, spec.label_prevalence[r])
        for k, coef in _label_coefficients(spec, r).items():
            prob = prob + coef * (S[:, k] - spec.attr_prevalence[k])
        Y[:, r] = rng.random(n) < np.clip(prob, 0.0, 1.0)
    kind, param = spec.utility
    if kind == "constant":
        U = np.full(n, float(param))
    elif kind == "lognormal":
        U = np.exp(float(param) * rng.standard_normal(n))
    else:
        raise ValueError(f"unknown utility distribution: {kind!r}")
    ids = [f"{spec.id_prefix}{i:08d}" for i in range(n)]
    return Dataset(ids, S, Y, U)


def exact_cell_dataset(
    p_s: float, p_y: float, rho: float, n: int, id_prefix: str = "x"
) -> Dataset:
    """Single-pair dataset hitting marginals and correlation exactly.

    Builds the 2x2 contingency table for (s, y) with the requested Pearson
    correlation and rounds cell counts to integers, so small instances have
    bias values that are exact rather than sampled. Raises
    InfeasibleCorrelation outside the Frechet bounds.
    """
    cov = rho * np.sqrt(p_s * (1.0 - p_s) * p_y * (1.0 - p_y))
    p11 = p_s * p_y + cov
    cells = {
        (1, 1): p11,
        (1, 0): p_s - p11,
        (0, 1): p_y - p11,
        (0, 0): 1.0 - p_s - p_y + p11,
    }
    if any(v < -1e-12 for v in cells.values()):
        raise InfeasibleCorrelation(
            f"rho={rho} infeasible for marginals ({p_s}, {p_y})"
        )
    counts = {sy: int(round(v * n)) for sy, v in cells.items()}
    counts[(0, 0)] += n - sum(counts.values())
    rows_s, rows_y = [], []
    for (s, y), cnt in sorted(counts.items()):
        rows_s.extend([s] * cnt)
        rows_y.extend([y] * cnt)
    S = np.array(rows_s, dtype=np.float64).reshape(-1, 1)
    Y = np.array(rows_y, dtype=np.float64).reshape(-1, 1)
    ids = [f"{id_prefix}{i:08d}" for i in range(n)]
    return Dataset(ids, S, Y, np.ones(n))
