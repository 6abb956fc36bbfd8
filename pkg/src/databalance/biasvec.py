"""Per-example constraint vectors.

Each example (s, y) maps to a vector ``a`` of length 2m(c+1) holding the
signed contribution of the example to every one-sided bias constraint,
tolerances already subtracted:

    a = [ dp - eps_d | -dp - eps_d | (s - pi) - eps_r | -(s - pi) - eps_r ]

where dp is the outer product (s - pi) (x) y flattened row-major with the
attribute index outer and the label index inner. A weighting q satisfies
every constraint exactly when mean(q * a) <= 0 componentwise. The block
order and flattening are fixed; checkpoints record them as a layout version.
"""

from __future__ import annotations

import numpy as np

from .core import BalanceSpec
from .errors import DimensionMismatch

LAYOUT_VERSION = 1


def bias_vector(s: np.ndarray, y: np.ndarray, spec: BalanceSpec) -> np.ndarray:
    """Constraint vector for a single example. Pure; length 2m(c+1)."""
    s = np.asarray(s, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if s.size != spec.m:
        raise DimensionMismatch(f"s has length {s.size}, expected m={spec.m}")
    if y.size != spec.c:
        raise DimensionMismatch(f"y has length {y.size}, expected c={spec.c}")
    centered = s - spec.pi
    dp = np.outer(centered, y).reshape(-1)
    return np.concatenate(
        [
            dp - spec.eps_d,
            -dp - spec.eps_d,
            centered - spec.eps_r,
            -centered - spec.eps_r,
        ]
    )


def bias_matrix(S: np.ndarray, Y: np.ndarray, spec: BalanceSpec) -> np.ndarray:
    """Stacked constraint vectors for a batch: shape (n, 2m(c+1))."""
    S = np.asarray(S, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if S.ndim != 2 or S.shape[1] != spec.m:
        raise DimensionMismatch(f"S has shape {S.shape}, expected (n, {spec.m})")
    if Y.ndim != 2 or Y.shape[1] != spec.c:
        raise DimensionMismatch(f"Y has shape {Y.shape}, expected (n, {spec.c})")
    centered = S - spec.pi
    dp = np.einsum("nk,nr->nkr", centered, Y).reshape(S.shape[0], -1)
    return np.concatenate(
        [
            dp - spec.eps_d,
            -dp - spec.eps_d,
            centered - spec.eps_r,
            -centered - spec.eps_r,
        ],
        axis=1,
    )
