"""Exact solver for the finite-dataset balancing problem.

Solves

    minimize   (1/2) mean(u * (q - eta)^2) + v_level * sum_j max(0, mean(q * a_j))
    subject to mean(q) = eta,  0 <= q <= q_max

deterministically, to a KKT residual below a requested tolerance. This is
the ground truth the streaming solver is checked against on small instances.

Method: accelerated projected gradient on the box-constrained dual vector
(one multiplier per one-sided constraint), with the mean-weight multiplier
eliminated exactly at every step by a one-dimensional bisection. Given duals
(v, mu), the primal weights are q_i = clip(eta - (a_i . v + mu) / u_i, 0,
q_max); per-example stationarity and box complementarity then hold exactly
by construction, mean(q) = eta holds to bisection accuracy, and the only
remaining KKT residual is the projected-gradient norm in v, which the outer
loop drives below tolerance. No external QP solver is involved, so the
procedure is portable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .biasvec import bias_matrix
from .core import BalanceSpec, Dataset, Hyperparams, SolverState
from .errors import InstanceTooLarge, NonConvergence

MAX_EXACT_N = 10_000


@dataclass
class ExactSolution:
    """Optimal weights plus certificates for a finite instance."""

    q_star: np.ndarray
    objective: float
    iterations: int
    kkt_residual: float
    v: np.ndarray = None
    mu: float = 0.0


def project_mean_box(
    q: np.ndarray, eta: float, q_max: float, tol: float = 1e-12
) -> np.ndarray:
    """Euclidean projection onto {mean(q) = eta, 0 <= q <= q_max}.

    Standard one-dimensional dual search: the projection is
    clip(q - shift, 0, q_max) for the shift making the mean come out right,
    found by bisection (the mean is continuous and non-increasing in the
    shift).
    """
    q = np.asarray(q, dtype=np.float64)
    if not 0.0 <= eta <= q_max:
        raise ValueError("eta must lie in [0, q_max] for the projection to exist")

    def mean_at(shift: float) -> float:
        return float(np.mean(np.clip(q - shift, 0.0, q_max)))

    lo, hi = -1.0, 1.0
    while mean_at(lo) < eta:
        lo *= 2.0
        if lo < -1e18:
            break
    while mean_at(hi) > eta:
        hi *= 2.0
        if hi > 1e18:
            break
    for _ in range(200):
        if hi - lo <= tol * max(1.0, abs(lo), abs(hi)):
            break
        mid = 0.5 * (lo + hi)
        if mean_at(mid) >= eta:
            lo = mid
        else:
            hi = mid
    shift = 0.5 * (lo + hi)
    return np.clip(q - shift, 0.0, q_max)


def _solve_mu(
    Av: np.ndarray, U: np.ndarray, eta: float, q_max: float, tol: float = 1e-13
) -> float:
    """Mean-weight multiplier: root of mean(clip(eta - (Av + mu)/u)) = eta."""

    def mean_at(mu: float) -> float:
        return float(np.mean(np.clip(eta - (Av + mu) / U, 0.0, q_max)))

    lo, hi = -1.0, 1.0
    while mean_at(lo) < eta:
        lo *= 2.0
        if lo < -1e18:
            break
    while mean_at(hi) > eta:
        hi *= 2.0
        if hi > 1e18:
            break
    for _ in range(200):
        if hi - lo <= tol * max(1.0, abs(lo), abs(hi)):
            break
        mid = 0.5 * (lo + hi)
        if mean_at(mid) >= eta:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def solve_exact(
    dataset: Dataset,
    spec: BalanceSpec,
    hp: Hyperparams,
    tol: float = 1e-6,
    max_iter: int = 100_000,
) -> ExactSolution:
    """Exact optimum of the finite-dataset problem. Deterministic.

    Raises InstanceTooLarge above 10^4 examples and NonConvergence if the
    KKT residual is still above `tol` after `max_iter` outer iterations.
    """
    n = len(dataset)
    if n > MAX_EXACT_N:
        raise InstanceTooLarge(f"{n} examples exceeds the exact-solver cap {MAX_EXACT_N}")
    A = bias_matrix(dataset.S, dataset.Y, spec)
    U = dataset.U
    eta, q_max, v_cap = hp.eta, hp.q_max, hp.v_level
    d = A.shape[1]

    # Curvature bound for the dual: eliminating mu only flattens it.
    H = (A.T / U) @ A / n
    lip = float(np.linalg.eigvalsh(H)[-1])
    step = 1.0 / max(lip, 1e-12)

    def q_of(v: np.ndarray) -> tuple[np.ndarray, float]:
        Av = A @ v
        mu = _solve_mu(Av, U, eta, q_max)
        return np.clip(eta - (Av + mu) / U, 0.0, q_max), mu

    def dual_value(q: np.ndarray, v: np.ndarray, mu: float) -> float:
        # Negated dual function; the outer loop minimizes it.
        va = A @ v
        beta = np.maximum(0.0, va + mu - eta * U)
        alpha = np.maximum(0.0, U * (eta - q_max) - va - mu)
        f = 0.5 * U * (eta - q) ** 2 - eta * va - eta * (alpha - beta) + q_max * alpha
        return float(np.mean(f))

    v = np.zeros(d)
    z = v.copy()
    theta = 1.0
    prev_val = math.inf
    kkt = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        q_z, _ = q_of(z)
        grad = -(A.T @ q_z) / n
        v_new = np.clip(z - step * grad, 0.0, v_cap)
        # Gradient-based adaptive restart.
        if float(np.dot(grad, v_new - v)) > 0.0:
            theta = 1.0
            z = v.copy()
            q_z, _ = q_of(z)
            grad = -(A.T @ q_z) / n
            v_new = np.clip(z - step * grad, 0.0, v_cap)
        theta_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * theta * theta))
        z = v_new + ((theta - 1.0) / theta_new) * (v_new - v)
        v, theta = v_new, theta_new

        if it % 10 == 0 or it == max_iter:
            q, mu = q_of(v)
            moments = (A.T @ q) / n
            kkt_v = float(np.max(np.abs(v - np.clip(v + moments, 0.0, v_cap))))
            kkt_mean = abs(float(np.mean(q)) - eta)
            kkt = max(kkt_v, kkt_mean)
            if kkt <= tol:
                break
            val = dual_value(q, v, mu)
            if val > prev_val + 1e-15:
                theta = 1.0
                z = v.copy()
            prev_val = val

    q, mu = q_of(v)
    moments = (A.T @ q) / n
    kkt_v = float(np.max(np.abs(v - np.clip(v + moments, 0.0, v_cap))))
    kkt_mean = abs(float(np.mean(q)) - eta)
    kkt = max(kkt_v, kkt_mean)
    if kkt > tol:
        raise NonConvergence(
            f"exact solver residual {kkt:.3e} above tolerance {tol:.1e} "
            f"after {it} iterations"
        )
    quad = 0.5 * float(np.mean(U * (q - eta) ** 2))
    objective = quad + v_cap * float(np.sum(np.maximum(0.0, moments)))
    return ExactSolution(
        q_star=q, objective=objective, iterations=it, kkt_residual=kkt, v=v, mu=mu
    )


def oracle_state(
    solution: ExactSolution, spec: BalanceSpec, hp: Hyperparams
) -> SolverState:
    """Wrap the oracle's dual certificate as a solver state."""
    return SolverState(spec=spec, hp=hp, v=solution.v, mu=solution.mu, t=0)
