"""Streaming dual solver for the balancing problem.

The engine maintains dual variables (v, mu) and processes one example at a
time. For each example it forms the constraint vector a, derives the weight

    w = v . a + mu
    beta  = max(0, w - eta * u)
    alpha = max(0, u * (eta - q_max) - w)
    q     = eta - (w + alpha - beta) / u

and then takes a projected stochastic step on the duals

    v  <- clip(v + tau_t * (q / eta) * a, 0, v_level)
    mu <- mu + tau_t * (q / eta - 1)

with tau_t = tau0 / sqrt(t) under the inverse-sqrt schedule. The clamp keeps
v inside the box the dual problem lives in; without it v drifts unboundedly
whenever the constraint set is infeasible and v_level stops bounding the
enforcement pressure.

The converged duals induce, for any example, a weight q in [0, q_max], with
mean weight eta over the data. ``primal_objective`` scores a full weight
vector against the penalized objective the duals optimize; ``solve_exact``
in the oracle module computes the exact optimum for small instances.
"""

from __future__ import annotations

import dataclasses
import json
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .biasvec import LAYOUT_VERSION, bias_matrix, bias_vector
from .core import (
    BalanceSpec,
    Dataset,
    Example,
    Hyperparams,
    Schedule,
    SolverState,
    WeightedExample,
    as_dataset,
    validate_example,
)
from .errors import (
    CorruptCheckpoint,
    DimensionMismatch,
    EmptyStream,
    VersionMismatch,
)

CHECKPOINT_FORMAT_VERSION = 1

_STREAM_CHUNK = 65536


@dataclass
class DualLossSample:
    """One point of the dual-loss trace: step index and windowed loss mean."""

    t: int
    loss: float


@dataclass
class FitResult:
    state: SolverState
    loss_trace: list[DualLossSample]
    weights: np.ndarray | None = None


def _weigh_arrays(
    A: np.ndarray, U: np.ndarray, hp: Hyperparams, v: np.ndarray, mu: float
):
    """Vectorized weight inference for a batch of constraint vectors."""
    w = A @ v + mu
    beta = np.maximum(0.0, w - hp.eta * U)
    alpha = np.maximum(0.0, U * (hp.eta - hp.q_max) - w)
    # q = eta - (w + alpha - beta)/u collapses to an exact clip: beta > 0
    # forces q = 0 and alpha > 0 forces q = q_max, algebraically.
    q = np.clip(hp.eta - w / U, 0.0, hp.q_max)
    return q, alpha, beta, w


def weigh_batch(state: SolverState, dataset: Dataset) -> np.ndarray:
    """Weights induced by a frozen state over a dataset. Read-only."""
    if dataset.m != state.spec.m or dataset.c != state.spec.c:
        raise DimensionMismatch("dataset dimensions do not match solver spec")
    A = bias_matrix(dataset.S, dataset.Y, state.spec)
    q, _, _, _ = _weigh_arrays(A, dataset.U, state.hp, state.v, state.mu)
    return q


def weigh(state: SolverState, e: Example) -> WeightedExample:
    """Weight a single example against a frozen state.

    Pure function of (state, example); does not mutate the state. The
    returned multipliers satisfy alpha >= 0, beta >= 0, alpha * beta = 0,
    and q lies in [0, q_max].
    """
    validate_example(e, state.spec)
    hp = state.hp
    a = bias_vector(e.s, e.y, state.spec)
    w = float(np.dot(state.v, a)) + state.mu
    beta = max(0.0, w - hp.eta * e.u)
    alpha = max(0.0, e.u * (hp.eta - hp.q_max) - w)
    q = min(max(hp.eta - w / e.u, 0.0), hp.q_max)
    return WeightedExample(example=e, q=q, alpha=alpha, beta=beta)


def update(state: SolverState, e: Example) -> tuple[SolverState, WeightedExample]:
    """One dual step on a single example; returns the new state.

    The input state is not modified.
    """
    wex = weigh(state, e)
    hp = state.hp
    a = bias_vector(e.s, e.y, state.spec)
    tau = hp.learning_rate(state.t)
    v_new = np.clip(state.v + tau * (wex.q / hp.eta) * a, 0.0, hp.v_level)
    mu_new = state.mu + tau * (wex.q / hp.eta - 1.0)
    new_state = SolverState(
        spec=state.spec, hp=state.hp, v=v_new, mu=mu_new, t=state.t + 1
    )
    return new_state, wex


def dual_loss_term(state: SolverState, e: Example) -> float:
    """Per-example contribution to the dual objective at the current duals."""
    wex = weigh(state, e)
    a = bias_vector(e.s, e.y, state.spec)
    hp = state.hp
    va = float(np.dot(state.v, a))
    return (
        0.5 * e.u * (hp.eta - wex.q) ** 2
        - hp.eta * va
        - hp.eta * (wex.alpha - wex.beta)
        + hp.q_max * wex.alpha
    )


def dual_objective(state: SolverState, dataset: Dataset) -> float:
    """Dual objective value at (v, mu) over a finite dataset.

    By weak duality this never exceeds the primal objective of any feasible
    weighting; at the optimum the two coincide.
    """
    hp = state.hp
    A = bias_matrix(dataset.S, dataset.Y, state.spec)
    q, alpha, beta, w = _weigh_arrays(A, dataset.U, hp, state.v, state.mu)
    va = w - state.mu
    f = (
        0.5 * dataset.U * (hp.eta - q) ** 2
        - hp.eta * va
        - hp.eta * (alpha - beta)
        + hp.q_max * alpha
    )
    return -float(np.mean(f))


def constraint_residuals(
    weights: np.ndarray, dataset: Dataset, spec: BalanceSpec
) -> np.ndarray:
    """Mean of q * a over the dataset, one entry per one-sided constraint.

    Entry j <= 0 means constraint j is satisfied by the weighting.
    """
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (len(dataset),):
        raise DimensionMismatch("weights length does not match dataset")
    A = bias_matrix(dataset.S, dataset.Y, spec)
    return (weights @ A) / len(dataset)


def max_violation(weights: np.ndarray, dataset: Dataset, spec: BalanceSpec) -> float:
    """Largest constraint violation, normalized by the realized mean weight.

    Zero when every constraint holds. The normalization makes the number
    comparable across subsampling rates: it is the violation of the
    weighted-measure moment beyond its tolerance.
    """
    r = constraint_residuals(weights, dataset, spec)
    mean_q = float(np.mean(weights))
    if mean_q <= 0.0:
        return max(0.0, float(np.max(r)))
    return max(0.0, float(np.max(r)) / mean_q)


def primal_objective(
    weights: np.ndarray, dataset: Dataset, spec: BalanceSpec, hp: Hyperparams
) -> float:
    """Penalized objective of a weight vector over a finite dataset.

    Quadratic term (1/2) mean(u * (q - eta)^2) plus v_level times the sum of
    hinge violations max(0, mean(q * a_j)) over all one-sided constraints.
    Tolerances enter through the constraint vectors, so they are measured
    relative to the realized weight mass: a pair (k, r) contributes once
    |mean(q * (s_k - pi_k) * y_r)| exceeds eps_d * mean(q).
    """
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (len(dataset),):
        raise DimensionMismatch("weights length does not match dataset")
    if np.any(weights < 0.0) or np.any(weights > hp.q_max + 1e-12):
        raise ValueError("weights must lie in [0, q_max]")
    quad = 0.5 * float(np.mean(dataset.U * (weights - hp.eta) ** 2))
    r = constraint_residuals(weights, dataset, spec)
    return quad + hp.v_level * float(np.sum(np.maximum(0.0, r)))


def _epoch_order(n: int, seed: int, epoch: int, shuffle: bool) -> np.ndarray:
    if not shuffle:
        return np.arange(n, dtype=np.int64)
    rng = np.random.default_rng([seed, epoch])
    return rng.permutation(n).astype(np.int64)


def fit(
    stream,
    spec: BalanceSpec,
    hp: Hyperparams,
    epochs: int = 1,
    seed: int = 0,
    loss_interval: int = 1000,
    loss_window: int = 1000,
    shuffle: bool = True,
    state: SolverState | None = None,
    record_weights: bool = False,
    average_tail: float = 0.0,
) -> FitResult:
    """Run dual updates over a stream for the given number of epochs.

    Finite streams are materialized and shuffled per epoch with a seeded
    permutation keyed by (seed, epoch index), so a run checkpointed at an
    epoch boundary and resumed reproduces the uninterrupted run bit for bit
    (with averaging disabled, the default).

    The loss trace records, every `loss_interval` steps, the mean of the
    per-example dual terms over the trailing `loss_window` examples, each
    evaluated at the duals current when the example was seen. Pass
    loss_interval=0 to disable tracing.

    `average_tail` in (0, 1] replaces the returned duals by their average
    over the last fraction of updates. The raw last iterate hovers around
    the optimum with noise proportional to the late step size; the tail
    average suppresses it, which matters when the induced weights are
    compared against an exact solution.

    Iterators are consumed in arrival order in chunks when epochs == 1 and
    shuffle is False (the streaming mode); anything else materializes.
    """
    if not 0.0 <= average_tail <= 1.0:
        raise ValueError("average_tail must lie in [0, 1]")
    if epochs < 1:
        raise ValueError(f"epochs must be >= 1, got {epochs}")
    if state is None:
        state = SolverState(spec=spec, hp=hp)
    else:
        if state.spec != spec or state.hp != hp:
            raise ValueError("resume state spec/hp differ from requested fit")
        state = state.copy()

    streaming = (
        epochs == 1
        and not shuffle
        and not isinstance(stream, (Dataset, Sequence))
        and not hasattr(stream, "__len__")
    )
    if streaming:
        if average_tail > 0.0:
            raise ValueError(
                "average_tail needs a known stream length; materialize first"
            )
        return _fit_streaming(
            stream, spec, hp, state, loss_interval, loss_window, record_weights
        )

    ds = as_dataset(stream, spec)
    n = len(ds)
    total = epochs * n
    window = min(loss_window, total) if loss_interval > 0 else 1
    base_epoch = state.t // n
    orders = np.empty((epochs, n), dtype=np.int64)
    for j in range(epochs):
        orders[j] = _epoch_order(n, seed, base_epoch + j, shuffle)

    max_samples = total // loss_interval + 1 if loss_interval > 0 else 1
    loss_t = np.zeros(max_samples, dtype=np.int64)
    loss_f = np.zeros(max_samples, dtype=np.float64)
    ring = np.zeros(window, dtype=np.float64)
    q_trace = np.zeros(total if record_weights else 1, dtype=np.float64)
    if average_tail > 0.0:
        n_avg = max(1, int(round(total * average_tail)))
        avg_start = state.t + total - n_avg + 1
    else:
        avg_start = -1
    v_avg = np.zeros_like(state.v)

    v = state.v.copy()
    mu, t, _, _, _, n_loss, mu_avg, avg_count = kernels.run_stream(
        ds.S,
        ds.Y,
        ds.U,
        orders,
        v,
        state.mu,
        state.t,
        spec.pi,
        spec.eps_d,
        spec.eps_r,
        hp.eta,
        hp.q_max,
        hp.v_level,
        hp.tau0,
        hp.schedule is Schedule.CONSTANT,
        loss_interval,
        ring,
        0,
        0,
        0.0,
        loss_t,
        loss_f,
        0,
        q_trace,
        record_weights,
        0,
        avg_start,
        v_avg,
        0.0,
        0,
    )
    if avg_start >= 0 and avg_count > 0:
        v = v_avg / avg_count
        mu = mu_avg / avg_count
    new_state = SolverState(spec=spec, hp=hp, v=v, mu=mu, t=t)
    trace = [DualLossSample(int(loss_t[i]), float(loss_f[i])) for i in range(n_loss)]
    return FitResult(new_state, trace, q_trace if record_weights else None)


def _fit_streaming(
    stream: Iterable[Example],
    spec: BalanceSpec,
    hp: Hyperparams,
    state: SolverState,
    loss_interval: int,
    loss_window: int,
    record_weights: bool,
) -> FitResult:
    """Single-pass arrival-order fit over an iterator, in chunks."""
    window = max(1, loss_window) if loss_interval > 0 else 1
    ring = np.zeros(window, dtype=np.float64)
    ring_pos = 0
    ring_fill = 0
    ring_sum = 0.0
    v = state.v.copy()
    mu = state.mu
    t = state.t
    trace: list[DualLossSample] = []
    q_chunks: list[np.ndarray] = []
    seen = 0
    it = iter(stream)
    while True:
        chunk = []
        for e in it:
            chunk.append(validate_example(e, spec))
            if len(chunk) >= _STREAM_CHUNK:
                break
        if not chunk:
            break
        ds = Dataset.from_examples(chunk)
        n = len(ds)
        orders = np.arange(n, dtype=np.int64).reshape(1, n)
        max_samples = n // max(loss_interval, 1) + 2 if loss_interval > 0 else 1
        loss_t = np.zeros(max_samples, dtype=np.int64)
        loss_f = np.zeros(max_samples, dtype=np.float64)
        q_trace = np.zeros(n if record_weights else 1, dtype=np.float64)
        mu, t, ring_pos, ring_fill, ring_sum, n_loss, _, _ = kernels.run_stream(
            ds.S,
            ds.Y,
            ds.U,
            orders,
            v,
            mu,
            t,
            spec.pi,
            spec.eps_d,
            spec.eps_r,
            hp.eta,
            hp.q_max,
            hp.v_level,
            hp.tau0,
            hp.schedule is Schedule.CONSTANT,
            loss_interval,
            ring,
            ring_pos,
            ring_fill,
            ring_sum,
            loss_t,
            loss_f,
            0,
            q_trace,
            record_weights,
            0,
            -1,
            np.zeros_like(v),
            0.0,
            0,
        )
        trace.extend(
            DualLossSample(int(loss_t[i]), float(loss_f[i])) for i in range(n_loss)
        )
        if record_weights:
            q_chunks.append(q_trace)
        seen += n
    if seen == 0:
        raise EmptyStream("fit requires at least one example")
    new_state = SolverState(spec=spec, hp=hp, v=v, mu=mu, t=t)
    weights = np.concatenate(q_chunks) if q_chunks else None
    return FitResult(new_state, trace, weights)


def search_eta(
    stream,
    spec: BalanceSpec,
    hp_template: Hyperparams,
    grid: Sequence[float],
    violation_tol: float,
    seed: int = 0,
    epochs: int = 1,
) -> float:
    """Largest grid rate whose fitted weights satisfy every constraint.

    Refits from scratch for each candidate, descending. If even the smallest
    rate violates the tolerance, returns it and emits a Warning; infeasible
    constraint sets are absorbed by the penalty terms rather than erroring.
    """
    if not grid:
        raise ValueError("grid must be non-empty")
    ds = as_dataset(stream, spec)
    candidates = sorted(grid, reverse=True)
    for eta in candidates:
        hp = dataclasses.replace(hp_template, eta=eta)
        result = fit(ds, spec, hp, epochs=epochs, seed=seed, loss_interval=0)
        q = weigh_batch(result.state, ds)
        if max_violation(q, ds, spec) <= violation_tol:
            return eta
    smallest = candidates[-1]
    warnings.warn(
        f"no grid rate satisfies violation_tol={violation_tol}; "
        f"returning smallest candidate {smallest}",
        UserWarning,
        stacklevel=2,
    )
    return smallest


def save_checkpoint(state: SolverState) -> bytes:
    """Serialize a solver state to a self-describing JSON document.

    Floats round-trip exactly (shortest-repr decimal encoding).
    """
    doc = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "layout_version": LAYOUT_VERSION,
        "m": state.spec.m,
        "c": state.spec.c,
        "pi": [float(x) for x in state.spec.pi],
        "eps_d": state.spec.eps_d,
        "eps_r": state.spec.eps_r,
        "eta": state.hp.eta,
        "q_max": state.hp.q_max,
        "v_level": state.hp.v_level,
        "tau0": state.hp.tau0,
        "schedule": state.hp.schedule.value,
        "t": state.t,
        "mu": state.mu,
        "v": [float(x) for x in state.v],
    }
    return (json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n").encode(
        "utf-8"
    )


def load_checkpoint(data: bytes) -> SolverState:
    """Parse a checkpoint produced by save_checkpoint."""
    try:
        doc = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptCheckpoint(f"checkpoint is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise CorruptCheckpoint("checkpoint root must be an object")
    fmt = doc.get("format_version")
    if fmt != CHECKPOINT_FORMAT_VERSION:
        raise VersionMismatch(f"unsupported checkpoint format_version: {fmt}")
    layout = doc.get("layout_version")
    if layout != LAYOUT_VERSION:
        raise VersionMismatch(f"unsupported constraint layout_version: {layout}")
    required = (
        "m",
        "c",
        "pi",
        "eps_d",
        "eps_r",
        "eta",
        "q_max",
        "v_level",
        "tau0",
        "schedule",
        "t",
        "mu",
        "v",
    )
    missing = [k for k in required if k not in doc]
    if missing:
        raise CorruptCheckpoint(f"checkpoint missing fields: {missing}")
    try:
        spec = BalanceSpec(
            m=doc["m"], c=doc["c"], pi=doc["pi"], eps_d=doc["eps_d"], eps_r=doc["eps_r"]
        )
        hp = Hyperparams(
            eta=doc["eta"],
            q_max=doc["q_max"],
            v_level=doc["v_level"],
            tau0=doc["tau0"],
            schedule=doc["schedule"],
        )
        v = np.asarray(doc["v"], dtype=np.float64)
        if v.shape != (spec.bias_dim,):
            raise CorruptCheckpoint(
                f"v has length {v.size}, expected {spec.bias_dim}"
            )
        return SolverState(spec=spec, hp=hp, v=v, mu=doc["mu"], t=doc["t"])
    except CorruptCheckpoint:
        raise
    except (ValueError, TypeError, KeyError, DimensionMismatch) as exc:
        raise CorruptCheckpoint(f"checkpoint fields invalid: {exc}") from exc


def ensure_checkpoint_matches(state: SolverState, spec: BalanceSpec) -> None:
    """Raise VersionMismatch when a checkpoint disagrees with a given spec."""
    if state.spec != spec:
        raise VersionMismatch(
            "checkpoint problem definition differs from the provided spec "
            f"(checkpoint m={state.spec.m}, c={state.spec.c}; "
            f"provided m={spec.m}, c={spec.c})"
        )
