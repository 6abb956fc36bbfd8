"""Sequential update kernels.

The per-example dual update is an inherently serial loop over the stream, so
it is the one hot spot in the package. The loop is compiled with numba when
available; setting the environment variable ``DATABALANCE_NO_NUMBA=1``
selects a pure-Python/numpy fallback running the identical code (bit-exact,
just slower). ``benchmarks/bench_kernels.py`` compares the two paths.
"""

from __future__ import annotations

import os

import numpy as np

_DISABLE = os.environ.get("DATABALANCE_NO_NUMBA", "").strip().lower() in (
    "1",
    "true",
    "yes",
)

NUMBA_ENABLED = False
if not _DISABLE:
    try:
        from numba import njit

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        NUMBA_ENABLED = False


def _maybe_jit(fn):
    if NUMBA_ENABLED:
        return njit(cache=True)(fn)
    return fn


def _run_stream_impl(
    S,
    Y,
    U,
    orders,
    v,
    mu,
    t,
    pi,
    eps_d,
    eps_r,
    eta,
    q_max,
    v_cap,
    tau0,
    const_lr,
    loss_every,
    ring,
    ring_pos,
    ring_fill,
    ring_sum,
    loss_t,
    loss_f,
    n_loss,
    q_trace,
    record_q,
    q_base,
    avg_start,
    v_avg,
    mu_avg,
    avg_count,
):
    """Run dual updates over `orders`, mutating v in place.

    Returns (mu, t, ring_pos, ring_fill, ring_sum, n_loss, mu_avg,
    avg_count). The ring buffer holds the trailing per-example dual-loss
    terms; every `loss_every` steps (once the ring is full) their mean is
    appended to loss_t/loss_f. Iterates with t >= avg_start are summed into
    v_avg/mu_avg for tail averaging (avg_start < 0 disables).
    """
    n_rows, m = S.shape
    c = Y.shape[1]
    mc = m * c
    d = 2 * m * (c + 1)
    window = ring.shape[0]
    a = np.empty(d, dtype=np.float64)
    step = 0
    for ep in range(orders.shape[0]):
        for ii in range(orders.shape[1]):
            i = orders[ep, ii]
            u = U[i]
            for k in range(m):
                ck = S[i, k] - pi[k]
                for r in range(c):
                    dp = ck * Y[i, r]
                    a[k * c + r] = dp - eps_d
                    a[mc + k * c + r] = -dp - eps_d
                a[2 * mc + k] = ck - eps_r
                a[2 * mc + m + k] = -ck - eps_r
            w = mu
            for j in range(d):
                w += v[j] * a[j]
            beta = w - eta * u
            if beta < 0.0:
                beta = 0.0
            alpha = u * (eta - q_max) - w
            if alpha < 0.0:
                alpha = 0.0
            # q = eta - (w + alpha - beta)/u, in its exact clipped form
            q = eta - w / u
            if q < 0.0:
                q = 0.0
            elif q > q_max:
                q = q_max

            if loss_every > 0:
                va = w - mu
                f = (
                    0.5 * u * (eta - q) * (eta - q)
                    - eta * va
                    - eta * (alpha - beta)
                    + q_max * alpha
                )
                if ring_fill < window:
                    ring[ring_pos] = f
                    ring_sum += f
                    ring_fill += 1
                else:
                    ring_sum += f - ring[ring_pos]
                    ring[ring_pos] = f
                ring_pos += 1
                if ring_pos == window:
                    ring_pos = 0

            if record_q:
                q_trace[q_base + step] = q

            if const_lr:
                tau = tau0
            else:
                tt = t
                if tt < 1:
                    tt = 1
                tau = tau0 / np.sqrt(np.float64(tt))
            scale = tau * q / eta
            for j in range(d):
                vj = v[j] + scale * a[j]
                if vj < 0.0:
                    vj = 0.0
                elif vj > v_cap:
                    vj = v_cap
                v[j] = vj
            mu += tau * (q / eta - 1.0)
            t += 1
            step += 1

            if avg_start >= 0 and t >= avg_start:
                for j in range(d):
                    v_avg[j] += v[j]
                mu_avg += mu
                avg_count += 1

            if loss_every > 0 and ring_fill >= window and t % loss_every == 0:
                loss_t[n_loss] = t
                loss_f[n_loss] = ring_sum / window
                n_loss += 1
    return mu, t, ring_pos, ring_fill, ring_sum, n_loss, mu_avg, avg_count


run_stream = _maybe_jit(_run_stream_impl)
run_stream_python = _run_stream_impl
