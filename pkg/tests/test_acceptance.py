"""Acceptance criteria, one test per criterion, with PASS/FAIL lines.

Run `pytest tests/test_acceptance.py -v -s` to see the per-criterion
summary. Timed criteria are measured after a one-off kernel warmup.

The constraint-transfer criterion (test_c2) is implemented exactly at its
stated parameters and is expected to FAIL: with marginal prevalence 0.3,
q_max 1 and mean weight 0.9, any subsample carrying 90% of the mass has
weighted prevalence at most 0.3/0.9 = 1/3, so RB against pi = 0.5 cannot go
below ~0.167 (and the saturated representation duals also leave weighted
covariance ~0.1). The same property passes comfortably at feasible rates
(see tests/test_sampler.py::TestBiasTransfer).
"""

import time

import numpy as np
import pytest

from databalance import synth
from databalance.auditor import Moments, data_rb, weighted_pearson
from databalance.biasvec import bias_matrix
from databalance.cli import main as cli_main
from databalance.core import BalanceSpec, Dataset, Hyperparams
from databalance.oracle import solve_exact
from databalance.sampler import bernoulli_mask
from databalance.solver import fit, primal_objective, weigh_batch


def _report(name: str, ok: bool, detail: str = ""):
    print(f"[{'PASS' if ok else 'FAIL'}] {name}" + (f" ({detail})" if detail else ""))


@pytest.fixture(scope="module", autouse=True)
def warm_kernel():
    ss = synth.StreamSpec(n=64, attr_prevalence=[0.5], label_prevalence=[0.5],
                          seed=0)
    ds = synth.generate(ss)
    spec = BalanceSpec(m=1, c=1, pi=[0.5])
    hp = Hyperparams(eta=0.5, q_max=1.0, v_level=1.0)
    fit(ds, spec, hp, epochs=2, seed=0, loss_interval=1)


def _oracle_instance(seed):
    """Random small instance with pi feasible at a margin from the boundary
    (near the boundary the optimal duals blow up against the box and any
    first-order method crawls)."""
    rng = np.random.default_rng(seed)
    m = int(rng.integers(1, 3))
    c = int(rng.choice([0, 1, 3]))
    eps = float(rng.choice([0.0, 0.05]))
    eta = float(rng.uniform(0.4, 0.75))
    q_max = 1.0
    attr_prev = rng.uniform(0.25, 0.75, size=m)
    label_prev = rng.uniform(0.25, 0.75, size=c)
    corr = {}
    if c:
        k = int(rng.integers(0, m))
        lo, hi = synth.feasible_corr_range(attr_prev[k], label_prev[0])
        corr[(k, 0)] = float(rng.uniform(0.6 * lo, 0.6 * hi))
    util = ("constant", 1.0) if seed % 2 == 0 else ("lognormal", 0.3)
    ss = synth.StreamSpec(n=64, attr_prevalence=attr_prev,
                          label_prevalence=label_prev, target_corr=corr,
                          utility=util, seed=seed + 1000)
    ds = synth.generate(ss)
    p_hat = ds.S.mean(axis=0)
    lo = np.maximum(0.05, 1.0 - 0.6 * (1.0 - p_hat) * q_max / eta)
    hi = np.minimum(0.95, 0.6 * p_hat * q_max / eta)
    lo, hi = np.minimum(lo, hi), np.maximum(lo, hi)
    pi = lo + (hi - lo) * rng.uniform(0.25, 0.75, size=m)
    spec = BalanceSpec(m=m, c=c, pi=pi, eps_d=eps, eps_r=eps)
    hp = Hyperparams(eta=eta, q_max=q_max, v_level=3.0, tau0=0.3)
    return ds, spec, hp


def test_c1_oracle_optimality():
    """50 random instances: streaming fit matches the exact optimum."""
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(50):
        ds, spec, hp = _oracle_instance(seed)
        sol = solve_exact(ds, spec, hp)
        state = None
        prev_obj = None
        # extend the run while the induced objective still moves
        for chunk in (8000, 8000, 16000, 32000, 48000, 48000):
            res = fit(ds, spec, hp, epochs=chunk, seed=seed, loss_interval=0,
                      state=state)
            state = res.state
            obj = primal_objective(weigh_batch(state, ds), ds, spec, hp)
            if prev_obj is not None and abs(obj - prev_obj) < 2.5e-4:
                break
            prev_obj = obj
        tol = max(1e-3, 0.01 * abs(sol.objective))
        gap = abs(obj - sol.objective)
        worst = max(worst, gap / tol)
        assert gap <= tol, (
            f"instance {seed}: |{obj:.6f} - {sol.objective:.6f}| = {gap:.2e} "
            f"above tolerance {tol:.2e}")
    elapsed = time.perf_counter() - t0
    _report("oracle optimality (50 instances)",
            True, f"worst gap/tol {worst:.2f}, {elapsed:.1f}s")
    assert elapsed < 60.0


def test_c2_constraint_transfer_as_stated():
    """Stated scenario: marginal 0.3 -> pi 0.5 at eta 0.9. Expected FAIL:
    weighted prevalence is capped at 0.3/0.9 = 1/3 (see module docstring)."""
    t0 = time.perf_counter()
    ss = synth.StreamSpec(n=100_000, attr_prevalence=[0.3],
                          label_prevalence=[0.5], target_corr={(0, 0): 0.5},
                          seed=7)
    ds = synth.generate(ss)
    spec = BalanceSpec(m=1, c=1, pi=[0.5], eps_d=0.0, eps_r=0.0)
    hp = Hyperparams(eta=0.9, q_max=1.0, v_level=100.0, tau0=0.5)
    res = fit(ds, spec, hp, epochs=120, seed=0, loss_interval=0)
    q = weigh_batch(res.state, ds)
    kept, _ = bernoulli_mask(ds.ids, q, hp.q_max, seed=11)
    sub = Dataset([ds.ids[i] for i in np.flatnonzero(kept)], ds.S[kept],
                  ds.Y[kept], ds.U[kept])
    rb = data_rb(sub, spec.pi)
    mom = Moments(1, 1).update(sub.S, sub.Y)
    cov = float(np.abs(mom.sy_mean - np.outer(mom.s_mean, mom.y_mean)).max())
    elapsed = time.perf_counter() - t0
    ok = rb <= 0.02 and cov <= 0.02
    _report("constraint transfer at eta=0.9 (stated)", ok,
            f"RB {rb:.3f} (floor |0.5 - 1/3| = 0.167), |cov| {cov:.3f}, "
            f"{elapsed:.1f}s")
    assert elapsed < 30.0
    assert rb <= 0.02, (
        f"RB = {rb:.4f}: unattainable as specified; any 90%-mass subsample of "
        f"a 30%-prevalence attribute has prevalence <= 1/3, so RB >= 0.167 "
        f"against pi=0.5 (feasible rates require eta <= mass*q_max/pi = 0.6)")
    assert cov <= 0.02, f"|weighted cov| = {cov:.4f}"


def test_c3_four_constraint_sets_analog():
    """Two balance + two decorrelation constraint families, synthetic analog
    of the empirical-verification scenario: pre max |rho| ~ 0.26 / 0.22,
    post-balance median <= 0.01 and max <= 0.05."""
    t0 = time.perf_counter()
    attr_prev = [0.25, 0.08, 0.008, 0.009, 0.01, 0.012, 0.015, 0.02]
    pi = [0.12, 0.12] + [0.01] * 6
    label_prev = [0.05, 0.10, 0.08, 0.12] + [0.02, 0.02, 0.02, 0.03, 0.03, 0.03]
    corr = {(0, 0): 0.26, (0, 1): 0.15, (0, 2): 0.08, (0, 3): 0.02,
            (0, 4): 0.22, (0, 5): 0.10, (0, 6): 0.05, (0, 7): 0.02,
            (0, 8): 0.01, (0, 9): 0.005}
    ds = synth.generate(synth.StreamSpec(
        n=200_000, attr_prevalence=attr_prev, label_prevalence=label_prev,
        target_corr=corr, seed=3))
    occ_pairs = [(g, r) for g in (0, 1) for r in range(4)]
    age_pairs = [(g, r) for g in (0, 1) for r in range(4, 10)]

    pre_occ = weighted_pearson(ds, pairs=occ_pairs)
    pre_age = weighted_pearson(ds, pairs=age_pairs)
    assert abs(pre_occ.max_abs - 0.26) <= 0.03
    assert abs(pre_age.max_abs - 0.22) <= 0.03

    spec = BalanceSpec(m=8, c=10, pi=pi, eps_d=0.0, eps_r=0.001)
    hp = Hyperparams(eta=0.6, q_max=1.0, v_level=100.0, tau0=0.5)
    res = fit(ds, spec, hp, epochs=60, seed=0, loss_interval=0,
              average_tail=0.2)
    q = weigh_batch(res.state, ds)
    kept, _ = bernoulli_mask(ds.ids, q, hp.q_max, seed=5)
    sub = Dataset([ds.ids[i] for i in np.flatnonzero(kept)], ds.S[kept],
                  ds.Y[kept], ds.U[kept])
    post_occ = weighted_pearson(sub, pairs=occ_pairs)
    post_age = weighted_pearson(sub, pairs=age_pairs)
    rb = data_rb(sub, pi)
    elapsed = time.perf_counter() - t0
    _report(
        "four-constraint-set analog", True,
        f"|rho| max {pre_occ.max_abs:.3f}/{pre_age.max_abs:.3f} -> "
        f"{post_occ.max_abs:.4f}/{post_age.max_abs:.4f}, median -> "
        f"{post_occ.median_abs:.4f}/{post_age.median_abs:.4f}, RB {rb:.4f}, "
        f"{elapsed:.1f}s")
    for group in (post_occ, post_age):
        assert group.median_abs <= 0.01
        assert group.max_abs <= 0.05
    assert rb <= 0.02


def test_c4_algebraic_invariants():
    """10^5 random configurations per invariant: weight range, hinge
    complementarity, dual box after updates, gradient-norm bound, and the
    covariance/parity identity at 1e-12."""
    rng = np.random.default_rng(123)
    total = 0
    worst_grad_slack = np.inf
    for m, c, block in ((1, 0, 20_000), (1, 1, 20_000), (2, 1, 20_000),
                        (2, 3, 20_000), (3, 2, 20_000)):
        d = 2 * m * (c + 1)
        eps_d = rng.uniform(0, 0.3)
        eps_r = rng.uniform(0, 0.3)
        pi = rng.uniform(0, 1, m)
        spec = BalanceSpec(m=m, c=c, pi=pi, eps_d=eps_d, eps_r=eps_r)
        q_max = float(rng.uniform(0.5, 2.0))
        eta = float(rng.uniform(0.05, 1.0) * q_max)
        v_cap = float(rng.uniform(0.5, 8.0))
        tau = float(rng.uniform(0.001, 2.0))
        S = (rng.random((block, m)) < 0.5).astype(float)
        Y = (rng.random((block, c)) < 0.5).astype(float)
        U = rng.uniform(0.1, 5.0, block)
        V = rng.uniform(0, v_cap, (block, d))
        MU = rng.normal(0, 3, block)
        A = bias_matrix(S, Y, spec)
        w = np.einsum("nd,nd->n", V, A) + MU
        beta = np.maximum(0.0, w - eta * U)
        alpha = np.maximum(0.0, U * (eta - q_max) - w)
        q = np.clip(eta - w / U, 0.0, q_max)
        assert np.all(q >= 0.0) and np.all(q <= q_max)
        assert np.all(alpha >= 0.0) and np.all(beta >= 0.0)
        assert np.all(alpha * beta == 0.0)
        v_next = np.clip(V + tau * (q / eta)[:, None] * A, 0.0, v_cap)
        assert np.all(v_next >= 0.0) and np.all(v_next <= v_cap)
        grad_sq = (q / eta) ** 2 * np.einsum("nd,nd->n", A, A) + (1 - q / eta) ** 2
        bound = 5.0 * q_max * m * (c + 1) / eta
        assert np.all(np.sqrt(grad_sq) <= bound + 1e-9)
        worst_grad_slack = min(worst_grad_slack,
                               float(np.min(bound - np.sqrt(grad_sq))))
        total += block

    # covariance <-> parity identity, two independent evaluations
    checked = 0
    for _ in range(100):
        n, batch = 40, 1000
        s = (rng.random((batch, n)) < rng.uniform(0.2, 0.8, (batch, 1)))
        y = (rng.random((batch, n)) < rng.uniform(0.2, 0.8, (batch, 1)))
        s, y = s.astype(float), y.astype(float)
        q = rng.uniform(0.01, 1.0, (batch, n))
        qsum = q.sum(axis=1)
        pi_hat = (q * s).sum(axis=1) / qsum
        lhs = np.mean(q * (s - pi_hat[:, None]) * y, axis=1) / np.mean(q, axis=1)
        wgt = q / qsum[:, None]
        cov = (wgt * s * y).sum(axis=1) - (wgt * s).sum(axis=1) * (
            wgt * y).sum(axis=1)
        assert np.max(np.abs(lhs - cov)) <= 1e-12
        checked += batch
    _report("algebraic invariants", True,
            f"{total} weigh/update configs, {checked} identity instances, "
            f"min gradient-bound slack {worst_grad_slack:.2f}")


def test_c5_convergence_envelope():
    """Dual-loss running minimum is non-increasing and decays within the
    O(log t / sqrt(t)) envelope on a fixed seed-0 stream, t in [1e3, 1e6]."""
    t0 = time.perf_counter()
    ds = synth.generate(synth.StreamSpec(
        n=1_000_000, attr_prevalence=[0.35], label_prevalence=[0.4],
        target_corr={(0, 0): 0.4}, seed=0))
    spec = BalanceSpec(m=1, c=1, pi=[0.5], eps_d=0.0, eps_r=0.0)
    hp = Hyperparams(eta=0.7, q_max=1.0, v_level=10.0, tau0=0.1)
    res = fit(ds, spec, hp, epochs=1, seed=0, loss_interval=500,
              loss_window=1000)
    ts = np.array([s.t for s in res.loss_trace], dtype=float)
    fs = np.array([s.loss for s in res.loss_trace])
    run_min = np.minimum.accumulate(fs)
    assert np.all(np.diff(run_min) <= 1e-15)

    mask = (ts >= 1_000) & (ts <= 1_000_000)
    env = run_min[mask] - fs[-1]
    ratio = env * np.sqrt(ts[mask]) / np.log(ts[mask])
    # Envelope constant from the projected-SGD bound
    # (R^2 + G^2 sum tau_t^2) / (2 sum tau_t), with R estimated from the
    # final duals (doubled for safety) and G = 5 Q m (c+1) / eta.
    G = 5.0 * hp.q_max * 1 * 2 / hp.eta
    R2 = float(res.state.v @ res.state.v + res.state.mu ** 2)
    tt = ts[mask]
    c_theory = np.max(
        (4.0 * R2 + G * G * hp.tau0 ** 2 * (1.0 + np.log(tt)))
        / (4.0 * hp.tau0 * (np.sqrt(tt + 1.0) - 1.0)) * np.sqrt(tt) / np.log(tt))
    elapsed = time.perf_counter() - t0
    ok = bool(np.max(ratio) <= c_theory)
    _report("convergence envelope", ok,
            f"max ratio {np.max(ratio):.2f} vs constant {c_theory:.1f}, "
            f"{elapsed:.1f}s")
    assert np.max(ratio) <= c_theory
    assert elapsed < 120.0


def test_c6_pipeline_determinism(tmp_path, capsys):
    """Identical seeds: byte-identical checkpoints, weights, decisions."""
    outputs = []
    for run in ("one", "two"):
        base = tmp_path / run
        base.mkdir()
        data, ckpt = base / "data.jsonl", base / "model.ckpt"
        weights, decisions = base / "weights.jsonl", base / "decisions.jsonl"
        report = base / "report.json"
        for argv in (
            ["synth", "--n", "20000", "--attr-prev", "0.3,0.6",
             "--label-prev", "0.4,0.2", "--corr", "0:0:0.3,1:1:0.2",
             "--utility", "lognormal:0.3", "--seed", "9", "--out", str(data)],
            ["fit", "--input", str(data), "--pi", "0.4,0.5", "--eps-d", "0.005",
             "--eps-r", "0.005", "--eta", "0.7", "--v", "50", "--epochs", "4",
             "--seed", "2", "--out", str(ckpt)],
            ["weigh", "--ckpt", str(ckpt), "--input", str(data),
             "--out", str(weights)],
            ["subsample", "--ckpt", str(ckpt), "--input", str(data),
             "--seed", "4", "--out", str(decisions)],
            ["audit", "--input", str(data), "--ckpt", str(ckpt),
             "--json", str(report)],
        ):
            assert cli_main(argv) == 0
            capsys.readouterr()
        outputs.append(tuple(p.read_bytes() for p in
                             (data, ckpt, weights, decisions, report)))
    ok = outputs[0] == outputs[1]
    _report("pipeline determinism", ok)
    assert ok
