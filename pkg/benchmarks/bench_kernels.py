#!/usr/bin/env python3
"""Benchmark the update loop: numba kernel vs pure-numpy fallback.

Runs the same seeded fit through both paths and reports steps/second, plus
line-ingestion throughput. The fallback is selected in a subprocess via
DATABALANCE_NO_NUMBA=1 so both paths get a fresh interpreter.

Usage: python benchmarks/bench_kernels.py [--steps N]
"""

import argparse
import io
import json
import os
import subprocess
import sys
import time

WORKER = """
import json, math, sys, time
import numpy as np
from databalance import synth, solver
from databalance.core import BalanceSpec, Hyperparams

steps = int(sys.argv[1])
n = min(200_000, steps)
ss = synth.StreamSpec(n=n, attr_prevalence=[0.3, 0.6],
                      label_prevalence=[0.2, 0.4, 0.5],
                      target_corr={(0, 0): 0.3}, seed=1)
ds = synth.generate(ss)
spec = BalanceSpec(m=2, c=3, pi=[0.4, 0.5], eps_d=0.0, eps_r=0.0)
hp = Hyperparams(eta=0.7, q_max=1.0, v_level=10.0)
epochs = max(1, math.ceil(steps / n))

# warm up (JIT compile on the numba path)
solver.fit(ds, spec, hp, epochs=1, seed=0, loss_interval=0)
t0 = time.perf_counter()
res = solver.fit(ds, spec, hp, epochs=epochs, seed=0, loss_interval=0)
dt = time.perf_counter() - t0
print(json.dumps({"steps": res.state.t, "seconds": dt}))
"""


def run_fit(disable_numba: bool, steps: int) -> dict:
    env = dict(os.environ, DATABALANCE_NO_NUMBA="1" if disable_numba else "")
    out = subprocess.run(
        [sys.executable, "-c", WORKER, str(steps)],
        check=True, capture_output=True, text=True, env=env,
    )
    return json.loads(out.stdout.strip().splitlines()[-1])


def bench_ingestion(n: int = 200_000) -> float:
    from databalance import synth
    from databalance.core import BalanceSpec
    from databalance.lineio import read_dataset, write_records

    ds = synth.generate(synth.StreamSpec(
        n=n, attr_prevalence=[0.3, 0.6], label_prevalence=[0.5], seed=0))
    buf = io.StringIO()
    write_records(iter(ds), buf)
    text = buf.getvalue()
    spec = BalanceSpec(m=2, c=1, pi=[0.3, 0.6])
    t0 = time.perf_counter()
    read_dataset(io.StringIO(text), spec)
    return n / (time.perf_counter() - t0)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--steps", type=int, default=2_000_000)
    args = parser.parse_args()

    print(f"update-loop benchmark, ~{args.steps:,} steps, m=2 c=3 (16 duals)")
    jit = run_fit(disable_numba=False, steps=args.steps)
    print(f"  numba kernel : {jit['steps'] / jit['seconds']:>12,.0f} steps/s "
          f"({jit['seconds']:.2f}s)")
    # the fallback is ~100x slower; keep its share small
    py = run_fit(disable_numba=True, steps=max(args.steps // 20, 200_000))
    print(f"  numpy fallback: {py['steps'] / py['seconds']:>12,.0f} steps/s "
          f"({py['seconds']:.2f}s)")
    print(f"  speedup      : {jit['steps'] / jit['seconds'] / (py['steps'] / py['seconds']):.1f}x")

    rate = bench_ingestion()
    print(f"ingestion     : {rate:>12,.0f} records/s")


if __name__ == "__main__":
    main()
