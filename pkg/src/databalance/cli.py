"""Command-line pipeline: synth -> fit -> weigh/subsample -> audit.

Every subcommand reads hyperparameters from flags or from a `key = value`
config file (flags win). Randomized paths require an explicit --seed. Exit
codes: 0 success, 1 usage error, 2 data error. The only environment
variable honored here is DATABALANCE_LOG (log verbosity).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import lineio, sampler, solver, synth
from .auditor import audit as run_audit
from .core import BalanceSpec, Hyperparams, Schedule, WeightedExample
from .errors import DataBalanceError, VersionMismatch
from .oracle import solve_exact

log = logging.getLogger("databalance")


class _Parser(argparse.ArgumentParser):
    """argparse with usage errors mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_common(p: _Parser, needs_seed: bool):
    p.add_argument("--config", help="key = value config file; flags override it")
    p.add_argument("--seed", type=int, required=False, help="RNG seed"
                   + (" (required)" if needs_seed else ""))


def _add_spec_hp(p: _Parser):
    p.add_argument("--pi", help="target prevalences, comma-separated or one value")
    p.add_argument("--eps-d", type=float, help="association tolerance (default 0.01)")
    p.add_argument("--eps-r", type=float, help="representation tolerance (default 0.01)")
    p.add_argument("--eta", type=float, help="target mean weight / subsampling rate")
    p.add_argument("--q-max", type=float, help="maximum weight (default 1.0)")
    p.add_argument("--v", type=float, dest="v_level", help="enforcement level (default 100)")
    p.add_argument("--tau0", type=float, help="base learning rate (default 0.1)")
    p.add_argument("--schedule", choices=["inverse_sqrt", "constant"])
    p.add_argument("--epochs", type=int, help="passes over the data (default 1)")


def build_parser() -> _Parser:
    parser = _Parser(prog="databalance", description=__doc__)
    # `oracle` exists for debugging but stays out of the advertised surface
    sub = parser.add_subparsers(
        dest="command", parser_class=_Parser,
        metavar="{fit,weigh,subsample,audit,search-eta,synth}",
    )

    p = sub.add_parser("fit", help="learn balancing duals over a dataset")
    p.add_argument("--input", required=True, help="records file or - for stdin")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--strict", action="store_true", help="malformed lines are fatal")
    p.add_argument("--no-shuffle", action="store_true")
    p.add_argument("--loss-interval", type=int)
    p.add_argument("--loss-window", type=int)
    p.add_argument("--average-tail", type=float,
                   help="return duals averaged over this trailing fraction of updates")
    _add_spec_hp(p)
    _add_common(p, needs_seed=True)

    p = sub.add_parser("weigh", help="emit per-record weights from a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", help="output path (default stdout)")
    p.add_argument("--strict", action="store_true")
    _add_spec_hp(p)
    _add_common(p, needs_seed=False)

    p = sub.add_parser("subsample", help="keep/drop records using a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", help="output path (default stdout)")
    p.add_argument("--mode", choices=["bernoulli", "topq"])
    p.add_argument("--rate-hint", type=float, help="kept fraction for topq mode")
    p.add_argument(
        "--kept-only",
        action="store_true",
        help="emit kept records in ingestion format instead of the decision log",
    )
    p.add_argument("--strict", action="store_true")
    _add_spec_hp(p)
    _add_common(p, needs_seed=True)

    p = sub.add_parser("audit", help="bias report for a dataset")
    p.add_argument("--input", required=True)
    p.add_argument("--ckpt", help="audit the weighting induced by this checkpoint")
    p.add_argument("--weights", help="weights file from `weigh` (id, q per line)")
    p.add_argument("--kept-only", action="store_true",
                   help="audit only records marked kept (decision logs)")
    p.add_argument("--json", dest="json_out", help="write machine-readable report here")
    p.add_argument("--strict", action="store_true")
    _add_spec_hp(p)
    _add_common(p, needs_seed=False)

    p = sub.add_parser("search-eta", help="largest feasible subsampling rate on a grid")
    p.add_argument("--input", required=True)
    p.add_argument("--grid", required=True, help="descending rates, comma-separated")
    p.add_argument("--violation-tol", type=float)
    p.add_argument("--strict", action="store_true")
    _add_spec_hp(p)
    _add_common(p, needs_seed=True)

    p = sub.add_parser("synth", help="generate a synthetic stream")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--attr-prev", required=True, help="attribute prevalences, comma-separated")
    p.add_argument("--label-prev", help="label prevalences, comma-separated")
    p.add_argument("--corr", help="k:r:rho triplets, comma-separated")
    p.add_argument("--utility", help="constant:VAL or lognormal:SIGMA")
    p.add_argument("--out", help="output path (default stdout)")
    _add_common(p, needs_seed=True)

    p = sub.add_parser("oracle", help="exact small-instance solve (debugging)")
    p.add_argument("--input", required=True)
    p.add_argument("--weights-out", help="write the optimal weights here")
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--strict", action="store_true")
    _add_spec_hp(p)
    _add_common(p, needs_seed=False)

    return parser


def _merged(args: argparse.Namespace) -> dict:
    """Effective options: config file values overridden by explicit flags."""
    merged = {}
    if getattr(args, "config", None):
        merged.update(lineio.parse_config(args.config))
    for key, val in vars(args).items():
        if key in ("config", "command") or val is None or val is False:
            continue
        merged[key] = val
    return merged


def _get_pi(opts: dict, dataset) -> np.ndarray:
    pi = opts.get("pi")
    if pi is None:
        return lineio.measured_pi(dataset)
    if isinstance(pi, str):
        pi = [float(x) for x in pi.split(",") if x.strip()]
    if isinstance(pi, (int, float)):
        pi = [float(pi)]
    if len(pi) == 1 and dataset.m > 1:
        pi = list(pi) * dataset.m
    return np.asarray(pi, dtype=np.float64)


def _build_spec(opts: dict, dataset) -> BalanceSpec:
    return BalanceSpec(
        m=dataset.m,
        c=dataset.c,
        pi=_get_pi(opts, dataset),
        eps_d=float(opts.get("eps_d", 0.01)),
        eps_r=float(opts.get("eps_r", 0.01)),
    )


def _build_hp(opts: dict) -> Hyperparams:
    if "eta" not in opts:
        raise _Usage("--eta is required (or set eta in the config file)")
    return Hyperparams(
        eta=float(opts["eta"]),
        q_max=float(opts.get("q_max", 1.0)),
        v_level=float(opts.get("v_level", 100.0)),
        tau0=float(opts.get("tau0", 0.1)),
        schedule=Schedule(opts.get("schedule", "inverse_sqrt")),
    )


def _require_seed(opts: dict) -> int:
    if "seed" not in opts:
        raise _Usage("--seed is required for randomized commands")
    return int(opts["seed"])


def _check_ckpt_spec(state, opts: dict):
    """CLI-provided spec fields must agree with the checkpoint."""
    pi = opts.get("pi")
    if pi is not None:
        if isinstance(pi, str):
            pi = [float(x) for x in pi.split(",") if x.strip()]
        if isinstance(pi, (int, float)):
            pi = [float(pi)]
        if len(pi) == 1:
            pi = list(pi) * state.spec.m
        if len(pi) != state.spec.m or list(pi) != list(state.spec.pi):
            raise VersionMismatch(
                f"--pi (length {len(pi)}) conflicts with checkpoint "
                f"(m={state.spec.m}, pi={list(state.spec.pi)})"
            )
    for key, actual in (
        ("eps_d", state.spec.eps_d),
        ("eps_r", state.spec.eps_r),
        ("eta", state.hp.eta),
        ("q_max", state.hp.q_max),
        ("v_level", state.hp.v_level),
    ):
        if key in opts and float(opts[key]) != actual:
            raise VersionMismatch(
                f"--{key.replace('_', '-')}={opts[key]} conflicts with "
                f"checkpoint value {actual}"
            )


class _Usage(Exception):
    pass


def _open_out(path: str):
    if path == "-":
        return sys.stdout, False
    return open(path, "w", encoding="utf-8"), True


def _load_ckpt(path: str):
    try:
        with open(path, "rb") as fp:
            return solver.load_checkpoint(fp.read())
    except OSError as exc:
        raise DataBalanceError(f"cannot read checkpoint {path}: {exc}") from exc


def _cmd_fit(args) -> int:
    opts = _merged(args)
    seed = _require_seed(opts)
    ds = lineio.read_dataset(opts["input"], strict=opts.get("strict", False))
    spec = _build_spec(opts, ds)
    hp = _build_hp(opts)
    result = solver.fit(
        ds,
        spec,
        hp,
        epochs=int(opts.get("epochs", 1)),
        seed=seed,
        loss_interval=int(opts.get("loss_interval", 1000)),
        loss_window=int(opts.get("loss_window", 1000)),
        shuffle=not opts.get("no_shuffle", False),
        average_tail=float(opts.get("average_tail", 0.0)),
    )
    with open(opts["out"], "wb") as fp:
        fp.write(solver.save_checkpoint(result.state))
    q = solver.weigh_batch(result.state, ds)
    report = run_audit(ds, spec.pi, q)
    print(report.render())
    print(f"\ncheckpoint written to {opts['out']} after {result.state.t} updates")
    return 0


def _cmd_weigh(args) -> int:
    opts = _merged(args)
    state = _load_ckpt(opts["ckpt"])
    _check_ckpt_spec(state, opts)
    ds = lineio.read_dataset(opts["input"], state.spec, strict=opts.get("strict", False))
    q = solver.weigh_batch(state, ds)
    fp, own = _open_out(opts.get("out", "-"))
    try:
        lineio.write_weights(ds.ids, q, fp)
    finally:
        if own:
            fp.close()
    return 0


def _cmd_subsample(args) -> int:
    opts = _merged(args)
    seed = _require_seed(opts)
    state = _load_ckpt(opts["ckpt"])
    _check_ckpt_spec(state, opts)
    ds = lineio.read_dataset(opts["input"], state.spec, strict=opts.get("strict", False))
    q = solver.weigh_batch(state, ds)
    mode = opts.get("mode", "bernoulli")
    if mode == "bernoulli":
        kept, draws = sampler.bernoulli_mask(ds.ids, q, state.hp.q_max, seed)
        decisions = [
            sampler.SampleDecision(ds.ids[i], float(q[i]), bool(kept[i]), float(draws[i]))
            for i in range(len(ds))
        ]
    else:
        weighted = [
            WeightedExample(example=ds.example(i), q=float(q[i]))
            for i in range(len(ds))
        ]
        decisions = sampler.subsample(
            weighted, mode="topq", seed=seed, rate_hint=opts.get("rate_hint"),
            q_max=state.hp.q_max,
        )
    fp, own = _open_out(opts.get("out", "-"))
    try:
        if opts.get("kept_only", False):
            kept_examples = (
                ds.example(i) for i, dec in enumerate(decisions) if dec.kept
            )
            lineio.write_records(kept_examples, fp)
        else:
            lineio.write_decisions(ds, q, decisions, fp)
    finally:
        if own:
            fp.close()
    n_kept = sum(1 for dec in decisions if dec.kept)
    log.info("subsample: kept %d of %d records", n_kept, len(decisions))
    return 0


def _cmd_audit(args) -> int:
    opts = _merged(args)
    state = _load_ckpt(opts["ckpt"]) if opts.get("ckpt") else None
    if state is not None:
        _check_ckpt_spec(state, opts)
    ds = lineio.read_dataset(
        opts["input"], strict=opts.get("strict", False),
        kept_only=opts.get("kept_only", False),
    )
    weights = None
    if state is not None:
        weights = solver.weigh_batch(state, ds)
        pi = state.spec.pi
    else:
        pi = _get_pi(opts, ds)
    if opts.get("weights"):
        by_id = {}
        with open(opts["weights"], "r", encoding="utf-8") as fp:
            for line in fp:
                if line.strip():
                    doc = json.loads(line)
                    by_id[doc["id"]] = float(doc["q"])
        weights = np.array([by_id[i] for i in ds.ids])
    report = run_audit(ds, pi, weights)
    print(report.render())
    if opts.get("json_out"):
        with open(opts["json_out"], "w", encoding="utf-8") as fp:
            fp.write(report.to_json() + "\n")
    return 0


def _cmd_search_eta(args) -> int:
    opts = _merged(args)
    seed = _require_seed(opts)
    ds = lineio.read_dataset(opts["input"], strict=opts.get("strict", False))
    spec = _build_spec(opts, ds)
    grid = opts["grid"]
    if isinstance(grid, str):
        grid = [float(x) for x in grid.split(",") if x.strip()]
    if isinstance(grid, (int, float)):
        grid = [float(grid)]
    hp = _build_hp({**opts, "eta": grid[0]})
    eta = solver.search_eta(
        ds,
        spec,
        hp,
        grid=grid,
        violation_tol=float(opts.get("violation_tol", 0.01)),
        seed=seed,
        epochs=int(opts.get("epochs", 1)),
    )
    print(eta)
    return 0


def _cmd_synth(args) -> int:
    opts = _merged(args)
    seed = _require_seed(opts)
    attr_prev = opts["attr_prev"]
    if isinstance(attr_prev, str):
        attr_prev = [float(x) for x in attr_prev.split(",") if x.strip()]
    if isinstance(attr_prev, (int, float)):
        attr_prev = [float(attr_prev)]
    label_prev = opts.get("label_prev", "")
    if isinstance(label_prev, str):
        label_prev = [float(x) for x in label_prev.split(",") if x.strip()]
    if isinstance(label_prev, (int, float)):
        label_prev = [float(label_prev)]
    corr = {}
    raw_corr = opts.get("corr", "")
    triplets = raw_corr.split(",") if isinstance(raw_corr, str) else raw_corr
    for item in triplets:
        item = str(item).strip()
        if not item:
            continue
        k, r, rho = item.split(":")
        corr[(int(k), int(r))] = float(rho)
    kind, _, param = str(opts.get("utility", "constant:1.0")).partition(":")
    stream_spec = synth.StreamSpec(
        n=int(opts["n"]),
        attr_prevalence=attr_prev,
        label_prevalence=label_prev,
        target_corr=corr,
        utility=(kind, float(param) if param else 1.0),
        seed=seed,
    )
    ds = synth.generate(stream_spec)
    fp, own = _open_out(opts.get("out", "-"))
    try:
        lineio.write_records(iter(ds), fp)
    finally:
        if own:
            fp.close()
    return 0


def _cmd_oracle(args) -> int:
    opts = _merged(args)
    ds = lineio.read_dataset(opts["input"], strict=opts.get("strict", False))
    spec = _build_spec(opts, ds)
    hp = _build_hp(opts)
    sol = solve_exact(
        ds, spec, hp, tol=float(opts.get("tol", 1e-6)),
        max_iter=int(opts.get("max_iter", 100_000)),
    )
    print(
        f"objective {sol.objective!r}  kkt_residual {sol.kkt_residual:.3e}  "
        f"iterations {sol.iterations}"
    )
    if opts.get("weights_out"):
        with open(opts["weights_out"], "w", encoding="utf-8") as fp:
            lineio.write_weights(ds.ids, sol.q_star, fp)
    return 0


_COMMANDS = {
    "fit": _cmd_fit,
    "weigh": _cmd_weigh,
    "subsample": _cmd_subsample,
    "audit": _cmd_audit,
    "search-eta": _cmd_search_eta,
    "synth": _cmd_synth,
    "oracle": _cmd_oracle,
}


def main(argv=None) -> int:
    level = os.environ.get("DATABALANCE_LOG", "warning").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if not args.command:
        parser.print_help(sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except _Usage as exc:
        print(f"databalance {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except DataBalanceError as exc:
        print(f"databalance {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"databalance {args.command}: invalid value: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
