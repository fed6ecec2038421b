"""Command-line entry point: ``python -m dxchange <verb> ...``.

Verbs
-----
run        run an experiment and write CSV
bounds     evaluate bound columns over a grid of ``n`` and ``epsilon``
exponents  sweep the error exponents of a single-letter source
peer       run one side of a two-process session (``listen`` or ``connect``)
certify    hash universality certificate plus a short invariant suite
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import fields

import numpy as np

from ..errors import DataExchangeError
from ..exponents import exponent_sweep
from ..hashing import two_universal_certificate
from ..sources import read_source
from . import experiment
from .config import BOUND_NAMES, MODES, PROTOCOLS, ExperimentConfig, load_config


def _csv_list(cast):
    return lambda s: [cast(v) for v in s.split(",") if v.strip()]


def _add_config_flags(p: argparse.ArgumentParser, with_mode: bool = True):
    p.add_argument("--config", help="configuration file (flags override its values)")
    p.add_argument("--source", help="source description file")
    p.add_argument("--seed", type=int, help="master seed (required unless set in the config)")
    p.add_argument("--protocol", choices=PROTOCOLS)
    p.add_argument("--n", type=int)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--eta", type=float)
    p.add_argument("--delta", help="'sqrt_width' or a slice width in bits")
    p.add_argument("--range-policy", dest="range_policy", help="exact_support or quantile:<delta>")
    p.add_argument("--trials", type=int)
    if with_mode:
        p.add_argument("--mode", choices=MODES)
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.add_argument("--bounds", type=lambda s: tuple(v.strip() for v in s.split(",") if v.strip()),
                   help=f"comma list from {', '.join(BOUND_NAMES)}")
    p.add_argument("--l", type=int)
    p.add_argument("--l-max", dest="l_max", type=int)
    p.add_argument("--rate", type=float)
    p.add_argument("--type-delta", dest="type_delta", type=float)
    p.add_argument("--verify-hashes", dest="verify_hashes", action="store_true", default=None)
    p.add_argument("--output", "-o", help="CSV output path (default stdout)")


def config_from_args(args, **force) -> ExperimentConfig:
    names = {f.name for f in fields(ExperimentConfig)}
    over = {k: getattr(args, k) for k in names if getattr(args, k, None) is not None}
    over.update(force)
    if args.config:
        return load_config(args.config).with_overrides(**over)
    missing = [k for k in ("source", "seed") if k not in over]
    if missing:
        raise DataExchangeError(f"missing --{' --'.join(missing)} (or pass --config)")
    return ExperimentConfig(**over)


def _emit(text: str, path):
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_run(args):
    cfg = config_from_args(args)
    res = experiment.run_experiment(cfg)
    _emit(res.csv(), args.output)


def cmd_peer(args):
    cfg = config_from_args(args, mode="peer-listen" if args.role == "listen" else "peer-connect")
    res = experiment.run_experiment(cfg)
    _emit(res.csv(), args.output)


def cmd_bounds(args):
    base = config_from_args(args, mode="simulate", seed=args.seed if args.seed is not None else 0)
    names = base.bounds or BOUND_NAMES
    ns = args.ns or [base.n]
    epss = args.epsilons or [base.epsilon]
    rows = []
    for n in ns:
        src = read_source(base.source, n)
        for eps in epss:
            cfg = base.with_overrides(n=n, epsilon=eps, bounds=tuple(names))
            rows.append({"n": n, "epsilon": eps, **experiment.compute_bounds(cfg, src)})
    cols = list(dict.fromkeys(k for r in rows for k in r))
    _emit(experiment.write_csv(rows, cols), args.output)


def cmd_exponents(args):
    src = read_source(args.source, 1)
    if not src.is_iid:
        raise DataExchangeError("exponents need a single-letter i.i.d. source")
    if args.rates:
        rates = args.rates
    else:
        rates = list(np.arange(args.start, args.stop + 1e-12, args.step))
    reps = exponent_sweep(src.sources[0], rates, args.resolution)
    rows = [r.as_row() for r in reps]
    cols = ["R", "E_r", "E_sp", "E_sp_simple", "r1_split", "q_r", "q_sp"]
    _emit(experiment.write_csv(rows, cols), args.output)


def cmd_certify(args):
    from .invariants import run_invariant_suite

    ok = True
    rep = two_universal_certificate(3, 2)
    print(f"exact m=3 l=2: max collision {rep.max_collision!r} vs 2^-l {rep.bound!r} -> {'PASS' if rep.passed else 'FAIL'}")
    ok &= rep.passed
    rep = two_universal_certificate(args.m, args.l, trials=args.trials, rng=args.seed)
    print(f"{rep.mode} m={args.m} l={args.l}: max collision {rep.max_collision!r} limit {rep.limit!r} -> "
          f"{'PASS' if rep.passed else 'FAIL'}")
    ok &= rep.passed
    if not args.skip_invariants:
        for name, passed, detail in run_invariant_suite(args.seed):
            print(f"{name}: {detail} -> {'PASS' if passed else 'FAIL'}")
            ok &= passed
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dxchange", description="Interactive data exchange toolkit")
    sub = ap.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("run", help="run an experiment and write CSV")
    _add_config_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("peer", help="run one party over TCP")
    p.add_argument("role", choices=("listen", "connect"))
    _add_config_flags(p, with_mode=False)
    p.set_defaults(func=cmd_peer)

    p = sub.add_parser("bounds", help="evaluate bounds over n and epsilon grids")
    _add_config_flags(p, with_mode=False)
    p.add_argument("--ns", type=_csv_list(int), help="comma list of block lengths")
    p.add_argument("--epsilons", type=_csv_list(float), help="comma list of epsilon values")
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("exponents", help="error exponent sweep")
    p.add_argument("--source", required=True)
    p.add_argument("--rates", type=_csv_list(float))
    p.add_argument("--start", type=float, default=1.0)
    p.add_argument("--stop", type=float, default=2.0)
    p.add_argument("--step", type=float, default=0.1)
    p.add_argument("--resolution", type=float, default=1e-3)
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_exponents)

    p = sub.add_parser("certify", help="hash universality and invariant checks")
    p.add_argument("--m", type=int, default=24)
    p.add_argument("--l", type=int, default=16)
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--skip-invariants", action="store_true")
    p.set_defaults(func=cmd_certify)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        rc = args.func(args)
    except DataExchangeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return rc or 0
