"""Command line entry point: ``clam {train,game,report,gen-data}``.

Exit codes: 0 success, 1 config error, 2 run failure, 3 a per-step regret
inequality was violated (game).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .data import gen_synthetic, save_csv
from .experiment import (
    ConfigError,
    ExperimentConfig,
    range_difference_table,
    read_runs,
    run_experiment,
    worst_class_table,
)
from .game import run_mw_game, tau_theorem, verify_theorem1
from .metrics import write_report_rows
from .simplex import MWConfig, Projection, RestrictedSimplex

log = logging.getLogger("clam")

EXIT_OK, EXIT_CONFIG, EXIT_RUN, EXIT_VIOLATION = 0, 1, 2, 3


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.replace(",", " ").split()]


def _pairs(text: str) -> list[tuple[int, int]]:
    out = []
    for item in text.replace(",", " ").split():
        a, b = item.split("-")
        out.append((int(a), int(b)))
    return out


def cmd_train(args) -> int:
    try:
        cfg = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
        cfg = cfg.override(seeds=args.seeds, output_dir=args.out)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    try:
        rows = run_experiment(cfg, cfg["output_dir"], workers=args.workers)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - any failed run aborts the sweep
        log.error("run failed, no aggregate written: %s", exc)
        return EXIT_RUN
    log.info("%d runs written to %s", len(rows), cfg["output_dir"])
    return EXIT_OK


def _load_matrix(spec: str, n: int, m: int, rng) -> np.ndarray:
    if spec == "random":
        return rng.random((n, m))
    if spec == "pennies":
        return np.eye(2)
    return np.loadtxt(spec, delimiter=",", ndmin=2)


def cmd_game(args) -> int:
    rng = np.random.default_rng(args.seed)
    try:
        M = _load_matrix(args.matrix, args.n, args.m, rng)
        n = M.shape[0]
        s = RestrictedSimplex(n, args.u_min)
        if args.T < 0:
            raise ValueError("T must be non-negative")
        if args.tau == "theorem":
            tau_mode = "theorem"
            tau = 1.0
        else:
            tau_mode = "fixed"
            tau = float(args.tau)
            if tau <= 0:
                raise ValueError("tau must be > 0")
    except (ValueError, OSError) as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG

    first_pass_alpha = None
    if tau_mode == "theorem" and args.T > 0:
        probe = run_mw_game(M, args.T, MWConfig(1.0, Projection.PROOF_CLIP), s)
        first_pass_alpha = verify_theorem1(probe, s).max_alpha
        tau = tau_theorem(n, args.T, first_pass_alpha)
    trace = run_mw_game(M, args.T, MWConfig(tau, Projection.PROOF_CLIP), s)
    diag = verify_theorem1(trace, s)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    trace.to_csv(out / "trace.csv")
    doc = diag.to_dict()
    doc.update({"n": n, "m": int(M.shape[1]), "T": args.T, "tau": tau, "tau_mode": tau_mode,
                "first_pass_max_alpha": first_pass_alpha, "u_min": args.u_min, "seed": args.seed,
                "summed_bound_holds": diag.summed_bound_holds})
    with open(out / "diagnostics.json", "w") as fh:
        json.dump(doc, fh, indent=2)
    if diag.per_step_violations:
        log.error("%d per-step inequality violations", diag.per_step_violations)
        return EXIT_VIOLATION
    return EXIT_OK


def cmd_report(args) -> int:
    rows = []
    for d in args.run_dirs:
        try:
            rows += read_runs(d)
        except OSError as exc:
            log.error("cannot read %s: %s", d, exc)
            return EXIT_CONFIG
    table, unpaired = range_difference_table(rows)
    for run_id in unpaired:
        log.warning("unpaired run skipped: %s", run_id)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_report_rows(out / "range_difference.csv", table, ["method", "range_diff", "range_diff_sd", "n_seeds"])
    write_report_rows(out / "worst_class.csv", worst_class_table(rows), ["method", "worst_acc", "worst_acc_sd", "n_runs"])
    return EXIT_OK


def cmd_gen_data(args) -> int:
    try:
        train, test = gen_synthetic(
            args.n_classes, args.dim, args.samples_per_class, _pairs(args.overlap_pairs), args.seed,
            test_per_class=args.test_per_class, separation=args.separation, overlap=args.overlap,
        )
    except ValueError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        save_csv(out / "train.csv", train)
        save_csv(out / "test.csv", test)
    except OSError as exc:
        log.error("cannot write to %s: %s", out, exc)
        return EXIT_RUN
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="clam", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="run a method x seed x augmentation sweep")
    t.add_argument("--config", help="flat YAML config file")
    t.add_argument("--seeds", type=_int_list, help="e.g. '0,1,2'")
    t.add_argument("--out", help="output directory (overrides output_dir)")
    t.add_argument("--workers", type=int, default=1)
    t.set_defaults(func=cmd_train)

    g = sub.add_parser("game", help="multiplicative weights vs best response on a payoff matrix")
    g.add_argument("--n", type=int, default=10, help="rows (classes) of a random matrix")
    g.add_argument("--m", type=int, default=8, help="columns of a random matrix")
    g.add_argument("--T", type=int, default=200)
    g.add_argument("--tau", default="1.0", help="learning rate, or 'theorem' for the two-pass choice")
    g.add_argument("--u-min", type=float, default=0.01)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--matrix", default="random", help="'random', 'pennies', or a CSV file")
    g.add_argument("--out", default="game_out")
    g.set_defaults(func=cmd_game)

    r = sub.add_parser("report", help="with-DA minus without-DA range table and worst-class table")
    r.add_argument("run_dirs", nargs="+")
    r.add_argument("--out", default="report_out")
    r.set_defaults(func=cmd_report)

    d = sub.add_parser("gen-data", help="write a synthetic dataset as train/test CSV")
    d.add_argument("--n-classes", type=int, default=5)
    d.add_argument("--dim", type=int, default=10)
    d.add_argument("--samples-per-class", type=int, default=200)
    d.add_argument("--test-per-class", type=int, default=None)
    d.add_argument("--overlap-pairs", default="", help="e.g. '0-1,0-2'")
    d.add_argument("--overlap", type=float, default=1.0)
    d.add_argument("--separation", type=float, default=10.0)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--out", default="data_out")
    d.set_defaults(func=cmd_gen_data)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
