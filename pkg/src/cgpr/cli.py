"""
Command-line driver.

    cgpr exp1 --out results/ --seed 0
    cgpr equalize --profile ci --out results/ --cases soft-circular,strong-noncircular

Exit codes: 0 on success, 1 on a configuration error, 2 when every trial
(or seed) failed numerically.
"""

import argparse
import json
import logging
import sys
import time

import numpy as np

from .errors import ConfigError, NotPositiveDefinite
from .experiments import (
    ALGORITHMS,
    EqualizationConfig,
    Exp1Config,
    emit_results,
    run_equalization,
    run_experiment_1,
)

CASES = ("soft-circular", "strong-circular", "soft-noncircular", "strong-noncircular")
PROFILES = {
    "paper": {"exp1": {"seeds": list(range(10))}, "equalize": {"trials": 100, "train_cap": None}},
    "ci": {"exp1": {"seeds": [0, 1, 2]}, "equalize": {"trials": 10, "train_cap": None}},
}

log = logging.getLogger("cgpr")


def _csv_list(text):
    return [t.strip() for t in text.split(",") if t.strip()]


def build_parser():
    parser = argparse.ArgumentParser(prog="cgpr", description="Complex GP regression experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("exp1", "sampled-GP recovery on a 2-D complex grid"), ("equalize", "nonlinear channel equalization benchmark")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON file with configuration overrides")
        p.add_argument("--out", default="results", help="output directory (default: results)")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--profile", choices=tuple(PROFILES), default="paper")
        p.add_argument("--trials", type=int, help="number of trials (exp1: number of seeds)")
        p.add_argument("--samples", type=int, help="samples per trial (equalize)")
        p.add_argument("--algorithms", type=_csv_list, help=f"comma list from {','.join(ALGORITHMS)}")
        p.add_argument("--cases", type=_csv_list, help=f"comma list from {','.join(CASES)}")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    return data


def exp1_config(args):
    data = {**PROFILES[args.profile]["exp1"], **_load_config(args.config)}
    if args.seed is not None or args.trials is not None:
        first = args.seed if args.seed is not None else 0
        count = args.trials if args.trials is not None else len(data["seeds"])
        data["seeds"] = list(range(first, first + count))
    for flag in ("samples", "algorithms", "cases"):
        if getattr(args, flag) is not None:
            raise ConfigError(f"--{flag} does not apply to exp1")
    config = Exp1Config.from_dict(data)
    if config.n_train > config.grid_points**2:
        raise ConfigError("n_train exceeds the number of grid points")
    if not (config.grid_low <= -6.0 and config.grid_high >= 5.0):
        raise ConfigError("grid must cover [-6, 5] in both real and imaginary parts")
    return config


def equalize_configs(args):
    data = {**PROFILES[args.profile]["equalize"], **_load_config(args.config)}
    cases = data.pop("cases", None)
    if args.cases is not None:
        cases = args.cases
    cases = list(cases or CASES)
    unknown = [c for c in cases if c not in CASES]
    if unknown:
        raise ConfigError(f"unknown cases {unknown}; expected a subset of {list(CASES)}")
    for flag, key in (("seed", "seed"), ("trials", "trials"), ("samples", "samples"), ("algorithms", "algorithms")):
        value = getattr(args, flag)
        if value is not None:
            data[key] = value
    if data.get("trials", 1) < 1:
        raise ConfigError("trials must be at least 1")
    configs = []
    for case in cases:
        try:
            config = EqualizationConfig.case(case, **data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
        config.validate()
        configs.append(config)
    return configs


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "exp1":
            config = exp1_config(args)
        else:
            configs = equalize_configs(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1

    timings = {}
    if args.command == "exp1":
        t0 = time.perf_counter()
        try:
            report = run_experiment_1(config)
        except (NotPositiveDefinite, FloatingPointError, np.linalg.LinAlgError) as exc:
            print(f"numerical failure: {exc}", file=sys.stderr)
            return 2
        timings["exp1"] = {"total": time.perf_counter() - t0, "seeds": {r["seed"]: r["wall_time"] for r in report["runs"]}}
        reports = [report]
        print(f"exp1: median MSE {report['summary']['median_mse_db']:.2f} dB over {len(report['runs'])} seeds")
        all_failed = False
    else:
        reports = []
        all_failed = True
        for config in configs:
            t0 = time.perf_counter()
            report = run_equalization(config)
            timings[config.name] = {
                "total": time.perf_counter() - t0,
                "trials": [{a: d.get("wall_time") for a, d in t["details"].items()} for t in report["trials"]],
            }
            reports.append(report)
            for curve in report["curves"]:
                tail = curve.mse_db[-200:]
                ss = 10 * np.log10(np.mean(10 ** (tail / 10))) if curve.trials else float("nan")
                print(f"{config.name:20s} {curve.label:10s} steady-state {ss:7.2f} dB ({curve.trials} trials)")
            if any(t["details"] for t in report["trials"]):
                all_failed = False
    try:
        written = emit_results(reports, args.out, args.format, timings=timings)
    except OSError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    for path in written:
        log.info("wrote %s", path)
    if all_failed:
        print("numerical failure in every trial", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
