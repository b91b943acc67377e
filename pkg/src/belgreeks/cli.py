"""Command-line experiment driver.

``belgreeks --preset svjj-call-gamma --paths 10000 --out gamma.csv`` runs every
estimator of the experiment over its (paths x steps) schedule and writes one
CSV row per (estimator, cell). Exit status: 0 if every cell succeeded, 2 on
a configuration error, 3 if at least one cell failed.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from dataclasses import dataclass

from .config import ConfigError, PresetCollisionError, RunConfig, find_preset, list_presets
from .estimators import run_estimator
from .stochastic_core import derive_seed

EXIT_OK, EXIT_CONFIG, EXIT_CELL = 0, 2, 3

COLUMNS = ("experiment", "estimator", "greek", "estimate", "stderr", "paths", "steps", "seed", "wall_time")


@dataclass(frozen=True)
class ResultRow:
    experiment: str
    estimator: str
    greek: str
    estimate: float
    stderr: float
    paths: int
    steps: int
    seed: int
    wall_time: float

    def as_csv(self) -> list:
        # repr keeps every float at full precision, so re-runs diff cleanly
        return [self.experiment, self.estimator, self.greek, repr(float(self.estimate)),
                repr(float(self.stderr)), str(self.paths), str(self.steps), str(self.seed),
                repr(float(self.wall_time))]


@dataclass
class RunReport:
    rows: list
    failures: list

    @property
    def status(self) -> int:
        return EXIT_CELL if self.failures else EXIT_OK


def run_config(cfg: RunConfig, log=None) -> RunReport:
    """Execute every (estimator, paths, steps) cell; failed cells give NaN rows and are collected."""
    rows, failures = [], []
    for i, n in enumerate(cfg.paths):
        for j, s in enumerate(cfg.steps):
            # one seed per cell, shared by all estimators so they see the same noise
            cell_seed = derive_seed(cfg.seed, i, j)
            for est, label in zip(cfg.estimators, cfg.labels):
                try:
                    res = run_estimator(est, n, s, cell_seed, cfg.workers)
                    rows.append(ResultRow(cfg.name, label, res.greek, res.estimate, res.stderr, res.paths, s,
                                          cell_seed, res.wall_time))
                except Exception as exc:  # noqa: BLE001 - every cell failure is reported, not raised
                    failures.append(f"{label} paths={n} steps={s}: {type(exc).__name__}: {exc}")
                    rows.append(ResultRow(cfg.name, label, est.greek, math.nan, math.nan, n, s, cell_seed, 0.0))
                if log is not None:
                    r = rows[-1]
                    log(f"{label:<40} paths={n:<9} steps={s:<5} {r.estimate:+.6g} +- {r.stderr:.3g}")
    return RunReport(rows, failures)


def write_csv(rows, stream):
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        w.writerow(r.as_csv())


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    write_csv(rows, buf)
    return buf.getvalue()


def _parser():
    p = argparse.ArgumentParser(prog="belgreeks", description="Monte Carlo delta/gamma experiments for jump-diffusions.")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--config", metavar="PATH", help="TOML run configuration")
    src.add_argument("--preset", metavar="NAME", help="shipped experiment (see --list-presets)")
    src.add_argument("--list-presets", action="store_true", help="print preset names and descriptions")
    p.add_argument("--seed", type=int, help="override the master seed")
    p.add_argument("--paths", type=int, nargs="+", metavar="N", help="override the paths schedule")
    p.add_argument("--steps", type=int, nargs="+", metavar="N", help="override the time-steps schedule")
    p.add_argument("--out", metavar="PATH", help="CSV destination ('-' for stdout)")
    p.add_argument("--workers", type=int, help="worker processes per estimator run")
    p.add_argument("--quiet", action="store_true", help="no progress lines on stderr")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        presets = list_presets()
    except PresetCollisionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.list_presets:
        for pr in presets:
            print(f"{pr.name}\t{pr.description}")
        return EXIT_OK
    try:
        if args.preset:
            path = find_preset(args.preset).path
        elif args.config:
            path = args.config
        else:
            raise ConfigError("--config", "give --config PATH or --preset NAME")
        cfg = RunConfig.load(path).override(args.seed, args.paths, args.steps, args.out, args.workers)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    log = None if args.quiet else (lambda msg: print(msg, file=sys.stderr))
    report = run_config(cfg, log)
    if cfg.out in (None, "-"):
        write_csv(report.rows, sys.stdout)
    else:
        with open(cfg.out, "w", newline="") as fh:
            write_csv(report.rows, fh)
    for f in report.failures:
        print(f"cell failed: {f}", file=sys.stderr)
    return report.status


if __name__ == "__main__":
    sys.exit(main())
