"""
Command-line interface.

    randbq run     --experiment rbf-gaussian --n 150 --seed 7
    randbq repeat  --experiment matern-gaussian --repetitions 100
    randbq rates   --n-grid 32,64,128,256,512,1024,2048
    randbq fill
    randbq mcmc    --kernel matern32

Every :class:`~randbq.experiments.ExperimentConfig` field has a flag
(underscores become dashes).  ``--config FILE`` loads a JSON object with the
same field names; flags given on the command line win over the file, and the
file wins over the experiment preset.

Exit status: 0 on success, 1 on a runtime error, 2 on a usage error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys

from .errors import BQError, InvalidInputError
from .experiments import (ExperimentConfig, make_config, run_fill_study, run_mcmc, run_rate_study,
                          run_repeated, run_single)

COMMANDS = {
    "run": "rbf-gaussian",
    "repeat": "rbf-gaussian",
    "rates": "rate-study",
    "fill": "fill-study",
    "mcmc": "mcmc-hypers",
}


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _str_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


_TYPES = {
    "n_grid": _int_list,
    "samplers": _str_list,
    "include_alpha_factor": bool,
    "include_logdet": bool,
}


def _field_type(f: dataclasses.Field):
    if f.name in _TYPES:
        return _TYPES[f.name]
    t = str(f.type)
    if t.startswith("int"):
        return int
    if t.startswith("float"):
        return float
    return str


def _add_config_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", metavar="FILE", help="JSON file with config fields")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    for f in dataclasses.fields(ExperimentConfig):
        flag = "--" + f.name.replace("_", "-")
        ftype = _field_type(f)
        if ftype is bool:
            p.add_argument(flag, dest=f.name, action=argparse.BooleanOptionalAction,
                           default=argparse.SUPPRESS)
        else:
            p.add_argument(flag, dest=f.name, type=ftype, default=argparse.SUPPRESS,
                           metavar=f.name.upper())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="randbq", description="Bayesian quadrature experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        _add_config_flags(sub.add_parser(name))
    return parser


def parse_cli(args=None) -> tuple[str, ExperimentConfig]:
    """Parse ``args`` into ``(command, config)``; usage errors exit with status 2."""
    parser = build_parser()
    ns = vars(parser.parse_args(args))
    command = ns.pop("command")
    ns.pop("verbose", None)
    path = ns.pop("config", None)
    values = {}
    if path:
        try:
            with open(path) as fh:
                values = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            parser.error(f"cannot read config {path}: {exc}")
        if not isinstance(values, dict):
            parser.error("config file must hold a JSON object")
        known = {f.name for f in dataclasses.fields(ExperimentConfig)}
        unknown = sorted(set(values) - known)
        if unknown:
            parser.error(f"unknown config fields: {', '.join(unknown)}")
    values.update(ns)
    experiment = values.pop("experiment", COMMANDS[command])
    try:
        cfg = make_config(experiment, **values)
    except (InvalidInputError, TypeError) as exc:
        parser.error(str(exc))
    return command, cfg


def _report_run(res) -> None:
    k = res.kernel
    print(f"kernel {k.variant}: sigma_f2={k.sigma_f2:.4g} ell={k.ell:.4g}")
    for (sampler, n), a in res.aggregates.items():
        t = a.report
        print(f"{sampler:>8} n={n:<5} R={a.R:<4} mean={t.grand_mean:.6f} total_var={t.total:.3e} "
              f"95%=[{a.quantiles[0]:.5f}, {a.quantiles[1]:.5f}]")
    for sampler, fits in res.rates.items():
        for key, fit in fits.items():
            print(f"{sampler:>8} slope[{key}] = {fit.slope:.3f} (r2={fit.r_squared:.3f})")


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        command, cfg = parse_cli(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if "-v" in argv or "--verbose" in argv:
        logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        if command == "run":
            _report_run(run_single(cfg))
        elif command == "repeat":
            _report_run(run_repeated(cfg))
        elif command == "rates":
            _report_run(run_rate_study(cfg))
        elif command == "fill":
            study = run_fill_study(cfg)
            for s, fit in study.rates.items():
                print(f"{s:>8} fill slope = {fit.slope:.3f}")
        else:
            chain = run_mcmc(cfg)
            s2, ell = chain.posterior_mean
            print(f"acceptance={chain.acceptance_rate:.3f} sigma_f2={s2:.4g} ell={ell:.4g}")
    except (BQError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"outputs written to {cfg.output_dir}/")
    return 0
