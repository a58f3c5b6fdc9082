"""Command-line entry point: ``spdefem <experiment> [options]``.

Values come from three layers, later ones winning: built-in defaults, a
flat ``key = value`` file given by ``--config``, and command-line flags.
The default seed may also be set through the SPDEFEM_SEED environment
variable.
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
import warnings
from dataclasses import fields

from .errors import SpdeFemError, ValidationError
from .experiments import EXPERIMENTS, ExperimentConfig, run

SEED_ENV = "SPDEFEM_SEED"
EXIT_OK, EXIT_OTHER, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 1, 3, 4

_FLAGS = {
    # config field: (type, help)
    "bc": (str, "boundary coefficients a0,b0,a1,b1"),
    "dt": (float, "time step"),
    "mass_dt": (float, "time step for the mass-matrix SDE form (default dt/10)"),
    "burn_in": (int, "burn-in steps"),
    "thin": (int, "steps between recorded samples"),
    "n_samples": (int, "recorded samples per chain"),
    "n_chains": (int, "independent chains"),
    "n_outer": (int, "outer Monte Carlo samples"),
    "n_inner": (int, "inner bridge fill-ins per outer sample"),
    "m_fine": (int, "fine grid cells for continuum paths"),
    "quad_order": (int, "Gauss-Legendre points per element"),
}
_EXTRA = {
    "ou": {"c": (float, "Robin coefficient and drift scale")},
    "bridge": {"g": (str, "drift family: tanh or sin"), "a": (float, "drift amplitude"),
               "k": (float, "frequency of the sin family"), "eps": (float, "endpoint window"),
               "n_accept": (int, "accepted oracle paths"), "oracle_steps": (int, "oracle Euler steps")},
    "tv-rate": {"potential": (str, "zero, neg-cos, neg-half-square, neg-logcosh or const:<c>")},
}
_SWITCHES = {
    "ou": {"drift_linear_coeff": "use drift -c M u instead of -c^2 M u"},
    "tv-rate": {"conditional": "also run the conditional estimator",
                "check_m_fine": "repeat each estimate with twice the fine grid"},
}
_NO_SDE = ("ou", "bridge", "linear-law")


def _parse_n(text):
    try:
        return tuple(int(v) for v in str(text).split(",") if v.strip())
    except ValueError as exc:
        raise ValidationError(f"bad --n value {text!r}") from exc


def build_parser():
    parser = argparse.ArgumentParser(prog="spdefem", description="Finite-element SPDE stationary-measure experiments")
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        p.add_argument("--n", default=None, help="grid size or comma separated list")
        p.add_argument("--seed", type=int, default=None, help=f"base seed (env {SEED_ENV}, default 0)")
        p.add_argument("--out", default=None, help="CSV output path, '-' for stdout")
        p.add_argument("--json", default=None, metavar="PATH", help="also write a JSON mirror")
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--config", default=None, help="key = value file")
        p.add_argument("--no-timing", action="store_true", help="write runtime_ms as 0")
        for key, (typ, text) in {**_FLAGS, **_EXTRA.get(name, {})}.items():
            p.add_argument("--" + key.replace("_", "-"), dest=key, type=typ, default=None, help=text)
        for key, text in _SWITCHES.get(name, {}).items():
            p.add_argument("--" + key.replace("_", "-"), dest=key, action="store_true", default=None, help=text)
        if name in _NO_SDE:
            p.add_argument("--no-sde", dest="sde", action="store_false", default=None,
                           help="skip the SDE sampling routes")
    return parser


def _read_config(path):
    parser = configparser.ConfigParser()
    with open(path) as fh:
        parser.read_string("[spdefem]\n" + fh.read())
    return dict(parser["spdefem"])


def _coerce(key, text, types):
    typ = types.get(key)
    if typ is None:
        raise ValidationError(f"unknown config key {key!r}")
    if typ is bool:
        return str(text).strip().lower() in ("1", "true", "yes", "on")
    if key == "n":
        return _parse_n(text)
    try:
        return typ(text)
    except ValueError as exc:
        raise ValidationError(f"bad value for {key}: {text!r}") from exc


def config_from_args(args) -> ExperimentConfig:
    types = {f.name: f.type for f in fields(ExperimentConfig)}
    scalar = {"int": int, "float": float, "str": str, "bool": bool}
    types = {k: next((t for s, t in scalar.items() if str(v).startswith(s)), str) for k, v in types.items()}
    types["n"] = tuple
    values = {}
    if args.config:
        for key, text in _read_config(args.config).items():
            key = key.replace("-", "_")
            if key == "out":
                key = "output_path"
            values[key] = _coerce(key, text, types)
    if args.seed is None and "seed" not in values and SEED_ENV in os.environ:
        values["seed"] = _coerce("seed", os.environ[SEED_ENV], types)
    for key, value in vars(args).items():
        if value is None or key in ("experiment", "config", "json", "jobs", "no_timing", "out"):
            continue
        values[key] = _parse_n(value) if key == "n" else value
    if args.out is not None:
        values["output_path"] = args.out
    values.pop("experiment", None)
    return ExperimentConfig(experiment=args.experiment, **values)


def _write(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        if args.jobs < 1:
            raise ValidationError("--jobs must be at least 1")
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            table = run(cfg, jobs=args.jobs)
        timing = not args.no_timing
        _write(cfg.output_path, table.to_csv(timing=timing))
        if args.json:
            _write(args.json, table.to_json(timing=timing))
    except SpdeFemError as exc:
        code = EXIT_VALIDATION if exc.category == "validation" else EXIT_NUMERICAL
        print(json.dumps({"error": exc.category, "message": str(exc)}), file=sys.stderr)
        return code
    except (OSError, TypeError, ValueError) as exc:
        print(json.dumps({"error": "other", "message": str(exc)}), file=sys.stderr)
        return EXIT_OTHER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
