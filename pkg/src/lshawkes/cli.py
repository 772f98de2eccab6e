"""Command-line entry point.

    lshawkes simulate   --out DIR [--seed S] [--horizon T] [--config FILE]
    lshawkes fit        EVENTS.csv --out DIR [--degree D]
    lshawkes test       EVENTS.csv --out DIR [--degree D]
    lshawkes exp null-dist | power | g-recovery  --out DIR [--replicates N] ...
    lshawkes lob synth  --out DIR [--sessions N] [--constant]
    lshawkes lob analyze MANIFEST --out DIR

Configuration files are INI: one section per command (``[simulate]``,
``[fit]``, ``[null-dist]``, ``[power]``, ``[g-recovery]``, ``[lob]``) with
flat ``key = value`` pairs. Command-line flags override file values.
"""

from __future__ import annotations

import argparse
import configparser
import json
import sys
from pathlib import Path

import numpy as np

from .core import ParamVector, RngStream, read_events_csv, write_events_csv
from .errors import HawkesError
from .estimate import FitOptions, mle_fit
from .experiments import (ExperimentConfig, default_threads, run_g_recovery, run_lob_analyze,
                          run_null_dist, run_power, synth_lob_batch, write_manifest_json)
from .intensity import univariate_spec
from .lrt import lrs
from .simulate import SimConfig, SinusoidalRate, thinning_simulate

EXPERIMENTS = ("null-dist", "power", "g-recovery")
DESK_DEFAULTS = {
    "null-dist": {"horizon": 2000.0, "replicates": 500, "degree": 3},
    "power": {"horizon": 5000.0, "replicates": 200, "degree": 3},
    "g-recovery": {"horizon": 5000.0, "replicates": 50, "degree": 3},
}


def _read_section(path, section) -> dict:
    if path is None:
        return {}
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise FileNotFoundError(path)
    return dict(parser[section]) if parser.has_section(section) else {}


def _experiment_config(kind, args, section) -> ExperimentConfig:
    file_vals = _read_section(args.config, section)
    base = dict(DESK_DEFAULTS.get(kind, {}))
    for key in ("horizon", "replicates", "degree", "seed", "threads"):
        if key in file_vals:
            base[key] = file_vals.pop(key)
    for key in ("horizon", "replicates", "degree", "seed", "threads"):
        val = getattr(args, key, None)
        if val is not None:
            base[key] = val
    return ExperimentConfig(
        kind=kind, out=Path(args.out), seed=int(base.get("seed", 0)),
        replicates=int(base.get("replicates", 0)), horizon=float(base.get("horizon", 2000.0)),
        degree=int(base.get("degree", 3)), threads=int(base.get("threads", default_threads())),
        allow_failures=bool(getattr(args, "allow_failures", False)), params=file_vals)


def _model_from(cfg: ExperimentConfig):
    """Univariate exponential model; g from weights ``varpi`` or a sinusoid."""
    d = cfg.degree
    spec = univariate_spec("exponential", d, alpha=cfg.get("alpha", 0.5))
    weights = cfg.get_list("varpi", [cfg.get("g", 1.0)] * (d + 1))
    if len(weights) != d + 1:
        raise HawkesError(f"varpi needs {d + 1} weights")
    theta = ParamVector(np.array([cfg.get("mu", 1.0), cfg.get("beta", 2.0)]), np.array(weights))
    rate = None
    if "g_amplitude" in cfg.params:
        rate = SinusoidalRate(cfg.get("g_gamma", 1.0), cfg.get("g_amplitude", 0.0), cfg.get("g_frequency", 1.0))
    return spec, theta, rate


def cmd_simulate(args) -> int:
    cfg = _experiment_config("simulate", args, "simulate")
    cfg.out.mkdir(parents=True, exist_ok=True)
    spec, theta, rate = _model_from(cfg)
    events = thinning_simulate(SimConfig(spec, theta, cfg.horizon, RngStream(cfg.seed), rate=rate))
    write_events_csv(events, cfg.out / "events.csv", seed=cfg.seed)
    write_manifest_json(cfg.out, "simulate", cfg, ["events.csv", "events.csv.meta.json"],
                        {"n_events": events.n_events})
    print(f"{events.n_events} events on [0, {cfg.horizon:g}] -> {cfg.out / 'events.csv'}")
    return 0


def cmd_fit(args) -> int:
    cfg = _experiment_config("fit", args, "fit")
    cfg.out.mkdir(parents=True, exist_ok=True)
    events = read_events_csv(args.events)
    spec = univariate_spec("exponential", cfg.degree, alpha=cfg.get("alpha", 0.5))
    fit = mle_fit(spec, events, opts=FitOptions(n_starts=int(cfg.get("starts", 5)), rng=RngStream(cfg.seed)))
    (cfg.out / "fit.json").write_text(fit.to_json(events.horizon))
    write_manifest_json(cfg.out, "fit", cfg, ["fit.json"])
    print(fit.to_json(events.horizon))
    return 0 if fit.converged else 2


def cmd_test(args) -> int:
    cfg = _experiment_config("test", args, "test")
    cfg.out.mkdir(parents=True, exist_ok=True)
    events = read_events_csv(args.events)
    spec = univariate_spec("exponential", cfg.degree, alpha=cfg.get("alpha", 0.5))
    report = lrs(spec, events, opts=FitOptions(n_starts=int(cfg.get("starts", 1)), rng=RngStream(cfg.seed)))
    (cfg.out / "report.json").write_text(report.to_json())
    write_manifest_json(cfg.out, "test", cfg, ["report.json"])
    print(report.to_json())
    return 0


def cmd_exp(args) -> int:
    cfg = _experiment_config(args.experiment, args, args.experiment)
    if args.experiment == "null-dist":
        summary = run_null_dist(cfg)
    elif args.experiment == "power":
        rows = run_power(cfg)
        summary = {"rows": rows, "failures": sum(cfg.replicates - r["replicates"] for r in rows)}
    else:
        summary = run_g_recovery(cfg)
    print(json.dumps(summary, indent=2, default=str))
    return 0 if summary.get("failures", 0) == 0 or cfg.allow_failures else 1


def cmd_lob(args) -> int:
    cfg = _experiment_config("lob", args, "lob")
    if args.action == "synth":
        length = float(cfg.params.get("session_length", args.session_length))
        manifest = synth_lob_batch(cfg.out, args.sessions, length, cfg.seed, varying=not args.constant)
        print(f"wrote {args.sessions} sessions, manifest {manifest}")
        return 0
    if args.manifest is None:
        raise SystemExit("lob analyze needs a manifest path")
    summary = run_lob_analyze(cfg, args.manifest)
    print(json.dumps(summary, indent=2))
    return 0 if summary["failures"] == 0 or cfg.allow_failures else 1


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="INI file with one section per command")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", type=Path, default=Path("out"))
    common.add_argument("--replicates", type=int)
    common.add_argument("--threads", type=int, help="worker processes (default from LSHAWKES_THREADS)")
    common.add_argument("--degree", type=int)
    common.add_argument("--horizon", type=float)
    common.add_argument("--allow-failures", action="store_true")

    p = argparse.ArgumentParser(prog="lshawkes", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common]).set_defaults(func=cmd_simulate)
    for name, fn in (("fit", cmd_fit), ("test", cmd_test)):
        sp = sub.add_parser(name, parents=[common])
        sp.add_argument("events", type=Path)
        sp.set_defaults(func=fn)
    sp = sub.add_parser("exp", parents=[common])
    sp.add_argument("experiment", choices=EXPERIMENTS)
    sp.set_defaults(func=cmd_exp)
    sp = sub.add_parser("lob", parents=[common])
    sp.add_argument("action", choices=("analyze", "synth"))
    sp.add_argument("manifest", nargs="?", type=Path)
    sp.add_argument("--sessions", type=int, default=21)
    sp.add_argument("--session-length", type=float, default=2000.0)
    sp.add_argument("--constant", action="store_true", help="synthesise with a constant reproduction rate")
    sp.set_defaults(func=cmd_lob)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (HawkesError, FileNotFoundError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
