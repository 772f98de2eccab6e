"""Monte Carlo experiments: null distribution of the statistic, power curves,
reproduction-rate recovery, and batch analysis of order-book sessions.

Replicate ``r`` always draws from ``RngStream(seed, r)``, so results do not
depend on scheduling. Per-replicate rows are appended to their CSV as they
finish; a rerun reads the file back and skips finished replicates. On
completion the file is rewritten in replicate order, which makes its bytes
a function of the configuration alone.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from . import __version__, basis
from .core import ParamVector, RngStream
from .errors import HawkesError, Unstable
from .estimate import FitOptions, mle_fit, mle_fit_constant_g
from .intensity import univariate_spec
from .lobio import (build_orderflow_model, endogeneity_profile, parse_lob_session,
                    read_manifest, synthetic_session, write_manifest)
from .lrt import POWER_HEADER, PowerConfig, lrs, power_replicate
from .simulate import SimConfig, SinusoidalRate, thinning_simulate

THREADS_ENV = "LSHAWKES_THREADS"
GRID_POINTS = 101


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


@dataclass
class ExperimentConfig:
    kind: str
    out: Path
    seed: int = 0
    replicates: int = 0
    horizon: float = 2000.0
    degree: int = 3
    threads: int = field(default_factory=default_threads)
    allow_failures: bool = False
    params: dict = field(default_factory=dict)

    def get(self, key, default, cast=float):
        v = self.params.get(key, default)
        return cast(v) if v is not None else None

    def get_list(self, key, default, cast=float) -> list:
        v = self.params.get(key)
        if v is None:
            return list(default)
        if isinstance(v, (list, tuple)):
            return [cast(a) for a in v]
        return [cast(a) for a in str(v).replace(";", ",").split(",") if a.strip()]


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else ("nan" if math.isnan(v) else repr(v))
    return "" if v is None else str(v)


class ResumableTable:
    """CSV of per-replicate rows keyed by the first column."""

    def __init__(self, path: Path, header: list):
        self.path, self.header = Path(path), list(header)
        self.rows: dict = {}
        if self.path.exists():
            with open(self.path, newline="") as fh:
                reader = csv.DictReader(fh)
                if reader.fieldnames == self.header:
                    for row in reader:
                        self.rows[row[self.header[0]]] = row
        self._rewrite()

    def done(self, key) -> bool:
        row = self.rows.get(str(key))
        return row is not None and not row.get("failure")

    def add(self, row: dict) -> None:
        row = {k: _fmt(row.get(k)) for k in self.header}
        self.rows[row[self.header[0]]] = row
        with open(self.path, "a", newline="") as fh:
            csv.DictWriter(fh, fieldnames=self.header, lineterminator="\n").writerow(row)

    def _rewrite(self, order=None) -> None:
        keys = order if order is not None else list(self.rows)
        with open(self.path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=self.header, lineterminator="\n")
            w.writeheader()
            for k in keys:
                w.writerow(self.rows[k])

    def finalize(self, sort_key=int) -> list:
        order = sorted(self.rows, key=sort_key)
        self._rewrite(order)
        return [self.rows[k] for k in order]


def _pool_map(fn, tasks, threads: int):
    """Yield results in task order, serially or from a process pool."""
    if threads <= 1 or len(tasks) <= 1:
        for t in tasks:
            yield fn(t)
        return
    with ProcessPoolExecutor(max_workers=threads) as ex:
        yield from ex.map(fn, tasks, chunksize=1)


def write_manifest_json(out: Path, command: str, cfg: ExperimentConfig, outputs: list, extra=None) -> None:
    info = {
        "command": command,
        "version": __version__,
        "seed": cfg.seed,
        "config": {k: (str(v) if isinstance(v, Path) else v) for k, v in asdict(cfg).items()},
        "outputs": [str(Path(p).name) for p in outputs],
        "finished": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    if extra:
        info.update(extra)
    (Path(out) / "manifest.json").write_text(json.dumps(info, indent=2, default=str))


# --- null distribution ------------------------------------------------------

NULL_HEADER = ["replicate", "lambda", "p_raw", "k_hat", "p_corrected", "failure"]
NULL_SUMMARY_HEADER = ["replicates", "completed", "ks_distance", "reject_raw", "reject_corrected"]


def null_model(cfg: ExperimentConfig):
    spec = univariate_spec("exponential", cfg.degree, alpha=cfg.get("alpha", 0.5))
    theta = ParamVector(np.array([cfg.get("mu", 1.0), cfg.get("beta", 2.0)]),
                        np.full(cfg.degree + 1, cfg.get("g", 1.0)))
    return spec, theta


def _null_task(args):
    spec, theta, T, seed, r = args
    try:
        events = thinning_simulate(SimConfig(spec, theta, T, RngStream(seed, r)))
        rep = lrs(spec, events, opts=FitOptions(n_starts=1, rng=RngStream(seed, r)))
        return {"replicate": r, "lambda": rep.lam, "p_raw": rep.p_raw, "k_hat": rep.k_hat,
                "p_corrected": rep.p_corrected, "failure": ""}
    except HawkesError as exc:
        return {"replicate": r, "failure": type(exc).__name__}


def run_null_dist(cfg: ExperimentConfig) -> dict:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    spec, theta = null_model(cfg)
    _check_stable(SimConfig(spec, theta, cfg.horizon, RngStream(cfg.seed)))
    table = ResumableTable(out / "null_dist.csv", NULL_HEADER)
    todo = [(spec, theta, cfg.horizon, cfg.seed, r) for r in range(cfg.replicates) if not table.done(r)]
    for row in _pool_map(_null_task, todo, cfg.threads):
        table.add(row)
    rows = [r for r in table.finalize() if int(r["replicate"]) < cfg.replicates]
    good = [r for r in rows if not r["failure"]]
    lam = np.array([float(r["lambda"]) for r in good])
    summary = {
        "replicates": cfg.replicates,
        "completed": len(good),
        "ks_distance": float(stats.kstest(lam, "chi2", args=(cfg.degree,)).statistic) if lam.size else math.nan,
        "reject_raw": float(np.mean([float(r["p_raw"]) < 0.05 for r in good])) if good else math.nan,
        "reject_corrected": float(np.mean([float(r["p_corrected"]) < 0.05 for r in good])) if good else math.nan,
    }
    _write_summary(out / "null_dist_summary.csv", NULL_SUMMARY_HEADER, summary)
    write_manifest_json(out, "exp null-dist", cfg, ["null_dist.csv", "null_dist_summary.csv"])
    summary["failures"] = len(rows) - len(good)
    return summary


def _write_summary(path, header, row):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=header, lineterminator="\n")
        w.writeheader()
        w.writerow({k: _fmt(row[k]) for k in header})


def _check_stable(sim: SimConfig) -> None:
    rho = sim.branching_radius()
    if not rho < 1:
        raise Unstable(f"model is not sub-critical: {rho:.4g}")


# --- power --------------------------------------------------------------------

POWER_REP_HEADER = ["key", "config_id", "replicate", "lambda", "p_raw", "failure"]


def power_grid(cfg: ExperimentConfig) -> list:
    grid = []
    for d in cfg.get_list("degrees", [cfg.degree], int):
        for a0 in cfg.get_list("alpha0", [0.0, 0.3, 0.6]):
            grid.append(PowerConfig(f"d{d}_a{a0:g}", d, cfg.horizon, a0,
                                    gamma=cfg.get("gamma", 1.0), alpha1=cfg.get("alpha1", 1.0),
                                    mu=cfg.get("mu", 1.0), beta=cfg.get("beta", 2.0)))
    return grid


def _power_rep_task(args):
    c, pc, seed, r = args
    key = f"{c}:{r}"
    try:
        rep = power_replicate(pc, RngStream(seed, c * 1_000_000 + r))
        return {"key": key, "config_id": pc.config_id, "replicate": r, "lambda": rep.lam,
                "p_raw": rep.p_raw, "failure": ""}
    except HawkesError as exc:
        return {"key": key, "config_id": pc.config_id, "replicate": r, "failure": type(exc).__name__}


def run_power(cfg: ExperimentConfig) -> list:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    level = cfg.get("level", 0.05)
    grid = power_grid(cfg)
    for pc in grid:
        spec = univariate_spec("exponential", pc.degree)
        theta = ParamVector(np.array([pc.mu, pc.beta]), np.full(pc.degree + 1, pc.gamma))
        _check_stable(SimConfig(spec, theta, pc.horizon, RngStream(cfg.seed),
                                rate=SinusoidalRate(pc.gamma, pc.alpha0, pc.alpha1)))
    table = ResumableTable(out / "power_replicates.csv", POWER_REP_HEADER)
    todo = [(c, pc, cfg.seed, r) for c, pc in enumerate(grid) for r in range(cfg.replicates)
            if not table.done(f"{c}:{r}")]
    for row in _pool_map(_power_rep_task, todo, cfg.threads):
        table.add(row)
    rows = table.finalize(sort_key=lambda k: tuple(int(a) for a in k.split(":")))
    summary = []
    for c, pc in enumerate(grid):
        mine = [r for r in rows if r["key"].split(":")[0] == str(c) and int(r["replicate"]) < cfg.replicates]
        good = [r for r in mine if not r["failure"]]
        n = len(good)
        rej = sum(float(r["p_raw"]) < level for r in good)
        power = rej / n if n else math.nan
        se = math.sqrt(power * (1 - power) / n) if n else math.nan
        summary.append({"config_id": pc.config_id, "degree": pc.degree, "T": pc.horizon, "alpha0": pc.alpha0,
                        "rejections": rej, "replicates": n, "power": power, "se": se})
    with open(out / "power.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=POWER_HEADER, lineterminator="\n")
        w.writeheader()
        for row in summary:
            w.writerow({k: _fmt(row[k]) for k in POWER_HEADER})
    write_manifest_json(out, "exp power", cfg, ["power.csv", "power_replicates.csv"])
    return summary


# --- reproduction-rate recovery ---------------------------------------------

G_HEADER = ["replicate", "x", "g_hat", "g_true"]


def g_recovery_truth(cfg: ExperimentConfig) -> SinusoidalRate:
    return SinusoidalRate(cfg.get("gamma", 1.0), cfg.get("alpha0", 0.6), cfg.get("alpha1", 5.0))


def fit_reproduction_rate(spec, events, opts=None):
    """Full fit warm-started from the constant-rate fit."""
    opts = opts or FitOptions(n_starts=1)
    null = mle_fit_constant_g(spec, events, opts=opts)
    return mle_fit(spec, events, opts=opts, starts=[null.theta_hat])


def _g_task(args):
    spec, theta, rate, T, seed, r = args
    try:
        events = thinning_simulate(SimConfig(spec, theta, T, RngStream(seed, r), rate=rate))
        fit = fit_reproduction_rate(spec, events)
        return r, basis.g_eval(fit.theta_hat.varpi, np.linspace(0, 1, GRID_POINTS)), ""
    except HawkesError as exc:
        return r, None, type(exc).__name__


def run_g_recovery(cfg: ExperimentConfig) -> dict:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    rate = g_recovery_truth(cfg)
    spec = univariate_spec("exponential", cfg.degree, alpha=cfg.get("alpha", 0.5))
    theta = ParamVector(np.array([cfg.get("mu", 1.0), cfg.get("beta", 2.0)]), np.full(cfg.degree + 1, rate.gamma))
    _check_stable(SimConfig(spec, theta, cfg.horizon, RngStream(cfg.seed), rate=rate))
    x = np.linspace(0, 1, GRID_POINTS)
    truth = rate(x)
    path = out / "g_recovery.csv"
    done = {}
    if path.exists():
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames == G_HEADER:
                for row in reader:
                    if row["replicate"].isdigit():
                        done.setdefault(int(row["replicate"]), []).append(float(row["g_hat"]))
    curves = {r: np.array(v) for r, v in done.items() if len(v) == GRID_POINTS and r < cfg.replicates}
    failures = {}
    todo = [(spec, theta, rate, cfg.horizon, cfg.seed, r) for r in range(cfg.replicates) if r not in curves]
    for r, g, fail in _pool_map(_g_task, todo, cfg.threads):
        if fail:
            failures[r] = fail
        else:
            curves[r] = g
        _write_g_table(path, curves, x, truth)
    median = np.median(np.array([curves[r] for r in sorted(curves)]), axis=0) if curves else np.full(GRID_POINTS, np.nan)
    _write_g_table(path, curves, x, truth, median)
    err = np.abs(median - truth)
    inner = (x >= 0.1) & (x <= 0.9)
    summary = {"replicates": cfg.replicates, "completed": len(curves), "failures": len(failures),
               "max_median_abs_error_inner": float(err[inner].max()) if curves else math.nan,
               "argmax_median": float(x[np.nanargmax(median)]) if curves else math.nan,
               "argmax_true": rate.argmax()}
    (out / "g_recovery_summary.json").write_text(json.dumps(summary, indent=2))
    write_manifest_json(out, "exp g-recovery", cfg, ["g_recovery.csv", "g_recovery_summary.json"])
    return summary


def _write_g_table(path, curves, x, truth, median=None):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(G_HEADER)
        for r in sorted(curves):
            for xi, gi, ti in zip(x, curves[r], truth):
                w.writerow([r, _fmt(float(xi)), _fmt(float(gi)), _fmt(float(ti))])
        if median is not None:
            for xi, gi, ti in zip(x, median, truth):
                w.writerow(["median", _fmt(float(xi)), _fmt(float(gi)), _fmt(float(ti))])


# --- order-book sessions ------------------------------------------------------

LOB_HEADER = ["session", "path", "n_events", "cancels", "jittered", "lambda", "k_hat",
              "p_raw", "p_corrected", "rejected", "weights_on_boundary", "failure"]

# Synthetic order flow: sided interaction letters (a, b, c, d, e), decay,
# intraday baseline, and either a rising reproduction rate or a constant one.
LOB_LETTERS = (0.25, 0.12, 0.12, 0.2, 0.25)
LOB_BETA = 2.0
LOB_BASELINE = (0.4, 0.2, 0.15, 0.2, 0.4)
LOB_VARYING_G = (1.0, 0.3, 0.3, 1.5, 1.5)
LOB_CONSTANT_G = (1.0, 1.0, 1.0, 1.0, 1.0)


def synth_lob_batch(out, sessions: int, session_length: float, seed: int, varying: bool = True,
                    cancel_rate: float = 0.5) -> Path:
    """Write synthetic session CSVs and a manifest; returns the manifest path."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    ofs = build_orderflow_model(session_length, 1.0)
    theta = ofs.theta(LOB_LETTERS, LOB_BETA, LOB_BASELINE, LOB_VARYING_G if varying else LOB_CONSTANT_G)
    entries = []
    for s in range(sessions):
        _, text = synthetic_session(ofs, theta, RngStream(seed, s), cancel_rate=cancel_rate)
        p = out / f"session_{s:03d}.csv"
        p.write_text(text)
        entries.append((p.name, None))
    manifest = out / "manifest.csv"
    write_manifest(manifest, entries)
    return manifest


def _lob_task(args):
    i, path, vc, session_length, level, seed = args
    row = {"session": i, "path": str(path)}
    try:
        events, rep = parse_lob_session(path, session_length, vc)
        ofs = build_orderflow_model(events.horizon, 1.0)
        report = lrs(ofs.spec, events, opts=FitOptions(n_starts=1, rng=RngStream(seed, i)))
        profile = endogeneity_profile(report.fit_full, ofs, np.linspace(0, 1, GRID_POINTS))
        row.update({"n_events": events.n_events, "cancels": rep.cancels, "jittered": rep.jittered,
                    "lambda": report.lam, "k_hat": report.k_hat, "p_raw": report.p_raw,
                    "p_corrected": report.p_corrected, "rejected": int(report.p_corrected < level),
                    "weights_on_boundary": int(report.weights_on_boundary), "failure": ""})
        return row, profile
    except (HawkesError, OSError) as exc:
        row["failure"] = type(exc).__name__
        return row, None


def run_lob_analyze(cfg: ExperimentConfig, manifest) -> dict:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    entries = read_manifest(manifest)
    session_length = cfg.params.get("session_length")
    session_length = float(session_length) if session_length is not None else None
    level = cfg.get("level", 0.05)
    table = ResumableTable(out / "sessions.csv", LOB_HEADER)
    todo = [(i, p, vc, session_length, level, cfg.seed) for i, (p, vc) in enumerate(entries) if not table.done(i)]
    for row, profile in _pool_map(_lob_task, todo, cfg.threads):
        table.add(row)
        if profile is not None:
            with open(out / f"profile_{row['session']:03d}.csv", "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["x", "rho_hat"])
                for xv, rv in profile:
                    w.writerow([_fmt(xv), _fmt(rv)])
    rows = [r for r in table.finalize() if int(r["session"]) < len(entries)]
    good = [r for r in rows if not r["failure"]]
    summary = {"sessions": len(entries), "completed": len(good), "failures": len(rows) - len(good),
               "rejections": sum(int(r["rejected"]) for r in good), "level": level}
    (out / "lob_summary.json").write_text(json.dumps(summary, indent=2))
    write_manifest_json(out, "lob analyze", cfg, ["sessions.csv", "lob_summary.json"],
                        {"tie_rule": "i-th repeated timestamp within a component shifted by i * 1e-9 s"})
    return summary
