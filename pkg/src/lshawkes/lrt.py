"""Likelihood-ratio test of a time-invariant reproduction rate.

    Lambda = 2 * (max loglik over (eta, varpi) - max loglik over (eta, C))

is asymptotically chi-squared with ``degree`` degrees of freedom when the
truth is interior. When some non-negative kernel amplitudes are zero in
the constrained fit but positive in the full fit, the survival at
``degree + k_hat`` degrees of freedom gives a conservative p-value.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import gammaincc

from .core import EventSequence, ParamVector, RngStream
from .errors import DomainError, NestingViolation, ShapeMismatch
from .estimate import FitOptions, FitResult, mle_fit, mle_fit_constant_g
from .intensity import ModelSpec, univariate_spec
from .simulate import SimConfig, SinusoidalRate, thinning_simulate

NESTING_TOL = 1e-6


def chi2_sf(x: float, k: int) -> float:
    """Survival function of chi-squared with k degrees of freedom, ``Q(k/2, x/2)``."""
    if not (isinstance(k, (int, np.integer)) and k >= 1):
        raise DomainError("degrees of freedom must be a positive integer")
    if not x >= 0:
        raise DomainError("chi-squared argument must be non-negative")
    return float(gammaincc(0.5 * k, 0.5 * x))


def corrected_pvalue(lam: float, degree: int, k_hat: int) -> float:
    if k_hat < 0:
        raise DomainError("boundary counter must be non-negative")
    return chi2_sf(lam, int(degree) + int(k_hat))


def boundary_counter(fit_full: FitResult, fit_null: FitResult, spec: ModelSpec | None = None) -> int:
    """Amplitudes on their zero bound in the null fit and strictly positive in the full fit."""
    a, b = fit_full.theta_hat, fit_null.theta_hat
    if a.n_eta != b.n_eta or a.degree != b.degree:
        raise ShapeMismatch("fits are over different parameter spaces")
    p = a.n_eta
    if spec is not None:
        eligible = [i for i, kind in enumerate(spec.eta_kinds()) if kind == "alpha"]
    else:
        eligible = [i for i in range(p) if b.lower[i] == 0.0]
    null_zero = set(fit_null.active_bounds)
    full_active = set(fit_full.active_bounds)
    k = 0
    for i in eligible:
        on_zero = i in null_zero and b.lower[i] == 0.0 and b.eta[i] == 0.0
        if on_zero and i not in full_active and a.eta[i] > 0.0:
            k += 1
    return k


@dataclass(frozen=True, eq=False)
class TestReport:
    lam: float
    degree: int
    k_hat: int
    p_raw: float
    p_corrected: float
    fit_full: FitResult
    fit_null: FitResult
    weights_on_boundary: bool = False

    # a pytest collection guard; this class is not a test case
    __test__ = False

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam, "degree": self.degree, "k_hat": self.k_hat,
            "p_raw": self.p_raw, "p_corrected": self.p_corrected,
            "weights_on_boundary": self.weights_on_boundary,
            "recommendation": "lower the degree" if self.weights_on_boundary else None,
            "loglik_full": self.fit_full.loglik_value, "loglik_null": self.fit_null.loglik_value,
            "converged": [self.fit_full.converged, self.fit_null.converged],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def lrs(spec: ModelSpec, events: EventSequence, degree: int | None = None, bounds=None,
        opts: FitOptions | None = None) -> TestReport:
    """Fit both models and assemble the test report.

    The full fit is warm-started from the constrained optimum, which keeps
    the statistic non-negative up to the optimizer tolerance.
    """
    if degree is not None and degree != spec.degree:
        spec = spec.with_degree(degree)
    d = spec.degree
    if d < 1:
        raise DomainError("the test needs degree >= 1")
    opts = opts or FitOptions()
    null = mle_fit_constant_g(spec, events, bounds, opts)
    full = mle_fit(spec, events, bounds, opts, starts=[null.theta_hat])
    lam = 2.0 * (full.loglik_value - null.loglik_value)
    if lam < -NESTING_TOL:
        raise NestingViolation(f"constrained optimum exceeds the full one by {-lam / 2:.3g}")
    lam = max(lam, 0.0)
    k_hat = boundary_counter(full, null, spec)
    p = spec.n_eta
    w_fixed = set(full.fixed)
    on_boundary = any(i >= p and i not in w_fixed for i in full.active_bounds)
    return TestReport(lam, d, k_hat, chi2_sf(lam, d), corrected_pvalue(lam, d, k_hat),
                      full, null, on_boundary)


# --- power experiment -------------------------------------------------------

@dataclass(frozen=True)
class PowerConfig:
    """One alternative: sinusoidal reproduction rate over a univariate exponential model."""

    config_id: str
    degree: int
    horizon: float
    alpha0: float
    gamma: float = 1.0
    alpha1: float = 1.0
    mu: float = 1.0
    beta: float = 2.0


POWER_HEADER = ["config_id", "degree", "T", "alpha0", "rejections", "replicates", "power", "se"]


def power_replicate(cfg: PowerConfig, rng: RngStream, opts: FitOptions | None = None) -> TestReport:
    """Simulate one trajectory of the alternative and test it."""
    spec = univariate_spec("exponential", cfg.degree)
    theta = ParamVector(np.array([cfg.mu, cfg.beta]), np.full(cfg.degree + 1, cfg.gamma))
    rate = SinusoidalRate(cfg.gamma, cfg.alpha0, cfg.alpha1)
    events = thinning_simulate(SimConfig(spec, theta, cfg.horizon, rng, rate=rate))
    return lrs(spec, events, opts=opts or FitOptions(n_starts=1))


def power_experiment(grid, level: float, replicates: int, rng: RngStream, out=None,
                     opts: FitOptions | None = None, map_fn=map) -> list:
    """Rejection rate at ``level`` for each configuration; rows follow ``POWER_HEADER``.

    Replicate r of configuration c uses stream ``c * 1_000_000 + r`` of ``rng.seed``.
    ``map_fn`` may be a pool's map for parallel execution.
    """
    if not 0 < level < 1:
        raise DomainError("level must lie in (0, 1)")
    opts = opts or FitOptions(n_starts=1)
    rows = []
    for c, cfg in enumerate(grid):
        tasks = [(cfg, rng.child(c * 1_000_000 + r), level, opts) for r in range(replicates)]
        rejected = list(map_fn(_power_task, tasks))
        n_rej = int(sum(rejected))
        power = n_rej / replicates if replicates else math.nan
        se = math.sqrt(power * (1 - power) / replicates) if replicates else math.nan
        rows.append({"config_id": cfg.config_id, "degree": cfg.degree, "T": cfg.horizon,
                     "alpha0": cfg.alpha0, "rejections": n_rej, "replicates": replicates,
                     "power": power, "se": se})
    if out is not None:
        with open(Path(out), "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=POWER_HEADER)
            w.writeheader()
            w.writerows(rows)
    return rows


def _power_task(args):
    cfg, rng, level, opts = args
    return power_replicate(cfg, rng, opts).p_raw < level
