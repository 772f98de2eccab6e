"""Exact simulation by Ogata thinning and time-rescaling residuals.

The dominating rate between two events is

    lambda_bar = sum_k Phi[ max_j mu_kj + g_bar * sum_l sup phi_kl over the window ]

with ``max_j mu_kj`` and ``g_bar`` bounding the baseline and the
reproduction rate over all of [0, 1] (Bernstein curves sit below their
largest weight). Monotone kernels only decay between events, so the
bound holds until the next acceptance. Gaussian kernels may rise, and
their bound is refreshed on a grid of step ``1 / (2 sqrt(beta))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _fast, basis
from .core import EventSequence, ParamVector, RngStream
from .errors import DomainError, DominationViolated, EventCapExceeded, Unstable
from .intensity import ModelSpec, activation
from .kernels import phi, spectral_radius, truncation_lag
from .likelihood import LikelihoodWorkspace

UNIFORM_BATCH = 3 * 4096


@dataclass(frozen=True)
class SinusoidalRate:
    """Reproduction rate ``gamma + amplitude * sin(frequency * x)`` on [0, 1]."""

    gamma: float
    amplitude: float
    frequency: float

    def __post_init__(self):
        if self.gamma - abs(self.amplitude) < 0:
            raise DomainError("sinusoidal rate must stay non-negative")

    def __call__(self, x):
        return self.gamma + self.amplitude * np.sin(self.frequency * np.asarray(x, dtype=np.float64))

    @property
    def sup(self) -> float:
        return self.gamma + abs(self.amplitude)

    def argmax(self, grid: int = 100_001) -> float:
        x = np.linspace(0.0, 1.0, grid)
        return float(x[np.argmax(self(x))])


@dataclass(frozen=True, eq=False)
class SimConfig:
    """What to simulate.

    ``rate`` optionally replaces the Bernstein reproduction rate held in
    ``theta.varpi`` by a :class:`SinusoidalRate`.
    """

    spec: ModelSpec
    theta: ParamVector
    horizon: float
    rng: RngStream
    max_events: int | None = None
    rate: SinusoidalRate | None = None

    def __post_init__(self):
        if not self.horizon > 0:
            raise DomainError("horizon must be positive")
        self.spec.check_theta(self.theta)

    def g_bound(self) -> float:
        if self.rate is not None:
            return self.rate.sup
        return float(np.max(self.theta.varpi))

    def g(self, x):
        if self.rate is not None:
            return self.rate(x)
        return basis.g_eval(self.theta.varpi, x)

    def branching_radius(self) -> float:
        return self.g_bound() * spectral_radius(self.spec.kernel_family(self.theta.eta).masses())

    def event_cap(self) -> int:
        if self.max_events is not None:
            return int(self.max_events)
        A = self.g_bound() * self.spec.kernel_family(self.theta.eta).masses()
        mu = self.spec.baseline_sup(self.theta.eta)
        if self.spec.activation == "softplus":
            mu = activation(mu, "softplus", self.spec.floor)
        mean = np.linalg.solve(np.eye(self.spec.dimension) - A, mu)
        lam_bar = float(np.max(mean))
        K = self.spec.dimension
        return int(math.ceil(10 * K * self.horizon * max(lam_bar, 1e-3))) + 100


def thinning_simulate(cfg: SimConfig) -> EventSequence:
    """One trajectory on [0, horizon] started from an empty history."""
    rho = cfg.branching_radius()
    if not rho < 1.0:
        raise Unstable(f"sup g times the spectral radius of the kernel masses is {rho:.4g} >= 1")
    if cfg.spec.kernel == "exponential":
        return _simulate_exponential(cfg)
    return _simulate_generic(cfg)


def _simulate_exponential(cfg: SimConfig) -> EventSequence:
    spec, eta = cfg.spec, cfg.theta.eta
    K, T = spec.dimension, float(cfg.horizon)
    kp = spec.kernel_params(eta)
    alpha, beta = kp[..., 0].copy(), kp[..., 1].copy()
    jump = alpha * beta
    mu_coef = np.ascontiguousarray(spec.baseline_coefs(eta))
    mu_sup = mu_coef.max(axis=1)
    if cfg.rate is None:
        g_mode, g_par = 0, np.ascontiguousarray(cfg.theta.varpi, dtype=np.float64)
    else:
        g_mode, g_par = 1, np.array([cfg.rate.gamma, cfg.rate.amplitude, cfg.rate.frequency])
    cap = cfg.event_cap()
    out_t = np.empty(cap)
    out_c = np.empty(cap, dtype=np.int64)
    R = np.zeros((K, K))
    gen = cfg.rng.generator()
    t, n = 0.0, 0
    softplus = spec.activation == "softplus"
    while True:
        u = gen.random(UNIFORM_BATCH)
        t, n, status, _ = _fast.thin_exp(T, t, R, mu_coef, mu_sup, g_mode, g_par, cfg.g_bound(),
                                         jump, beta, softplus, spec.floor, u, out_t, out_c, n)
        if status == 0:
            break
        if status == 2:
            raise EventCapExceeded(f"more than {cap} events before t = {t:.6g}")
        if status == 3:
            raise DominationViolated(f"intensity exceeded its dominating rate at t = {t:.6g}")
    return _to_events(T, K, out_t[:n], out_c[:n])


def _to_events(T, K, times, comps) -> EventSequence:
    return EventSequence(T, [times[comps == k] for k in range(K)])


def _window_sup(kernel, params, lo, hi):
    """Upper bound of phi on lags in [lo, hi]."""
    if kernel == "gaussian":
        return phi(kernel, params, np.clip(params[..., 2], lo, hi))
    return phi(kernel, params, lo)


def _simulate_generic(cfg: SimConfig) -> EventSequence:
    """Direct-sum thinning for non-exponential kernels; slow but exact."""
    spec, eta = cfg.spec, cfg.theta.eta
    K, T = spec.dimension, float(cfg.horizon)
    kp = spec.kernel_params(eta)
    cut = truncation_lag(spec.kernel, kp)
    window = np.inf
    if spec.kernel == "gaussian":
        window = 1.0 / (2.0 * math.sqrt(float(kp[..., 1].min())))
    mu_sup = spec.baseline_sup(eta)
    g_bar = cfg.g_bound()
    cap = cfg.event_cap()
    gen = cfg.rng.generator()
    times: list[float] = []
    comps: list[int] = []
    t = 0.0

    def excitation(now, hi_lag=0.0, sup=False):
        # sum over l of kernel sums for each k; events at `now` count when sup is set
        tot = np.zeros(K)
        if not times:
            return tot
        ta = np.asarray(times)
        ca = np.asarray(comps)
        for k in range(K):
            for l in range(K):
                tl = ta[ca == l]
                lag = now - tl
                keep = (lag >= 0) if sup else (lag > 0)
                keep &= lag <= cut[k, l] + hi_lag
                if not keep.any():
                    continue
                if sup:
                    tot[k] += _window_sup(spec.kernel, kp[k, l], lag[keep], lag[keep] + hi_lag).sum()
                else:
                    tot[k] += phi(spec.kernel, kp[k, l], lag[keep]).sum()
        return tot

    while True:
        h = min(window, T - t)
        bound = float(activation(mu_sup + g_bar * excitation(t, h, sup=True), spec.activation, spec.floor).sum())
        tau = gen.exponential(1.0 / bound)
        if tau > h:
            t += h
            if t >= T:
                break
            continue
        t += tau
        x = t / T
        lam = activation(spec.baseline(eta, x) + cfg.g(x) * excitation(t), spec.activation, spec.floor)
        total = float(lam.sum())
        if total > bound * (1.0 + 1e-12):
            raise DominationViolated(f"intensity exceeded its dominating rate at t = {t:.6g}")
        u, v = gen.random(2)
        if u * bound <= total:
            if len(times) >= cap:
                raise EventCapExceeded(f"more than {cap} events before t = {t:.6g}")
            c = min(int(np.searchsorted(np.cumsum(lam), v * total, side="right")), K - 1)
            times.append(t)
            comps.append(c)
    return _to_events(T, K, np.asarray(times, dtype=np.float64), np.asarray(comps, dtype=np.int64))


def time_rescaling_residuals(spec: ModelSpec, theta: ParamVector, events: EventSequence) -> list:
    """Compensator increments between consecutive events of each component.

    The first increment runs from time 0. Under the model these are i.i.d.
    unit exponentials.
    """
    cum = LikelihoodWorkspace(spec, events).cumulative_compensator(theta)
    return [np.diff(np.concatenate([[0.0], c])) for c in cum]
