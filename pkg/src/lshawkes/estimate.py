"""Box-constrained maximum likelihood.

The optimizer is a projected limited-memory BFGS on a reduced, unit-scaled
vector ``z``: ``theta = offset + design @ z`` where pinned coordinates live
in ``offset`` and tied coordinates (the constant reproduction rate) share
one column of ``design``. Each free coordinate of ``z`` ranges over [0, 1].

At every iterate the variables sitting on a bound with the gradient
pointing outwards are frozen; the quasi-Newton direction is computed on
the rest, and an Armijo search runs along the projected path. Any trial
point where the intensity vanishes at an event or where
``sup g * rho(masses) >= 1`` counts as a failed trial.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import basis
from .core import EventSequence, ParamVector, RngStream, clamp_to_bounds, validate_events
from .errors import AllStartsFailed, DomainError, HawkesError, SingularInformation
from .intensity import ModelSpec
from .kernels import spectral_radius
from .likelihood import LikelihoodWorkspace

ACTIVE_TOL = 1e-8
STABILITY_MARGIN = 0.99


@dataclass(frozen=True)
class FitOptions:
    max_iter: int = 500
    gtol: float = 1e-6
    xtol: float = 1e-9
    n_starts: int = 5
    rng: RngStream = field(default_factory=lambda: RngStream(0))
    memory: int = 10

    def __post_init__(self):
        if not (self.gtol > 0 and self.xtol > 0):
            raise DomainError("tolerances must be positive")
        if self.n_starts < 1 or self.max_iter < 1:
            raise DomainError("need at least one start and one iteration")


@dataclass(frozen=True, eq=False)
class FitResult:
    theta_hat: ParamVector
    loglik_value: float
    gradient_norm: float
    converged: bool
    observed_info: np.ndarray
    active_bounds: tuple
    fixed: tuple = ()
    free_design: np.ndarray = None
    names: tuple = ()
    n_iter: int = 0
    start_index: int = 0

    def to_dict(self, horizon: float | None = None) -> dict:
        se = None
        if horizon is not None:
            try:
                se = [None if not np.isfinite(v) else float(v) for v in standard_errors(self, horizon)]
            except SingularInformation:
                se = None
        names = list(self.names) or [str(i) for i in range(self.theta_hat.values.size)]
        return {
            "theta": dict(zip(names, map(float, self.theta_hat.values))),
            "loglik": float(self.loglik_value),
            "converged": bool(self.converged),
            "gradient_norm": float(self.gradient_norm),
            "se": None if se is None else dict(zip(names, se)),
            "active_bounds": [names[i] for i in self.active_bounds],
        }

    def to_json(self, horizon: float | None = None) -> str:
        return json.dumps(self.to_dict(horizon), indent=2)


# --- bounds and starts ------------------------------------------------------

def _gap_scale(events: EventSequence) -> float:
    times, _ = events.merged()
    gaps = np.diff(np.concatenate([[0.0], times]))
    gaps = gaps[gaps > 0]
    return float(np.median(gaps)) if gaps.size else events.horizon


def default_bounds(spec: ModelSpec, events: EventSequence, eta_start=None):
    """Box for theta. The reproduction-rate weights get ``[0, 2 * 0.99 / rho(start masses)]``."""
    T = events.horizon
    rate = max(events.n_events / T, 1.0 / T)
    kinds = spec.eta_kinds()
    lo = np.empty(spec.n_eta)
    hi = np.empty(spec.n_eta)
    for i, kind in enumerate(kinds):
        if kind == "baseline":
            lo[i], hi[i] = 1e-6, 20.0 * rate + 1.0
        elif kind == "alpha":
            lo[i], hi[i] = 0.0, 2.0
        elif kind == "beta":
            lo[i], hi[i] = ((1.01, 20.0) if spec.kernel == "powerlaw" else (1e-2, 1e2))
            if spec.kernel == "gaussian":
                lo[i], hi[i] = 1e-4, 1e4
        elif kind == "gamma":
            lo[i], hi[i] = ((1e-3, 1e2) if spec.kernel == "powerlaw" else (0.0, 1e2))
        else:
            raise DomainError(f"no default bounds for parameter kind {kind!r}")
    eta0 = start_eta(spec, events) if eta_start is None else np.asarray(eta_start, dtype=np.float64)
    rho = spectral_radius(spec.kernel_family(eta0).masses())
    w_hi = 2.0 * STABILITY_MARGIN / max(rho, 1e-12)
    d1 = spec.degree + 1
    wlo, whi = np.zeros(d1), np.full(d1, w_hi)
    if spec.pin_first_weight:
        wlo[0] = whi[0] = 1.0
    return np.concatenate([lo, wlo]), np.concatenate([hi, whi])


def start_eta(spec: ModelSpec, events: EventSequence) -> np.ndarray:
    """Moment-flavoured start: half the early-window rate, decay from the median gap,
    free amplitudes spread evenly with spectral radius 0.5."""
    T = events.horizon
    kinds = spec.eta_kinds()
    gap = _gap_scale(events)
    eta = np.zeros(spec.n_eta)
    early = np.array([np.count_nonzero(c <= 0.1 * T) for c in events.components]) / (0.1 * T)
    for (k, j), i in np.ndenumerate(spec.baseline_map):
        if i >= 0:
            eta[i] = max(0.5 * early[k], 1e-3)
    for i, kind in enumerate(kinds):
        if kind == "beta":
            eta[i] = {"exponential": 1.0 / gap, "powerlaw": 2.5, "gaussian": 1.0 / gap ** 2}[spec.kernel]
        elif kind == "gamma":
            eta[i] = gap
    free_alpha = [i for i, kind in enumerate(kinds) if kind == "alpha"]
    if free_alpha:
        eta[free_alpha] = 1.0
        masses = spec.kernel_family(eta).masses()
        rho = spectral_radius(masses)
        eta[free_alpha] = 0.5 / rho if rho > 0 else 0.5
    return eta


def start_theta(spec: ModelSpec, events: EventSequence, lower, upper) -> np.ndarray:
    eta = np.clip(start_eta(spec, events), lower[:spec.n_eta], upper[:spec.n_eta])
    rho = spectral_radius(spec.kernel_family(eta).masses())
    if spec.pin_first_weight:
        w = np.ones(spec.degree + 1)
    else:
        w = np.full(spec.degree + 1, 0.5 * STABILITY_MARGIN / max(rho, 1e-12))
    return np.clip(np.concatenate([eta, w]), lower, upper)


# --- reduced parametrisation -----------------------------------------------

class _Reduction:
    """theta = offset + design @ z with z in the unit box."""

    def __init__(self, spec: ModelSpec, lower, upper, constant_g: bool):
        n = spec.n_theta
        p = spec.n_eta
        self.lower, self.upper = np.asarray(lower, float), np.asarray(upper, float)
        if np.any(self.lower > self.upper):
            raise DomainError("lower bound above upper bound")
        cols = []
        offset = self.lower.copy()
        w_idx = np.arange(p, n)
        pinned = self.lower == self.upper
        for i in range(p):
            if not pinned[i]:
                c = np.zeros(n)
                c[i] = self.upper[i] - self.lower[i]
                cols.append(c)
        if constant_g:
            if pinned[w_idx].any():
                # normalised variant: the constant is forced to the pinned value
                val = self.lower[w_idx[pinned[w_idx]][0]]
                offset[w_idx] = val
            else:
                lo_c, hi_c = self.lower[w_idx].max(), self.upper[w_idx].min()
                c = np.zeros(n)
                c[w_idx] = hi_c - lo_c
                offset[w_idx] = lo_c
                cols.append(c)
        else:
            for i in w_idx:
                if not pinned[i]:
                    c = np.zeros(n)
                    c[i] = self.upper[i] - self.lower[i]
                    cols.append(c)
        self.design = np.array(cols).T if cols else np.zeros((n, 0))
        self.offset = offset
        self.fixed = tuple(int(i) for i in np.flatnonzero(pinned | ~self.design.any(axis=1)))

    @property
    def q(self):
        return self.design.shape[1]

    def theta(self, z):
        return np.clip(self.offset + self.design @ z, self.lower, self.upper)

    def z_of(self, theta):
        if self.q == 0:
            return np.zeros(0)
        z, *_ = np.linalg.lstsq(self.design, np.asarray(theta) - self.offset, rcond=None)
        return np.clip(z, 0.0, 1.0)


# --- objective --------------------------------------------------------------

class _Objective:
    def __init__(self, ws: LikelihoodWorkspace, red: _Reduction):
        self.ws, self.red = ws, red
        self.T = ws.T
        self.template = ParamVector(np.zeros(ws.spec.n_eta), np.zeros(ws.spec.degree + 1))
        self.n_eval = 0

    def param(self, theta):
        return self.template.with_values(theta)

    def stable(self, theta) -> bool:
        spec = self.ws.spec
        p = spec.n_eta
        try:
            rho = spectral_radius(spec.kernel_family(theta[:p]).masses())
        except HawkesError:
            return False
        return basis.g_sup(theta[p:]) * rho < 1.0

    def __call__(self, z):
        """(f, grad) with f = -loglik / T; (inf, None) at infeasible points."""
        theta = self.red.theta(z)
        if not self.stable(theta):
            return math.inf, None
        self.n_eval += 1
        try:
            with np.errstate(all="ignore"):
                val, g = self.ws.value_and_grad(self.param(theta))
        except (HawkesError, FloatingPointError, ValueError):
            return math.inf, None
        if not (np.isfinite(val) and np.all(np.isfinite(g))):
            return math.inf, None
        D = self.red.design
        self.metric = D.T @ self.ws.last_event_information @ D / self.T
        return -val / self.T, -(D.T @ g) / self.T


def _projected_gradient(z, g):
    return z - np.clip(z - g, 0.0, 1.0)


def _solve_metric(M, v):
    """Apply the inverse of a positive semi-definite metric, ridged for rank deficiency."""
    ridge = 1e-10 * max(np.trace(M) / max(M.shape[0], 1), 1e-300)
    try:
        c = np.linalg.cholesky(M + ridge * np.eye(M.shape[0]))
    except np.linalg.LinAlgError:
        return v.copy()
    return np.linalg.solve(c.T, np.linalg.solve(c, v))


def _two_loop(g, S, Y, M):
    """L-BFGS inverse-Hessian product with ``M^-1`` as the initial matrix."""
    q = g.copy()
    alphas = []
    for s, y in zip(reversed(S), reversed(Y)):
        rho = 1.0 / (y @ s)
        a = rho * (s @ q)
        q -= a * y
        alphas.append((rho, a))
    q = _solve_metric(M, q)
    for (s, y), (rho, a) in zip(zip(S, Y), reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return q


def _minimize(obj: _Objective, z0, opts: FitOptions):
    """Projected L-BFGS in the unit box. Returns (z, f, pg_norm, converged, iters)."""
    z = np.clip(np.asarray(z0, float), 0.0, 1.0)
    f, g = obj(z)
    if g is None:
        raise HawkesError("infeasible start")
    q = z.size
    if q == 0:
        return z, f, 0.0, True, 0
    S, Y = [], []
    converged = False
    it = 0
    for it in range(1, opts.max_iter + 1):
        pg = _projected_gradient(z, g)
        if np.max(np.abs(pg)) <= opts.gtol:
            converged = True
            break
        active = ((z <= 0.0) & (g > 0)) | ((z >= 1.0) & (g < 0))
        free = ~active
        d = np.zeros(q)
        # memory and metric restricted to the free subspace
        pairs = [(s[free], y[free]) for s, y in zip(S, Y) if s[free] @ y[free] > 0]
        d[free] = -_two_loop(g[free], [a for a, _ in pairs], [b for _, b in pairs],
                             obj.metric[np.ix_(free, free)])
        step = 1.0
        if not np.all(np.isfinite(d)) or d @ g >= -1e-16 * np.linalg.norm(d) * np.linalg.norm(g):
            d = np.where(free, -g, 0.0)
            step = min(1.0, 0.1 / max(np.max(np.abs(d)), 1e-300))
        accepted = False
        for _ in range(60):
            z_new = np.clip(z + step * d, 0.0, 1.0)
            f_new, g_new = obj(z_new)
            if g_new is not None and f_new <= f + 1e-4 * (g @ (z_new - z)):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            if S:
                S, Y = [], []
                continue
            break
        s_vec, y_vec = z_new - z, g_new - g
        move = np.max(np.abs(s_vec))
        z, f, g = z_new, f_new, g_new
        sy = s_vec @ y_vec
        if sy > 1e-12 * np.linalg.norm(s_vec) * np.linalg.norm(y_vec):
            S.append(s_vec)
            Y.append(y_vec)
            if len(S) > opts.memory:
                S.pop(0)
                Y.pop(0)
        if move <= opts.xtol * max(1.0, np.max(np.abs(z))):
            converged = True
            break
    pg_norm = float(np.max(np.abs(_projected_gradient(z, g))))
    if pg_norm <= opts.gtol:
        converged = True
    return z, f, pg_norm, converged, it


# --- fitting ----------------------------------------------------------------

def _resolve_bounds(spec, events, bounds):
    if bounds is None:
        return default_bounds(spec, events)
    lo, hi = (np.asarray(b, dtype=np.float64) for b in bounds)
    if lo.shape != (spec.n_theta,) or hi.shape != (spec.n_theta,):
        raise DomainError(f"bounds must have length {spec.n_theta}")
    if np.any(lo[spec.n_eta:] < 0):
        raise DomainError("reproduction-rate weights must be bounded below by 0")
    return lo, hi


def _perturbed_starts(base, red: _Reduction, n, rng: RngStream):
    gen = rng.generator()
    out = [base]
    lo, hi = red.lower, red.upper
    for _ in range(n - 1):
        factor = np.exp(gen.uniform(-1.0, 1.0, base.size))
        out.append(np.clip(base * factor, lo, hi))
    return out


def _fit(spec, events, bounds, opts, constant_g, extra_starts=()):
    validate_events(events)
    opts = opts or FitOptions()
    lo, hi = _resolve_bounds(spec, events, bounds)
    red = _Reduction(spec, lo, hi, constant_g)
    ws = LikelihoodWorkspace(spec, events)
    obj = _Objective(ws, red)
    base = start_theta(spec, events, lo, hi)
    starts = [np.asarray(s.values if isinstance(s, ParamVector) else s, float) for s in extra_starts]
    starts += _perturbed_starts(base, red, max(opts.n_starts - len(starts), 1), opts.rng)
    best = None
    for idx, th0 in enumerate(starts):
        z0 = red.z_of(th0)
        try:
            z, f, pg, conv, it = _minimize(obj, z0, opts)
        except HawkesError:
            continue
        if best is None or f < best[1]:
            best = (z, f, pg, conv, it, idx)
    if best is None:
        raise AllStartsFailed(f"all {len(starts)} starts were infeasible")
    z, _, pg, conv, it, idx = best
    theta_vals = red.theta(z)
    theta = clamp_to_bounds(ParamVector(theta_vals[:spec.n_eta], theta_vals[spec.n_eta:], lo, hi))
    # snap near-bound coordinates onto the bound exactly
    span = hi - lo
    v = theta.values.copy()
    at_lo = (v - lo <= ACTIVE_TOL * span) & (span > 0)
    at_hi = (hi - v <= ACTIVE_TOL * span) & (span > 0) & ~at_lo
    v[at_lo], v[at_hi] = lo[at_lo], hi[at_hi]
    theta = theta.with_values(v)
    active = tuple(int(i) for i in np.flatnonzero(at_lo | at_hi))
    zf = red.z_of(v)
    keep = (zf > ACTIVE_TOL) & (zf < 1.0 - ACTIVE_TOL)
    loglik_value = ws.value(theta)
    try:
        info = ws.observed_information(theta)
    except HawkesError:
        info = np.full((spec.n_theta, spec.n_theta), np.nan)
    return FitResult(theta, float(loglik_value), pg, bool(conv), info, active,
                     red.fixed, red.design[:, keep], tuple(spec.param_names), it, idx)


def mle_fit(spec: ModelSpec, events: EventSequence, bounds=None, opts: FitOptions | None = None,
            starts=()) -> FitResult:
    """Maximum-likelihood fit over the box; ``starts`` are tried before the default ones."""
    return _fit(spec, events, bounds, opts, False, starts)


def mle_fit_constant_g(spec: ModelSpec, events: EventSequence, bounds=None,
                       opts: FitOptions | None = None, starts=()) -> FitResult:
    """Fit with all reproduction-rate weights equal to one scalar.

    When the first weight is pinned the constant is forced to that value.
    """
    return _fit(spec, events, bounds, opts, True, starts)


def standard_errors(fit: FitResult, T: float) -> np.ndarray:
    """``sqrt(diag(I^-1) / T)`` on the free, interior coordinates; NaN elsewhere.

    Tied coordinates are handled through the design of the fit: the
    information is projected onto the free directions before inversion.
    """
    n = fit.theta_hat.values.size
    se = np.full(n, np.nan)
    D = fit.free_design
    if D is None or D.shape[1] == 0:
        return se
    # columns scaled to unit norm keep the condition number meaningful
    D = D / np.linalg.norm(D, axis=0)
    info = D.T @ fit.observed_info @ D
    if not np.all(np.isfinite(info)):
        raise SingularInformation("information matrix has non-finite entries")
    if np.linalg.cond(info) > 1e12:
        raise SingularInformation("information on the interior coordinates is singular")
    cov = D @ np.linalg.inv(info) @ D.T
    rows = np.flatnonzero(np.abs(D).sum(axis=1) > 0)
    se[rows] = np.sqrt(np.maximum(np.diag(cov)[rows], 0.0) / T)
    return se
