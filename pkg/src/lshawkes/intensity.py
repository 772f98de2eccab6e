"""Conditional intensity of the locally stationary Hawkes model

    lambda_k(t) = Phi[ mu_k(t/T) + g(t/T) * sum_l sum_{t_j^l < t} phi_kl(t - t_j^l) ]

together with the Markov excitation state used for exponential kernels and
the frozen-time stationary mean.

A :class:`ModelSpec` fixes the dimension, the kernel family, the degrees of
the baseline and of the reproduction rate, the activation, and the layout of
the free vector ``eta``: every baseline coefficient and kernel parameter is
either a reference into ``eta`` (several slots may share one entry, which
ties them) or a fixed value.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit

from . import basis
from .core import EventSequence, ParamVector
from .errors import DomainError, Unstable, Unsupported
from .kernels import FAMILIES, KernelFamily, n_params, phi, phi_grad, spectral_radius, truncation_lag
from . import _fast

ACTIVATIONS = ("identity", "softplus")


def activation(u, kind: str, floor: float):
    if kind == "identity":
        return u
    z = np.asarray(u) - floor
    return floor + np.logaddexp(0.0, z)


def activation_prime(u, kind: str, floor: float):
    if kind == "identity":
        return np.ones_like(np.asarray(u, dtype=np.float64))
    return expit(np.asarray(u) - floor)


def _frozen_int(a):
    a = np.array(a, dtype=np.int64)
    a.flags.writeable = False
    return a


def _frozen_float(a):
    a = np.array(a, dtype=np.float64)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class ModelSpec:
    dimension: int
    kernel: str
    degree: int
    eta_names: tuple
    baseline_map: np.ndarray
    baseline_fixed: np.ndarray
    kernel_map: np.ndarray
    kernel_fixed: np.ndarray
    baseline_degree: int = 0
    activation: str = "identity"
    floor: float = 1e-3
    pin_first_weight: bool = False

    def __post_init__(self):
        K, P, m = self.dimension, n_params(self.kernel), self.baseline_degree
        if K < 1:
            raise DomainError("dimension must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise DomainError(f"activation must be one of {ACTIVATIONS}")
        if self.floor <= 0:
            raise DomainError("activation floor must be positive")
        basis._check_degree(self.degree)
        basis._check_degree(m)
        object.__setattr__(self, "eta_names", tuple(self.eta_names))
        for name, shape, conv in (("baseline_map", (K, m + 1), _frozen_int),
                                  ("baseline_fixed", (K, m + 1), _frozen_float),
                                  ("kernel_map", (K, K, P), _frozen_int),
                                  ("kernel_fixed", (K, K, P), _frozen_float)):
            arr = conv(getattr(self, name))
            if arr.shape != shape:
                raise DomainError(f"{name} must have shape {shape}, got {arr.shape}")
            object.__setattr__(self, name, arr)
        p = len(self.eta_names)
        used = np.concatenate([self.baseline_map.ravel(), self.kernel_map.ravel()])
        if used.max(initial=-1) >= p or used.min(initial=0) < -1:
            raise DomainError("layout refers to a non-existent eta entry")

    @property
    def n_eta(self) -> int:
        return len(self.eta_names)

    @property
    def n_theta(self) -> int:
        return self.n_eta + self.degree + 1

    @property
    def param_names(self) -> list:
        return list(self.eta_names) + [f"varpi{i}" for i in range(self.degree + 1)]

    def eta_kinds(self) -> list:
        """'baseline' or the kernel parameter name for each eta entry."""
        kinds = [None] * self.n_eta
        for i in self.baseline_map[self.baseline_map >= 0]:
            kinds[i] = "baseline"
        names = FAMILIES[self.kernel]
        for (k, l, q), i in np.ndenumerate(self.kernel_map):
            if i >= 0:
                kinds[i] = names[q]
        return kinds

    def with_degree(self, degree: int) -> "ModelSpec":
        return replace(self, degree=int(degree))

    # --- eta -> model quantities --------------------------------------

    def baseline_coefs(self, eta) -> np.ndarray:
        eta = np.asarray(eta, dtype=np.float64)
        m = self.baseline_map
        return np.where(m >= 0, eta[np.maximum(m, 0)] if eta.size else 0.0, self.baseline_fixed)

    def kernel_params(self, eta) -> np.ndarray:
        eta = np.asarray(eta, dtype=np.float64)
        m = self.kernel_map
        return np.where(m >= 0, eta[np.maximum(m, 0)] if eta.size else 0.0, self.kernel_fixed)

    def kernel_family(self, eta) -> KernelFamily:
        return KernelFamily(self.kernel, self.kernel_params(eta))

    def baseline(self, eta, x) -> np.ndarray:
        """mu_k(x) for every component, shape ``x.shape + (K,)``."""
        B = basis.bernstein_eval(self.baseline_degree, x)
        return B @ self.baseline_coefs(eta).T

    def baseline_sup(self, eta) -> np.ndarray:
        return self.baseline_coefs(eta).max(axis=1)

    def baseline_inf(self, eta) -> np.ndarray:
        return self.baseline_coefs(eta).min(axis=1)

    def check_theta(self, theta: ParamVector) -> None:
        if theta.n_eta != self.n_eta or theta.degree != self.degree:
            raise DomainError(f"theta has shape ({theta.n_eta}, {theta.degree + 1}), "
                              f"spec expects ({self.n_eta}, {self.degree + 1})")


# --- spec builders ----------------------------------------------------------

def univariate_spec(kernel: str = "exponential", degree: int = 3, *, baseline_degree: int = 0,
                    alpha: float = 0.5, activation: str = "identity", floor: float = 1e-3) -> ModelSpec:
    """One-dimensional model whose kernel amplitude is pinned to ``alpha``.

    The reproduction rate then carries all of the excitation strength. With
    the default alpha = 0.5 and an exponential kernel at beta = 2 the kernel
    is ``exp(-2 t)``, so g is on the scale of ``gamma + a0 sin(a1 x)`` models.
    """
    m = baseline_degree
    names = [f"mu{j}" if m else "mu" for j in range(m + 1)]
    bmap = np.arange(m + 1).reshape(1, m + 1)
    P = n_params(kernel)
    kmap = np.full((1, 1, P), -1)
    kfix = np.zeros((1, 1, P))
    kfix[0, 0, 0] = alpha
    for q, pname in enumerate(FAMILIES[kernel][1:], start=1):
        kmap[0, 0, q] = len(names)
        names.append(pname)
    return ModelSpec(1, kernel, degree, tuple(names), bmap, np.zeros((1, m + 1)), kmap, kfix,
                     baseline_degree=m, activation=activation, floor=floor)


def multivariate_spec(dimension: int, kernel: str = "exponential", degree: int = 3, *,
                      baseline_degree: int = 0, shared_shape: bool = True, zero_pattern=None,
                      activation: str = "identity", floor: float = 1e-3) -> ModelSpec:
    """K-dimensional model with free amplitudes ``alpha_kl`` and ``varpi_0`` pinned at 1.

    ``zero_pattern`` is a boolean K x K mask of structural zeros. With
    ``shared_shape`` every pair shares one decay (and one gamma).
    """
    K, m, P = dimension, baseline_degree, n_params(kernel)
    zeros = np.zeros((K, K), bool) if zero_pattern is None else np.asarray(zero_pattern, bool)
    names = []
    bmap = np.zeros((K, m + 1), dtype=np.int64)
    for k in range(K):
        for j in range(m + 1):
            bmap[k, j] = len(names)
            names.append(f"mu{k}" if m == 0 else f"mu{k}_{j}")
    kmap = np.full((K, K, P), -1)
    for k in range(K):
        for l in range(K):
            if not zeros[k, l]:
                kmap[k, l, 0] = len(names)
                names.append(f"alpha{k}{l}")
    for q, pname in enumerate(FAMILIES[kernel][1:], start=1):
        if shared_shape:
            kmap[:, :, q] = len(names)
            names.append(pname)
        else:
            for k in range(K):
                for l in range(K):
                    kmap[k, l, q] = len(names)
                    names.append(f"{pname}{k}{l}")
    kfix = np.zeros((K, K, P))
    kfix[..., 1:] = 1.0  # unused shape slots of structural zeros stay valid
    return ModelSpec(K, kernel, degree, tuple(names), bmap, np.zeros((K, m + 1)), kmap, kfix,
                     baseline_degree=m, activation=activation, floor=floor, pin_first_weight=True)


# --- history and excitation -------------------------------------------------

class History:
    """Merged, time-ordered view of an event sequence with cached exponential states."""

    def __init__(self, events: EventSequence):
        self.events = events
        self.horizon = events.horizon
        self.K = events.dimension
        self.times, self.comps = events.merged()
        self.by_comp = events.components
        self._exp_cache = {}

    def exp_states(self, beta: np.ndarray):
        key = np.ascontiguousarray(beta, dtype=np.float64).tobytes()
        hit = self._exp_cache.get(key)
        if hit is None:
            hit = _fast.exp_pass(self.times, self.comps, np.ascontiguousarray(beta, dtype=np.float64))
            if len(self._exp_cache) > 8:
                self._exp_cache.clear()
            self._exp_cache[key] = hit
        return hit


def excitation_at(spec: ModelSpec, kparams: np.ndarray, hist: History, query, grad: bool = False):
    """Kernel sums over the strict past at each query time.

    Returns ``E`` of shape (Q, K, K) with ``E[q, k, l] = sum_{t_j^l < q} phi_kl(q - t_j)``
    and, when ``grad`` is set, ``dE`` of shape (Q, K, K, P) holding the
    derivative of each pair sum in the kernel parameters.
    """
    q = np.atleast_1d(np.asarray(query, dtype=np.float64))
    K, P = spec.dimension, kparams.shape[-1]
    if hist.times.size == 0:
        E = np.zeros((q.size, K, K))
        return (E, np.zeros((q.size, K, K, P))) if grad else E
    if spec.kernel == "exponential":
        alpha, beta = kparams[..., 0], kparams[..., 1]
        _, s1_before, s_after = hist.exp_states(beta)
        idx = np.searchsorted(hist.times, q, side="left") - 1
        have = idx >= 0
        j = np.maximum(idx, 0)
        dt = np.where(have, q - hist.times[j], 0.0)[:, None, None]
        dec = np.exp(-beta[None] * dt)
        S = np.where(have[:, None, None], s_after[j] * dec, 0.0)
        S1 = np.where(have[:, None, None], (s1_before[j] + dt * s_after[j]) * dec, 0.0)
        E = alpha * beta * S
        if not grad:
            return E
        dE = np.stack([beta * S, alpha * (S - beta * S1)], axis=-1)
        return E, dE
    E = np.zeros((q.size, K, K))
    dE = np.zeros((q.size, K, K, P)) if grad else None
    cut = truncation_lag(spec.kernel, kparams)
    for l in range(K):
        tl = hist.by_comp[l]
        if tl.size == 0:
            continue
        chunk = max(1, 2_000_000 // max(tl.size, 1))
        for a in range(0, q.size, chunk):
            qq = q[a:a + chunk]
            lag = qq[:, None] - tl[None, :]
            for k in range(K):
                ok = (lag > 0) & (lag <= cut[k, l])
                lg = np.where(ok, lag, 0.0)
                E[a:a + chunk, k, l] = np.where(ok, phi(spec.kernel, kparams[k, l], lg), 0.0).sum(1)
                if grad:
                    dg = phi_grad(spec.kernel, kparams[k, l], lg)
                    dE[a:a + chunk, k, l] = np.where(ok[..., None], dg, 0.0).sum(1)
    return (E, dE) if grad else E


def intensity_at(spec: ModelSpec, theta: ParamVector, events: EventSequence, t) -> np.ndarray:
    """lambda_k(t) for every component; events at exactly t are excluded."""
    spec.check_theta(theta)
    t = float(t)
    if not 0.0 <= t <= events.horizon:
        raise DomainError("query time outside [0, horizon]")
    hist = History(events)
    kp = spec.kernel_params(theta.eta)
    E = excitation_at(spec, kp, hist, t)[0].sum(axis=1)
    x = t / events.horizon
    u = spec.baseline(theta.eta, x) + basis.g_eval(theta.varpi, x) * E
    return activation(u, spec.activation, spec.floor)


# --- Markov state for exponential kernels ----------------------------------

@dataclass(frozen=True, eq=False)
class ExcitationState:
    """``R[k, l] = sum_{t_j^l < t0} alpha_kl beta_kl exp(-beta_kl (t0 - t_j))``."""

    R: np.ndarray
    beta: np.ndarray
    jump: np.ndarray
    t0: float = 0.0

    @classmethod
    def zero(cls, alpha, beta, t0: float = 0.0) -> "ExcitationState":
        alpha = np.asarray(alpha, dtype=np.float64)
        beta = np.asarray(beta, dtype=np.float64)
        return cls(np.zeros_like(beta), beta, alpha * beta, float(t0))

    def total(self) -> np.ndarray:
        return self.R.sum(axis=1)


def advance_state(state: ExcitationState, dt: float) -> ExcitationState:
    if dt < 0:
        raise DomainError("cannot advance by a negative time")
    if dt == 0:
        return state
    return replace(state, R=state.R * np.exp(-state.beta * dt), t0=state.t0 + dt)


def register_event(state: ExcitationState, component: int) -> ExcitationState:
    K = state.R.shape[1]
    if not 0 <= component < K:
        raise IndexError(f"component {component} out of range for K={K}")
    R = state.R.copy()
    R[:, component] += state.jump[:, component]
    return replace(state, R=R)


# --- frozen-time stationary mean --------------------------------------------

def stationary_mean(spec: ModelSpec, theta: ParamVector, x: float) -> np.ndarray:
    """Mean intensity of the stationary process frozen at normalised time x."""
    if spec.activation != "identity":
        raise Unsupported("stationary mean is only available for the identity activation")
    spec.check_theta(theta)
    gx = basis.g_eval(theta.varpi, x)
    A = gx * spec.kernel_family(theta.eta).masses()
    if gx > 0 and spectral_radius(A) >= 1.0:
        raise Unstable(f"spectral radius of g(x) * masses is {spectral_radius(A):.4g} >= 1")
    mu = spec.baseline(theta.eta, x)
    return np.linalg.solve(np.eye(spec.dimension) - A, mu)
