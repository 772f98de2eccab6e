"""Parametric excitation kernels, their eta-derivatives and integrals, and the
sub-criticality check on the matrix of kernel masses.

Parameter order per family (last axis of every parameter array):

* ``exponential``: (alpha, beta), ``phi(t) = alpha * beta * exp(-beta t)``,
  total mass alpha
* ``powerlaw``: (alpha, beta, gamma), ``phi(t) = alpha * (t + gamma)**-beta``, beta > 1
* ``gaussian``: (alpha, beta, gamma), ``phi(t) = alpha * exp(-beta (t - gamma)**2)``

Identifiability (no two shape parameters giving proportional kernels) is
the caller's responsibility; it holds for all three families as long as
the amplitude is carried either by alpha or by the reproduction rate, not both.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .errors import DomainError, NoConvergence

FAMILIES = {
    "exponential": ("alpha", "beta"),
    "powerlaw": ("alpha", "beta", "gamma"),
    "gaussian": ("alpha", "beta", "gamma"),
}

TAIL_FRACTION = 1e-10


def n_params(name: str) -> int:
    try:
        return len(FAMILIES[name])
    except KeyError:
        raise DomainError(f"unknown kernel family {name!r}") from None


def validate_params(name: str, params) -> np.ndarray:
    p = np.asarray(params, dtype=np.float64)
    if p.shape[-1] != n_params(name):
        raise DomainError(f"{name} kernel takes {n_params(name)} parameters")
    alpha, beta = p[..., 0], p[..., 1]
    if np.any(alpha < 0):
        raise DomainError("kernel amplitude must be non-negative")
    if name == "powerlaw":
        if np.any(beta <= 1) or np.any(p[..., 2] <= 0):
            raise DomainError("power law needs beta > 1 and gamma > 0")
    elif np.any(beta <= 0):
        raise DomainError(f"{name} kernel needs beta > 0")
    return p


def phi(name: str, params, t) -> np.ndarray:
    """Kernel values; zero for negative lags (causality)."""
    p = np.asarray(params, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    pos = t >= 0
    tt = np.where(pos, t, 0.0)
    alpha, beta = p[..., 0], p[..., 1]
    if name == "exponential":
        v = alpha * beta * np.exp(-beta * tt)
    elif name == "powerlaw":
        v = alpha * (tt + p[..., 2]) ** (-beta)
    elif name == "gaussian":
        v = alpha * np.exp(-beta * (tt - p[..., 2]) ** 2)
    else:
        raise DomainError(f"unknown kernel family {name!r}")
    return np.where(pos, v, 0.0)


def phi_grad(name: str, params, t) -> np.ndarray:
    """Partial derivatives in the family parameters, stacked on the last axis."""
    p = np.asarray(params, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    pos = t >= 0
    tt = np.where(pos, t, 0.0)
    alpha, beta = p[..., 0], p[..., 1]
    if name == "exponential":
        e = np.exp(-beta * tt)
        parts = [beta * e, alpha * e * (1.0 - beta * tt)]
    elif name == "powerlaw":
        base = tt + p[..., 2]
        pw = base ** (-beta)
        parts = [pw, -alpha * np.log(base) * pw, -alpha * beta * pw / base]
    elif name == "gaussian":
        u = tt - p[..., 2]
        e = np.exp(-beta * u * u)
        parts = [e, -alpha * u * u * e, 2.0 * alpha * beta * u * e]
    else:
        raise DomainError(f"unknown kernel family {name!r}")
    return np.stack([np.where(pos, q, 0.0) for q in np.broadcast_arrays(*parts)], axis=-1)


def phi_integral(name: str, params, a, b) -> np.ndarray:
    """``int_a^b phi(s) ds`` for ``0 <= a <= b <= inf``."""
    p = np.asarray(params, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if np.any(a < 0) or np.any(b < a):
        raise DomainError("need 0 <= a <= b")
    alpha, beta = p[..., 0], p[..., 1]
    if name == "exponential":
        eb = np.where(np.isinf(b), 0.0, np.exp(-beta * np.where(np.isinf(b), 0.0, b)))
        return alpha * (np.exp(-beta * a) - eb)
    if name == "powerlaw":
        g = p[..., 2]
        tb = np.where(np.isinf(b), 0.0, (np.where(np.isinf(b), 0.0, b) + g) ** (1.0 - beta))
        return alpha * ((a + g) ** (1.0 - beta) - tb) / (beta - 1.0)
    if name == "gaussian":
        g = p[..., 2]
        rb = np.sqrt(beta)
        hi = np.where(np.isinf(b), 1.0, erf(rb * (np.where(np.isinf(b), 0.0, b) - g)))
        return alpha * 0.5 * np.sqrt(np.pi / beta) * (hi - erf(rb * (a - g)))
    raise DomainError(f"unknown kernel family {name!r}")


def truncation_lag(name: str, params) -> np.ndarray:
    """Lag beyond which the neglected tail mass is below ``TAIL_FRACTION`` of the total."""
    p = np.asarray(params, dtype=np.float64)
    beta = p[..., 1]
    if name == "exponential":
        return -np.log(TAIL_FRACTION) / beta
    if name == "powerlaw":
        g = p[..., 2]
        return g * (TAIL_FRACTION ** (1.0 / (1.0 - beta)) - 1.0)
    if name == "gaussian":
        g = p[..., 2]
        # phi below 1e-12 of its peak; the Gaussian tail mass beyond is smaller still
        return np.maximum(g, 0.0) + np.sqrt(np.log(1e12) / beta)
    raise DomainError(f"unknown kernel family {name!r}")


@dataclass(frozen=True, eq=False)
class KernelFamily:
    """A K x K matrix of kernels from one family, parameters shaped (K, K, P)."""

    name: str
    params: np.ndarray

    def __post_init__(self):
        p = validate_params(self.name, self.params)
        if p.ndim != 3 or p.shape[0] != p.shape[1]:
            raise DomainError("kernel parameters must have shape (K, K, P)")
        p = p.copy()
        p.flags.writeable = False
        object.__setattr__(self, "params", p)

    @property
    def dimension(self) -> int:
        return self.params.shape[0]

    def masses(self) -> np.ndarray:
        """Matrix of ``int_0^inf phi_kl``."""
        return phi_integral(self.name, self.params, 0.0, np.inf)


def _check_time(t):
    if np.any(np.asarray(t) < 0):
        raise DomainError("kernel lag must be non-negative")


def kernel_eval(fam: KernelFamily, k: int, l: int, t):
    _check_time(t)
    return phi(fam.name, fam.params[k, l], t)


def kernel_grad_eta(fam: KernelFamily, k: int, l: int, t):
    _check_time(t)
    return phi_grad(fam.name, fam.params[k, l], t)


def kernel_tail_integral(fam: KernelFamily, k: int, l: int, a, b):
    return phi_integral(fam.name, fam.params[k, l], a, b)


def branching_matrix(fam: KernelFamily, g_sup: float = 1.0) -> np.ndarray:
    return g_sup * fam.masses()


def spectral_radius(m, tol: float = 1e-12, max_iter: int = 10_000) -> float:
    """Perron root of a non-negative square matrix by power iteration.

    Iterates on ``m + I``: the shift leaves the Perron vector unchanged and
    makes the Perron root strictly dominant in modulus, so periodic matrices
    such as ``[[0, 1], [1, 0]]`` converge as well.
    """
    a = np.asarray(m, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DomainError("spectral_radius needs a square matrix")
    if np.any(a < 0):
        raise DomainError("spectral_radius needs a non-negative matrix")
    n = a.shape[0]
    b = a + np.eye(n)
    v = np.full(n, 1.0 / np.sqrt(n))
    est = 0.0
    for _ in range(max_iter):
        w = b @ v
        new = float(np.linalg.norm(w))
        v = w / new
        if abs(new - est) <= tol * max(1.0, new):
            return max(new - 1.0, 0.0)
        est = new
    raise NoConvergence(f"power iteration did not converge in {max_iter} iterations")


@dataclass(frozen=True)
class Stability:
    rho: float
    stable: bool


def check_stability(spec, theta) -> Stability:
    """``rho = max_i varpi_i * spectral_radius(kernel masses)``; stable iff rho < 1.

    Bernstein polynomials stay in the convex hull of their weights, so the
    largest weight bounds ``sup_x g`` and equals it when attained at an endpoint.
    """
    fam = spec.kernel_family(theta.eta)
    w = np.asarray(theta.varpi, dtype=np.float64)
    wmax = float(np.max(w)) if w.size else 0.0
    if wmax <= 0.0:
        return Stability(0.0, True)
    rho = wmax * spectral_radius(fam.masses())
    return Stability(rho, rho < 1.0)
