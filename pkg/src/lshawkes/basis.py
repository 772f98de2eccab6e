"""Bernstein polynomials on [0, 1] and the reproduction rate built from them.

The reproduction rate of degree ``d`` is ``g(x) = sum_i w_i B_{i,d}(x)``.
Basis values are produced by the triangular de Casteljau recurrence
``B_{i,n} = (1 - x) B_{i,n-1} + x B_{i-1,n-1}``, which never forms a
binomial coefficient and stays accurate near the endpoints.
"""

from __future__ import annotations

from math import factorial

import numpy as np

from .errors import DomainError

MAX_DEGREE = 30


def _check_degree(d: int) -> int:
    d = int(d)
    if d < 0 or d > MAX_DEGREE:
        raise DomainError(f"Bernstein degree must lie in [0, {MAX_DEGREE}], got {d}")
    return d


def _check_x(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if np.any(~(x >= 0.0) | ~(x <= 1.0)):
        raise DomainError("Bernstein argument outside [0, 1]")
    return x


def bernstein_eval(d: int, x) -> np.ndarray:
    """All ``d + 1`` basis values at ``x``; output shape ``x.shape + (d + 1,)``."""
    d = _check_degree(d)
    x = _check_x(x)
    out = np.zeros(x.shape + (d + 1,))
    out[..., 0] = 1.0
    y = 1.0 - x
    for n in range(1, d + 1):
        # update in place from the top so B_{i-1,n-1} is still available
        out[..., n] = x * out[..., n - 1]
        for i in range(n - 1, 0, -1):
            out[..., i] = y * out[..., i] + x * out[..., i - 1]
        out[..., 0] = y * out[..., 0]
    return out


def g_eval(varpi, x):
    """Reproduction rate ``sum_i varpi_i B_{i,d}(x)`` via de Casteljau."""
    w = np.asarray(varpi, dtype=np.float64)
    if w.ndim != 1 or w.size == 0:
        raise DomainError("varpi must be a non-empty vector")
    _check_degree(w.size - 1)
    x = _check_x(x)
    beta = np.broadcast_to(w, x.shape + w.shape).copy()
    xe = x[..., None]
    for r in range(1, w.size):
        beta[..., : w.size - r] = (1.0 - xe) * beta[..., : w.size - r] + xe * beta[..., 1 : w.size - r + 1]
    return beta[..., 0] if x.ndim else float(beta[..., 0])


def g_grad(varpi, x) -> np.ndarray:
    """Gradient of ``g_eval`` in ``varpi``; g is linear so this is the basis."""
    w = np.asarray(varpi, dtype=np.float64)
    return bernstein_eval(w.size - 1, x)


def bernstein_derivatives(d: int, x) -> np.ndarray:
    """Derivatives of every basis function.

    Returns an array of shape ``x.shape + (d + 1, d + 1)`` whose entry
    ``[..., m, i]`` is the m-th derivative of ``B_{i,d}`` at ``x``.
    """
    d = _check_degree(d)
    x = np.atleast_1d(_check_x(x))
    out = np.zeros(x.shape + (d + 1, d + 1))
    eye = np.eye(d + 1)
    for m in range(d + 1):
        diff = np.diff(eye, n=m, axis=0)  # (d+1-m, d+1) forward differences
        out[..., m, :] = factorial(d) / factorial(d - m) * (bernstein_eval(d - m, x) @ diff)
    return out


def bernstein_primitive(d: int, x) -> np.ndarray:
    """``int_0^x B_{i,d}(u) du`` for every i, shape ``x.shape + (d + 1,)``."""
    d = _check_degree(d)
    if d + 1 > MAX_DEGREE:
        raise DomainError("degree too large for the primitive")
    up = bernstein_eval(d + 1, x)
    # int_0^x B_{i,d} = (1/(d+1)) sum_{j>i} B_{j,d+1}(x)
    tail = np.flip(np.cumsum(np.flip(up, -1), -1), -1)
    return tail[..., 1:] / (d + 1)


def g_sup(varpi, grid: int = 513) -> float:
    """Maximum of the polynomial over [0, 1], refined around the best grid node."""
    w = np.asarray(varpi, dtype=np.float64)
    if w.size == 1:
        return float(w[0])
    x = np.linspace(0.0, 1.0, grid)
    vals = g_eval(w, x)
    j = int(np.argmax(vals))
    lo, hi = x[max(j - 1, 0)], x[min(j + 1, grid - 1)]
    fine = np.linspace(lo, hi, 65)
    return float(max(vals[j], np.max(g_eval(w, fine))))
