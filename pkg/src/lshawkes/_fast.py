"""Compiled inner loops for exponential kernels."""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def exp_pass(times, comps, beta):
    """Exponentially weighted event sums at every event time.

    For each event i and pair (k, l):
      s_before[i,k,l]  = sum_{t_j^l < t_i} exp(-beta_kl (t_i - t_j))
      s1_before[i,k,l] = sum_{t_j^l < t_i} (t_i - t_j) exp(-beta_kl (t_i - t_j))
      s_after[i,k,l]   = s_before plus the events of l at time t_i with index <= i
    Events sharing a time stamp do not see each other (strict left limit).
    """
    n = times.shape[0]
    K = beta.shape[0]
    s_before = np.zeros((n, K, K))
    s1_before = np.zeros((n, K, K))
    s_after = np.zeros((n, K, K))
    s = np.zeros((K, K))
    s1 = np.zeros((K, K))
    pend = np.zeros(K)
    last = 0.0
    for i in range(n):
        t = times[i]
        if t > last:
            dt = t - last
            for k in range(K):
                for l in range(K):
                    s[k, l] += pend[l]
                    dec = math.exp(-beta[k, l] * dt)
                    s1[k, l] = (s1[k, l] + dt * s[k, l]) * dec
                    s[k, l] *= dec
            for l in range(K):
                pend[l] = 0.0
            last = t
        c = comps[i]
        pend[c] += 1.0
        for k in range(K):
            for l in range(K):
                s_before[i, k, l] = s[k, l]
                s1_before[i, k, l] = s1[k, l]
                s_after[i, k, l] = s[k, l] + pend[l]
    return s_before, s1_before, s_after


@njit(cache=True)
def _bern(w, x):
    # de Casteljau evaluation of sum_i w_i B_{i,d}(x)
    d = w.shape[0]
    b = w.copy()
    for r in range(1, d):
        for i in range(d - r):
            b[i] = (1.0 - x) * b[i] + x * b[i + 1]
    return b[0]


@njit(cache=True)
def _act(u, softplus, floor):
    if softplus:
        z = u - floor
        if z > 30.0:
            return floor + z + math.log1p(math.exp(-z))
        return floor + math.log1p(math.exp(z))
    return u


@njit(cache=True)
def thin_exp(T, t0, R, mu_coef, mu_sup, g_mode, g_par, g_sup, jump, beta,
             softplus, floor, uniforms, out_t, out_c, n_out):
    """Ogata thinning for exponential kernels, resumable across uniform batches.

    R[k, l] holds sum_j alpha_kl beta_kl exp(-beta_kl (t - t_j)) at time t0 and
    is updated in place. Three uniforms are consumed per proposal.
    g_mode 0: Bernstein weights in g_par; g_mode 1: g_par = (gamma, a0, a1)
    giving gamma + a0 sin(a1 x).

    Returns (t, n_out, status, used): status 0 horizon reached, 1 uniforms
    exhausted, 2 output buffer full, 3 dominating rate violated.
    """
    K = R.shape[0]
    lam = np.zeros(K)
    t = t0
    used = 0
    nu = uniforms.shape[0]
    cap = out_t.shape[0]
    while True:
        if used + 3 > nu:
            return t, n_out, 1, used
        bound = 0.0
        for k in range(K):
            acc = 0.0
            for l in range(K):
                acc += R[k, l]
            bound += _act(mu_sup[k] + g_sup * acc, softplus, floor)
        u1 = uniforms[used]
        u2 = uniforms[used + 1]
        u3 = uniforms[used + 2]
        used += 3
        tau = -math.log(1.0 - u1) / bound
        tn = t + tau
        if tn > T:
            return T, n_out, 0, used
        for k in range(K):
            for l in range(K):
                R[k, l] *= math.exp(-beta[k, l] * tau)
        t = tn
        x = t / T
        if g_mode == 0:
            gx = _bern(g_par, x)
        else:
            gx = g_par[0] + g_par[1] * math.sin(g_par[2] * x)
        total = 0.0
        for k in range(K):
            acc = 0.0
            for l in range(K):
                acc += R[k, l]
            lam[k] = _act(_bern(mu_coef[k], x) + gx * acc, softplus, floor)
            total += lam[k]
        if total > bound * (1.0 + 1e-12):
            return t, n_out, 3, used
        if u2 * bound <= total:
            if n_out >= cap:
                return t, n_out, 2, used
            target = u3 * total
            c = K - 1
            cum = 0.0
            for k in range(K):
                cum += lam[k]
                if target < cum:
                    c = k
                    break
            out_t[n_out] = t
            out_c[n_out] = c
            n_out += 1
            for k in range(K):
                R[k, c] += jump[k, c]
