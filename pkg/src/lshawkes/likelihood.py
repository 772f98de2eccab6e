"""Log-likelihood of an observed trajectory, its gradient in
theta = (eta, varpi), compensators, and the observed information.

    loglik = sum_k [ sum_{t_j^k} log lambda_k(t_j^k) - int_0^T lambda_k(s) ds ]

Two compensator routes are provided. For exponential kernels with the
identity activation, each event contributes ``alpha beta int_{t_j}^T g(s/T)
exp(-beta (s - t_j)) ds`` which integrates by parts exactly, since g is a
polynomial:

    int_a^b p(s) e^{-beta (s - a)} ds
        = sum_m [p^(m)(a) - p^(m)(b) e^{-beta (b - a)}] / beta^(m+1).

Every other configuration integrates the intensity with 16-point
Gauss-Legendre on each inter-event interval, checked against the two
half-intervals and subdivided where they disagree.
"""

from __future__ import annotations

import numpy as np

from . import basis
from .core import EventSequence, ParamVector, validate_events
from .errors import NonPositiveIntensityAtEvent, QuadratureFailure
from .intensity import History, ModelSpec, activation, activation_prime, excitation_at

GL_ORDER = 16
_GL_X, _GL_W = np.polynomial.legendre.leggauss(GL_ORDER)
MIN_INTENSITY = 1e-300
MAX_SPLIT_DEPTH = 10


def _gl_nodes(a, b):
    """Nodes (len(a), 16) and weights for each interval [a, b]."""
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    return mid[:, None] + half[:, None] * _GL_X, half[:, None] * _GL_W


class LikelihoodWorkspace:
    """Precomputed quantities for one (spec, events) pair.

    Build once and evaluate at many theta; nothing here depends on theta
    except the small cache of exponential states held by the history.
    """

    def __init__(self, spec: ModelSpec, events: EventSequence):
        validate_events(events)
        if events.dimension != spec.dimension:
            raise ValueError(f"events have dimension {events.dimension}, spec expects {spec.dimension}")
        self.spec = spec
        self.events = events
        self.T = events.horizon
        self.hist = History(events)
        self.times, self.comps = self.hist.times, self.hist.comps
        n = self.times.size
        self.n = n
        self.x = self.times / self.T
        self.within = np.zeros(n, dtype=np.int64)
        for k in range(spec.dimension):
            idx = np.flatnonzero(self.comps == k)
            self.within[idx] = np.arange(idx.size)
        self.B_g = basis.bernstein_eval(spec.degree, self.x)
        self.B_mu = basis.bernstein_eval(spec.baseline_degree, self.x)
        self.closed_form = spec.kernel == "exponential" and spec.activation == "identity"
        if self.closed_form:
            self.D_g = basis.bernstein_derivatives(spec.degree, self.x) if n else np.zeros((0, spec.degree + 1, spec.degree + 1))
            self.D_g1 = basis.bernstein_derivatives(spec.degree, 1.0)[0]
            self.D_g0 = basis.bernstein_derivatives(spec.degree, 0.0)[0]
            self.lag_to_end = self.T - self.times
        self._local_maps = [self._local_map(k) for k in range(spec.dimension)]
        self._intervals = None
        # sum over events of the outer product of d log lambda, refreshed by value_and_grad
        self.last_event_information = None

    # --- layout helpers -----------------------------------------------

    def _local_map(self, k):
        """Matrix sending component k's local gradient to theta coordinates.

        Local layout: baseline coefficients of row k, kernel parameters of
        row k (K * P, pair-major), then the d + 1 Bernstein weights.
        """
        s = self.spec
        m1, K, P, d1 = s.baseline_degree + 1, s.dimension, s.kernel_map.shape[-1], s.degree + 1
        M = np.zeros((m1 + K * P + d1, s.n_theta))
        for j in range(m1):
            if s.baseline_map[k, j] >= 0:
                M[j, s.baseline_map[k, j]] = 1.0
        for l in range(K):
            for q in range(P):
                if s.kernel_map[k, l, q] >= 0:
                    M[m1 + l * P + q, s.kernel_map[k, l, q]] = 1.0
        M[m1 + K * P:, s.n_eta:] = np.eye(d1)
        return M

    def intervals(self):
        if self._intervals is None:
            ut = np.unique(self.times)
            a = np.concatenate([[0.0], ut])
            b = np.concatenate([ut, [self.T]])
            keep = b > a
            self._intervals = (a[keep], b[keep])
        return self._intervals

    # --- events -----------------------------------------------------

    def _event_terms(self, theta: ParamVector, grad: bool):
        s = self.spec
        eta, w = theta.eta, theta.varpi
        kp = s.kernel_params(eta)
        n = self.n
        idx = np.arange(n)
        if s.kernel == "exponential":
            s_before, s1_before, _ = self.hist.exp_states(kp[..., 1])
            S = s_before[idx, self.comps]
            alpha, beta = kp[self.comps, :, 0], kp[self.comps, :, 1]
            Erow = alpha * beta * S
            dErow = None
            if grad:
                S1 = s1_before[idx, self.comps]
                dErow = np.stack([beta * S, alpha * (S - beta * S1)], axis=-1)
        else:
            if grad:
                E, dE = excitation_at(s, kp, self.hist, self.times, grad=True)
                dErow = dE[idx, self.comps]
            else:
                E = excitation_at(s, kp, self.hist, self.times)
                dErow = None
            Erow = E[idx, self.comps]
        mu = np.einsum("nj,nj->n", self.B_mu, s.baseline_coefs(eta)[self.comps])
        gx = self.B_g @ w
        excite = Erow.sum(axis=1)
        u = mu + gx * excite
        lam = activation(u, s.activation, s.floor)
        bad = ~(lam > MIN_INTENSITY)
        if n and bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise NonPositiveIntensityAtEvent(int(self.comps[i]), int(self.within[i]))
        value = float(np.log(lam).sum())
        if not grad:
            return value, None
        weight = activation_prime(u, s.activation, s.floor) / lam
        local = np.concatenate([self.B_mu, gx[:, None] * dErow.reshape(n, s.dimension * kp.shape[-1]),
                                self.B_g * excite[:, None]], axis=1) * weight[:, None]
        g = np.zeros(s.n_theta)
        J = np.zeros((s.n_theta, s.n_theta))
        for k in range(s.dimension):
            mask = self.comps == k
            Gk = local[mask] @ self._local_maps[k]
            g += Gk.sum(axis=0)
            J += Gk.T @ Gk
        self.last_event_information = J
        return value, g

    # --- compensator, closed form -------------------------------------

    def _G_matrix(self, b, deriv):
        """Per event j and basis function i: int_0^{T - t_j} B_i((t_j + u)/T) e^{-b u} du,
        and optionally its derivative in b."""
        d1 = self.spec.degree + 1
        m = np.arange(d1)
        scale = (1.0 / (self.T * b)) ** m
        coef = scale / b
        e = np.exp(-b * self.lag_to_end)
        G = np.einsum("nmi,m->ni", self.D_g, coef) - e[:, None] * (coef @ self.D_g1)[None, :]
        if not deriv:
            return G, None
        dcoef = -(m + 1) * coef / b
        dG = (np.einsum("nmi,m->ni", self.D_g, dcoef) - e[:, None] * (dcoef @ self.D_g1)[None, :]
              + (self.lag_to_end * e)[:, None] * (coef @ self.D_g1)[None, :])
        return G, dG

    def _closed_compensator(self, theta: ParamVector, grad: bool):
        s = self.spec
        K, m1, P, d1 = s.dimension, s.baseline_degree + 1, 2, s.degree + 1
        eta, w = theta.eta, theta.varpi
        kp = s.kernel_params(eta)
        alpha, beta = kp[..., 0], kp[..., 1]
        coefs = s.baseline_coefs(eta)
        comp = self.T * coefs.sum(axis=1) / m1
        Q = {}
        for b in np.unique(beta):
            G, dG = self._G_matrix(b, grad)
            sums = np.zeros((K, d1))
            dsums = np.zeros((K, d1))
            for l in range(K):
                mask = self.comps == l
                sums[l] = G[mask].sum(axis=0)
                if grad:
                    dsums[l] = dG[mask].sum(axis=0)
            Q[b] = (sums, dsums)
        local = np.zeros((K, m1 + K * P + d1)) if grad else None
        for k in range(K):
            if grad:
                local[k, :m1] = self.T / m1
            for l in range(K):
                a, b = alpha[k, l], beta[k, l]
                sums, dsums = Q[b]
                qw = sums[l] @ w
                comp[k] += a * b * qw
                if grad:
                    off = m1 + l * P
                    local[k, off] += b * qw
                    local[k, off + 1] += a * qw + a * b * (dsums[l] @ w)
                    local[k, m1 + K * P:] += a * b * sums[l]
        if not grad:
            return comp, None
        g = np.zeros(s.n_theta)
        for k in range(K):
            g += local[k] @ self._local_maps[k]
        return comp, g

    # --- compensator, quadrature ------------------------------------------

    def _node_terms(self, theta: ParamVector, nodes, grad: bool):
        """Intensity (Q, K) at query nodes, and local gradients (Q, K, L) of u."""
        s = self.spec
        eta, w = theta.eta, theta.varpi
        kp = s.kernel_params(eta)
        x = np.clip(nodes / self.T, 0.0, 1.0)
        mu = s.baseline(eta, x)
        gx = basis.g_eval(w, x)
        if grad:
            E, dE = excitation_at(s, kp, self.hist, nodes, grad=True)
        else:
            E = excitation_at(s, kp, self.hist, nodes)
        excite = E.sum(axis=2)
        u = mu + gx[:, None] * excite
        lam = activation(u, s.activation, s.floor)
        if not grad:
            return lam, None, None
        Q, K = E.shape[0], s.dimension
        Bm = basis.bernstein_eval(s.baseline_degree, x)
        Bg = basis.bernstein_eval(s.degree, x)
        local = np.concatenate([
            np.broadcast_to(Bm[:, None, :], (Q, K, Bm.shape[1])),
            gx[:, None, None] * dE.reshape(Q, K, -1),
            Bg[:, None, :] * excite[:, :, None],
        ], axis=2)
        dphi = activation_prime(u, s.activation, s.floor)
        return lam, local, dphi

    def _adaptive_rule(self, theta: ParamVector):
        """Quadrature nodes and weights meeting the 1e-9 * T absolute target."""
        a, b = self.intervals()
        done_x, done_w = [], []
        tol_density = 1e-9
        for depth in range(MAX_SPLIT_DEPTH + 1):
            if a.size == 0:
                break
            xw, ww = _gl_nodes(a, b)
            mid = 0.5 * (a + b)
            xl, wl = _gl_nodes(a, mid)
            xr, wr = _gl_nodes(mid, b)
            allx = np.concatenate([xw.ravel(), xl.ravel(), xr.ravel()])
            lam = self._node_terms(theta, allx, False)[0].sum(axis=1)
            nq = xw.size
            whole = (lam[:nq].reshape(xw.shape) * ww).sum(1)
            halves = (lam[nq:2 * nq].reshape(xw.shape) * wl).sum(1) + (lam[2 * nq:].reshape(xw.shape) * wr).sum(1)
            ok = np.abs(whole - halves) <= tol_density * (b - a) + 1e-14
            done_x += [xl[ok].ravel(), xr[ok].ravel()]
            done_w += [wl[ok].ravel(), wr[ok].ravel()]
            a, b = np.concatenate([a[~ok], mid[~ok]]), np.concatenate([mid[~ok], b[~ok]])
        if a.size:
            raise QuadratureFailure(f"{a.size} intervals unresolved after {MAX_SPLIT_DEPTH} splits")
        return np.concatenate(done_x), np.concatenate(done_w)

    def _quad_compensator(self, theta: ParamVector, grad: bool):
        nodes, weights = self._adaptive_rule(theta)
        s = self.spec
        comp = np.zeros(s.dimension)
        g = np.zeros(s.n_theta) if grad else None
        chunk = 200_000
        for a in range(0, nodes.size, chunk):
            nd, wt = nodes[a:a + chunk], weights[a:a + chunk]
            lam, local, dphi = self._node_terms(theta, nd, grad)
            comp += wt @ lam
            if grad:
                for k in range(s.dimension):
                    g += (wt * dphi[:, k]) @ local[:, k, :] @ self._local_maps[k]
        return comp, g

    # --- public evaluation --------------------------------------------

    def compensator(self, theta: ParamVector, quadrature: bool = False) -> np.ndarray:
        self.spec.check_theta(theta)
        if self.closed_form and not quadrature:
            return self._closed_compensator(theta, False)[0]
        return self._quad_compensator(theta, False)[0]

    def value(self, theta: ParamVector) -> float:
        self.spec.check_theta(theta)
        ev, _ = self._event_terms(theta, False)
        return ev - float(self.compensator(theta).sum())

    def value_and_grad(self, theta: ParamVector):
        self.spec.check_theta(theta)
        ev, gev = self._event_terms(theta, True)
        if self.closed_form:
            comp, gcomp = self._closed_compensator(theta, True)
        else:
            comp, gcomp = self._quad_compensator(theta, True)
        return ev - float(comp.sum()), gev - gcomp

    def cumulative_compensator(self, theta: ParamVector) -> list:
        """Lambda_k evaluated at each event of component k."""
        self.spec.check_theta(theta)
        s = self.spec
        K = s.dimension
        a, b = self.intervals()
        if self.closed_form:
            per = self._closed_interval_integrals(theta, a, b)
        else:
            per = np.zeros((a.size, K))
            xw, ww = _gl_nodes(a, b)
            for lo in range(0, a.size, 10_000):
                sl = slice(lo, lo + 10_000)
                lam = self._node_terms(theta, xw[sl].ravel(), False)[0]
                per[sl] = np.einsum("iqk,iq->ik", lam.reshape(xw[sl].shape + (K,)), ww[sl])
        cum = np.cumsum(per, axis=0)
        out = []
        for k in range(K):
            tk = self.events.components[k]
            # interval i ends at b[i]; Lambda(t) is the cumulative sum up to the interval ending at t
            j = np.searchsorted(b, tk, side="left")
            out.append(cum[j, k] if tk.size else np.empty(0))
        return out

    def _closed_interval_integrals(self, theta, a, b):
        s = self.spec
        K = s.dimension
        eta, w = theta.eta, theta.varpi
        kp = s.kernel_params(eta)
        alpha, beta = kp[..., 0], kp[..., 1]
        coefs = s.baseline_coefs(eta)
        prim = lambda z: basis.bernstein_primitive(s.baseline_degree, z) @ coefs.T  # noqa: E731
        per = self.T * (prim(b / self.T) - prim(a / self.T))
        # state right after the events at each interval start
        _, _, s_after = self.hist.exp_states(beta)
        ut_last = np.searchsorted(self.times, a, side="right") - 1
        have = (ut_last >= 0) & (a > 0)
        S0 = np.where(have[:, None, None], s_after[np.maximum(ut_last, 0)], 0.0)
        d1 = s.degree + 1
        Da = basis.bernstein_derivatives(s.degree, a / self.T) @ w  # (I, d+1) derivatives by order
        Db = basis.bernstein_derivatives(s.degree, b / self.T) @ w
        mm = np.arange(d1)
        for k in range(K):
            for l in range(K):
                bb = beta[k, l]
                coef = (1.0 / (self.T * bb)) ** mm / bb
                H = Da @ coef - np.exp(-bb * (b - a)) * (Db @ coef)
                per[:, k] += alpha[k, l] * bb * S0[:, k, l] * H
        return per

    def observed_information(self, theta: ParamVector) -> np.ndarray:
        """(1/T) sum_k int_0^T (d lambda_k)(d lambda_k)^T / lambda_k ds by Gauss-Legendre."""
        self.spec.check_theta(theta)
        s = self.spec
        a, b = self.intervals()
        xw, ww = _gl_nodes(a, b)
        nodes, weights = xw.ravel(), ww.ravel()
        info = np.zeros((s.n_theta, s.n_theta))
        for lo in range(0, nodes.size, 100_000):
            nd, wt = nodes[lo:lo + 100_000], weights[lo:lo + 100_000]
            lam, local, dphi = self._node_terms(theta, nd, True)
            for k in range(s.dimension):
                dl = (dphi[:, k:k + 1] * local[:, k, :]) @ self._local_maps[k]
                info += (dl * (wt / lam[:, k])[:, None]).T @ dl
        info = 0.5 * (info + info.T) / self.T
        return info


def loglik(spec: ModelSpec, theta: ParamVector, events: EventSequence) -> float:
    return LikelihoodWorkspace(spec, events).value(theta)


def loglik_grad(spec: ModelSpec, theta: ParamVector, events: EventSequence) -> np.ndarray:
    return LikelihoodWorkspace(spec, events).value_and_grad(theta)[1]


def compensator(spec: ModelSpec, theta: ParamVector, events: EventSequence, component: int,
                quadrature: bool = False) -> float:
    return float(LikelihoodWorkspace(spec, events).compensator(theta, quadrature)[component])


def observed_information(spec: ModelSpec, theta: ParamVector, events: EventSequence) -> np.ndarray:
    return LikelihoodWorkspace(spec, events).observed_information(theta)
