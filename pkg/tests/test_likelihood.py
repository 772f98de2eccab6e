import numpy as np
import pytest

from lshawkes.core import EventSequence, ParamVector, RngStream
from lshawkes.errors import NonPositiveIntensityAtEvent
from lshawkes.intensity import univariate_spec
from lshawkes.likelihood import (LikelihoodWorkspace, compensator, loglik, loglik_grad,
                                 observed_information)
from lshawkes.simulate import SimConfig, thinning_simulate
from oracles import DirectModel, adaptive_simpson, central_difference
from test_intensity import random_instance

SPEC = univariate_spec("exponential", 3)


class TestLoglik:
    def test_unit_rate(self):
        ev = EventSequence(2.0, [np.array([1.0])])
        assert loglik(SPEC, ParamVector(np.array([1.0, 2.0]), np.zeros(4)), ev) == pytest.approx(-2.0, abs=1e-14)

    def test_poisson_closed_form(self):
        ev = EventSequence(10.0, [np.array([0.5, 1.5, 4.0, 9.0])])
        c = 0.7
        got = loglik(SPEC, ParamVector(np.array([c, 2.0]), np.zeros(4)), ev)
        assert got == pytest.approx(4 * np.log(c) - c * 10, rel=1e-14)

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_oracle(self, seed):
        spec, th, ev = random_instance(np.random.default_rng(100 + seed), n=30, T=10.0)
        want = DirectModel(spec, th, ev).loglik(tol=1e-11)
        assert loglik(spec, th, ev) == pytest.approx(want, rel=1e-8)

    @pytest.mark.parametrize("kernel", ["powerlaw", "gaussian"])
    def test_other_families_match_oracle(self, kernel):
        spec, th, ev = random_instance(np.random.default_rng(7), kernel, n=20, T=8.0)
        assert loglik(spec, th, ev) == pytest.approx(DirectModel(spec, th, ev).loglik(1e-11), rel=1e-8)

    def test_zero_intensity_at_event(self):
        ev = EventSequence(2.0, [np.array([0.5, 1.0])])
        with pytest.raises(NonPositiveIntensityAtEvent) as err:
            loglik(SPEC, ParamVector(np.array([0.0, 2.0]), np.ones(4)), ev)
        assert (err.value.component, err.value.index) == (0, 0)

    def test_relabelling_invariance(self):
        spec, th, ev = random_instance(np.random.default_rng(8))
        eta = th.eta
        names = spec.eta_names
        swap = {"0": "1", "1": "0"}

        def relabel(n):
            if n.startswith("mu"):
                return "mu" + swap[n[2]] + n[3:]
            if n.startswith("alpha"):
                return "alpha" + swap[n[5]] + swap[n[6]]
            return n
        perm = [names.index(relabel(n)) for n in names]
        swapped = EventSequence(ev.horizon, ev.components[::-1])
        a = loglik(spec, th, ev)
        b = loglik(spec, ParamVector(eta[perm], th.varpi), swapped)
        assert a == pytest.approx(b, rel=1e-13)


class TestCompensator:
    def test_constant_rate(self):
        ev = EventSequence(7.0, [np.array([1.0, 3.0])])
        assert compensator(SPEC, ParamVector(np.array([1.5, 2.0]), np.zeros(4)), ev, 0) == pytest.approx(10.5)

    def test_single_event(self):
        ev = EventSequence(2.0, [np.array([1.0])])
        th = ParamVector(np.array([1.0, 2.0]), np.ones(4))
        want = 2 + (1 - np.exp(-2)) / 2
        assert compensator(SPEC, th, ev, 0) == pytest.approx(want, rel=1e-14)
        assert compensator(SPEC, th, ev, 0, quadrature=True) == pytest.approx(want, rel=1e-12)

    def test_closed_form_vs_quadrature(self):
        rng = np.random.default_rng(9)
        for _ in range(50):
            spec, th, ev = random_instance(rng, n=rng.integers(4, 80), T=rng.uniform(5, 50))
            ws = LikelihoodWorkspace(spec, ev)
            assert ws.closed_form
            a, b = ws.compensator(th), ws.compensator(th, quadrature=True)
            assert np.all(np.abs(a - b) <= 1e-9 * ev.horizon)

    def test_additivity_over_event_partition(self):
        spec, th, ev = random_instance(np.random.default_rng(10), n=25, T=12.0)
        ws = LikelihoodWorkspace(spec, ev)
        total = ws.compensator(th)
        cum = ws.cumulative_compensator(th)
        ref = DirectModel(spec, th, ev)
        for k in range(2):
            t = ev.components[k]
            # Lambda_k at each event is the sum of pieces between consecutive events
            pieces = [adaptive_simpson(lambda s: ref.intensity(k, s), a, b, 1e-12)
                      for a, b in zip(np.concatenate([[0.0], t[:-1]]), t)]
            np.testing.assert_allclose(cum[k], np.cumsum(pieces), rtol=1e-9, atol=1e-9)
            tail = adaptive_simpson(lambda s: ref.intensity(k, s), t[-1], ev.horizon, 1e-12)
            assert abs(cum[k][-1] + tail - total[k]) < 1e-9 * ev.horizon


class TestGradient:
    def test_no_events(self):
        ev = EventSequence(4.0, [np.array([])])
        g = loglik_grad(SPEC, ParamVector(np.array([1.0, 2.0]), np.ones(4)), ev)
        assert g[0] == -4.0
        assert np.all(g[2:] == 0)

    @pytest.mark.parametrize("kernel", ["exponential", "powerlaw", "gaussian"])
    def test_finite_differences(self, kernel):
        spec, th, ev = random_instance(np.random.default_rng(31), kernel, n=40, T=15.0)
        f = lambda v: loglik(spec, ParamVector(v[:th.n_eta], v[th.n_eta:]), ev)  # noqa: E731
        fd = central_difference(f, th.values)
        an = loglik_grad(spec, th, ev)
        np.testing.assert_allclose(an, fd, rtol=1e-5, atol=1e-6)

    def test_softplus_finite_differences(self):
        spec, th, ev = random_instance(np.random.default_rng(32), n=40, T=15.0, softplus=True)
        f = lambda v: loglik(spec, ParamVector(v[:th.n_eta], v[th.n_eta:]), ev)  # noqa: E731
        np.testing.assert_allclose(loglik_grad(spec, th, ev), central_difference(f, th.values), rtol=1e-5, atol=1e-6)


class TestObservedInformation:
    def test_poisson(self):
        ev = EventSequence(10.0, [np.array([1.0, 2.0])])
        I = observed_information(SPEC, ParamVector(np.array([0.8, 2.0]), np.zeros(4)), ev)
        assert I[0, 0] == pytest.approx(1 / 0.8, rel=1e-12)

    def test_symmetric_psd(self):
        spec, th, ev = random_instance(np.random.default_rng(33))
        I = observed_information(spec, th, ev)
        assert np.max(np.abs(I - I.T)) == 0.0
        assert np.min(np.linalg.eigvalsh(I)) > -1e-12

    def test_score_covariance(self):
        th = ParamVector(np.array([1.0, 2.0]), np.ones(4))
        T = 500.0
        scores, infos = [], []
        for r in range(100):
            ev = thinning_simulate(SimConfig(SPEC, th, T, RngStream(77, r)))
            scores.append(loglik_grad(SPEC, th, ev) / np.sqrt(T))
            infos.append(observed_information(SPEC, th, ev))
        cov = np.cov(np.array(scores).T)
        mean_info = np.mean(infos, axis=0)
        ratio = np.diag(cov) / np.diag(mean_info)
        assert np.all(np.abs(ratio - 1) < 0.15), ratio
