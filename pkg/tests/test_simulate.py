import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lshawkes.core import EventSequence, ParamVector, RngStream, validate_events
from lshawkes.errors import DomainError, EventCapExceeded, Unstable
from lshawkes.intensity import multivariate_spec, stationary_mean, univariate_spec
from lshawkes.likelihood import LikelihoodWorkspace
from lshawkes.simulate import SimConfig, SinusoidalRate, thinning_simulate, time_rescaling_residuals

SPEC = univariate_spec("exponential", 3)
NULL = ParamVector(np.array([1.0, 2.0]), np.ones(4))


def sim(spec, theta, T, seed, stream=0, **kw):
    return thinning_simulate(SimConfig(spec, theta, T, RngStream(seed, stream), **kw))


class TestThinning:
    def test_poisson_rate(self):
        th = ParamVector(np.array([1.0, 2.0]), np.zeros(4))
        counts = [sim(SPEC, th, 1000.0, 1, r).n_events for r in range(200)]
        assert 0.98 <= np.mean(counts) / 1000 <= 1.02

    def test_null_model_rate(self):
        counts = [sim(SPEC, NULL, 500.0, 2, r).n_events for r in range(50)]
        want = stationary_mean(SPEC, NULL, 0.5)[0]
        assert abs(np.mean(counts) / 500 - want) < 0.05 * want

    def test_deterministic(self):
        a = sim(SPEC, NULL, 300.0, 5, 3)
        b = sim(SPEC, NULL, 300.0, 5, 3)
        assert a == b
        assert np.array_equal(a.components[0], b.components[0])

    def test_streams_differ(self):
        assert sim(SPEC, NULL, 300.0, 5, 3) != sim(SPEC, NULL, 300.0, 5, 4)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32), st.sampled_from(["exponential", "powerlaw", "gaussian"]))
    def test_output_valid(self, seed, kernel):
        spec = multivariate_spec(2, kernel, 2, baseline_degree=1)
        amp = {"exponential": 0.3, "powerlaw": 0.2, "gaussian": 0.2}[kernel]
        shape = {"exponential": [1.5], "powerlaw": [2.0, 1.0], "gaussian": [1.0, 0.5]}[kernel]
        eta = np.array([0.5, 1.0, 0.8, 0.4, amp, amp / 2, amp / 2, amp, *shape])
        ev = sim(spec, ParamVector(eta, np.array([1.0, 1.5, 0.5])), 50.0, seed)
        validate_events(ev)
        assert ev.dimension == 2

    def test_unstable_rejected(self):
        with pytest.raises(Unstable):
            sim(SPEC, ParamVector(np.array([1.0, 2.0]), np.full(4, 2.0)), 10.0, 0)

    def test_event_cap(self):
        with pytest.raises(EventCapExceeded):
            sim(SPEC, NULL, 1000.0, 0, max_events=50)

    def test_bad_horizon(self):
        with pytest.raises(DomainError):
            SimConfig(SPEC, NULL, 0.0, RngStream(0))

    @pytest.mark.parametrize("kernel,shape", [("exponential", [1.5]), ("powerlaw", [2.5, 2.0]),
                                              ("gaussian", [2.0, 0.7])])
    @pytest.mark.parametrize("activation", ["identity", "softplus"])
    def test_counts_match_compensator(self, kernel, shape, activation):
        # N(T) - Lambda(T) is a zero-mean martingale at the horizon
        spec = multivariate_spec(2, kernel, 2, baseline_degree=1, activation=activation)
        eta = np.array([0.6, 0.9, 0.8, 0.4, 0.3, 0.1, 0.2, 0.25, *shape])
        th = ParamVector(eta, np.array([1.0, 1.6, 0.4]))
        gaps = []
        for r in range(60):
            ev = sim(spec, th, 60.0, 9, r)
            gaps.append(ev.counts - LikelihoodWorkspace(spec, ev).compensator(th))
        gaps = np.array(gaps)
        se = gaps.std(axis=0, ddof=1) / np.sqrt(len(gaps))
        assert np.all(np.abs(gaps.mean(axis=0)) < 4 * se), (gaps.mean(axis=0), se)

    def test_sinusoidal_rate(self):
        rate = SinusoidalRate(1.0, 0.6, 1.0)
        x = np.linspace(0, 1, 201)
        assert rate.sup == 1.6 and rate.sup >= rate(x).max()
        assert rate.argmax() == pytest.approx(1.0, abs=1e-4)
        # locally stationary mean count: T * integral of mu / (1 - g(x) / 2)
        want = 1000.0 * np.trapezoid(1 / (1 - rate(x) / 2), x)
        counts = [sim(SPEC, NULL, 1000.0, 4, r, rate=rate).n_events for r in range(40)]
        se = np.std(counts, ddof=1) / np.sqrt(len(counts))
        assert abs(np.mean(counts) - want) < 4 * se + 0.01 * want


class TestResiduals:
    def test_poisson_unit_rate(self):
        t = np.array([0.3, 1.1, 2.0, 4.5])
        res = time_rescaling_residuals(SPEC, ParamVector(np.array([1.0, 2.0]), np.zeros(4)), EventSequence(5.0, [t]))
        np.testing.assert_allclose(res[0], np.diff(np.concatenate([[0], t])), rtol=1e-14)

    def test_poisson_rate_two(self):
        t = np.array([0.3, 1.1, 2.0, 4.5])
        res = time_rescaling_residuals(SPEC, ParamVector(np.array([2.0, 2.0]), np.zeros(4)), EventSequence(5.0, [t]))
        np.testing.assert_allclose(res[0], 2 * np.diff(np.concatenate([[0], t])), rtol=1e-14)

    def test_unit_exponential_under_truth(self):
        from scipy import stats
        passed = 0
        for r in range(100):
            ev = sim(SPEC, NULL, 500.0, 6, r)
            passed += stats.kstest(time_rescaling_residuals(SPEC, NULL, ev)[0], "expon").pvalue > 0.01
        assert passed >= 95

    def test_generic_kernel_residuals(self):
        from scipy import stats
        spec = univariate_spec("powerlaw", 2)
        th = ParamVector(np.array([1.0, 2.5, 2.0]), np.array([0.5, 1.5, 1.0]))
        res = np.concatenate([time_rescaling_residuals(spec, th, sim(spec, th, 200.0, 8, r))[0] for r in range(10)])
        assert stats.kstest(res, "expon").pvalue > 0.001
