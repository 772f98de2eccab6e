import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lshawkes.core import ParamVector
from lshawkes.errors import DomainError, NoConvergence
from lshawkes.intensity import univariate_spec
from lshawkes.kernels import (KernelFamily, branching_matrix, check_stability, kernel_eval,
                              kernel_grad_eta, kernel_tail_integral, spectral_radius)
from oracles import adaptive_simpson, central_difference, phi_direct


def family(name, *p):
    return KernelFamily(name, np.array(p, dtype=float).reshape(1, 1, -1))


EXP12 = family("exponential", 1, 2)


class TestKernelEval:
    def test_exponential_at_zero(self):
        assert kernel_eval(EXP12, 0, 0, 0.0) == 2.0

    def test_exponential_half(self):
        assert kernel_eval(EXP12, 0, 0, 0.5) == pytest.approx(2 * np.exp(-1), rel=1e-15)

    def test_powerlaw_at_zero(self):
        assert kernel_eval(family("powerlaw", 1, 2, 1), 0, 0, 0.0) == 1.0

    def test_negative_lag_rejected(self):
        with pytest.raises(DomainError):
            kernel_eval(EXP12, 0, 0, -1.0)

    @pytest.mark.parametrize("p", [("exponential", -1, 2), ("exponential", 1, 0),
                                   ("powerlaw", 1, 1, 1), ("gaussian", 1, -1, 0)])
    def test_invalid_parameters(self, p):
        with pytest.raises(DomainError):
            family(*p)

    @pytest.mark.parametrize("name,p", [("exponential", (0.7, 1.3)), ("powerlaw", (0.4, 2.5, 0.8)),
                                        ("gaussian", (0.9, 3.0, 0.4))])
    def test_matches_direct(self, name, p):
        fam = family(name, *p)
        for t in (0.0, 0.1, 0.5, 2.0, 7.0):
            assert kernel_eval(fam, 0, 0, t) == pytest.approx(phi_direct(name, p, t) if t > 0 else
                                                              kernel_eval(fam, 0, 0, 0.0), rel=1e-13)


class TestKernelGrad:
    def test_alpha_derivative(self):
        for t in (0.0, 0.3, 2.0):
            assert kernel_grad_eta(EXP12, 0, 0, t)[0] == pytest.approx(2 * np.exp(-2 * t), rel=1e-15)

    def test_beta_derivative(self):
        assert kernel_grad_eta(EXP12, 0, 0, 1.0)[1] == pytest.approx(-np.exp(-2), rel=1e-14)

    def test_random_finite_differences(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            name = rng.choice(["exponential", "powerlaw", "gaussian"])
            if name == "exponential":
                p = np.array([rng.uniform(0.1, 2), rng.uniform(0.2, 5)])
            elif name == "powerlaw":
                p = np.array([rng.uniform(0.1, 2), rng.uniform(1.2, 4), rng.uniform(0.2, 3)])
            else:
                p = np.array([rng.uniform(0.1, 2), rng.uniform(0.2, 5), rng.uniform(0, 2)])
            t = rng.uniform(0.01, 3)
            fd = central_difference(lambda q: float(kernel_eval(KernelFamily(name, q.reshape(1, 1, -1)), 0, 0, t)), p)
            an = kernel_grad_eta(family(name, *p), 0, 0, t)
            scale = np.maximum(np.abs(an), 1e-8)
            assert np.all(np.abs(an - fd) / scale < 1e-6), (name, p, t, an, fd)


class TestTailIntegral:
    def test_exponential_mass(self):
        assert kernel_tail_integral(family("exponential", 0.5, 2), 0, 0, 0, np.inf) == pytest.approx(0.5, rel=1e-15)

    def test_empty_interval(self):
        for fam in (EXP12, family("powerlaw", 1, 2, 1), family("gaussian", 1, 2, 0.5)):
            assert kernel_tail_integral(fam, 0, 0, 1.3, 1.3) == 0.0

    def test_exponential_tail(self):
        assert kernel_tail_integral(EXP12, 0, 0, 1.0, np.inf) == pytest.approx(np.exp(-2), rel=1e-14)

    @pytest.mark.parametrize("name,p", [("exponential", (0.7, 1.3)), ("powerlaw", (0.4, 2.5, 0.8)),
                                        ("gaussian", (0.9, 3.0, 0.4))])
    def test_against_quadrature(self, name, p):
        fam = family(name, *p)
        ref = adaptive_simpson(lambda s: phi_direct(name, p, s), 0.2, 3.0, 1e-12)
        assert kernel_tail_integral(fam, 0, 0, 0.2, 3.0) == pytest.approx(ref, abs=1e-10)

    @given(st.sampled_from(["exponential", "powerlaw", "gaussian"]), st.floats(0.01, 20))
    def test_additivity(self, name, b):
        p = {"exponential": (0.8, 1.7), "powerlaw": (0.6, 1.8, 0.5), "gaussian": (1.1, 0.7, 1.5)}[name]
        fam = family(name, *p)
        whole = kernel_tail_integral(fam, 0, 0, 0, np.inf)
        parts = kernel_tail_integral(fam, 0, 0, 0, b) + kernel_tail_integral(fam, 0, 0, b, np.inf)
        assert abs(whole - parts) < 1e-9


class TestSpectralRadius:
    def test_diagonal(self):
        assert spectral_radius(np.diag([0.3, 0.7])) == pytest.approx(0.7, abs=1e-11)

    def test_two_by_two(self):
        assert spectral_radius([[0.3, 0.2], [0.1, 0.4]]) == pytest.approx(0.5, abs=1e-11)

    def test_scalar(self):
        assert spectral_radius([[0.9]]) == pytest.approx(0.9, abs=1e-12)

    def test_periodic_matrix(self):
        assert spectral_radius([[0, 1.0], [1.0, 0]]) == pytest.approx(1.0, abs=1e-11)

    def test_gershgorin_and_eigvals(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            n = rng.integers(1, 6)
            m = rng.uniform(0, 1, (n, n))
            m /= m.sum(axis=1, keepdims=True) * rng.uniform(1, 3)
            r = spectral_radius(m)
            assert r <= m.sum(axis=1).max() + 1e-10
            assert r == pytest.approx(np.max(np.abs(np.linalg.eigvals(m))), abs=1e-8)

    def test_no_convergence(self):
        with pytest.raises(NoConvergence):
            spectral_radius(np.array([[0.5, 0.2], [0.1, 0.4]]), max_iter=2)

    def test_negative_entries_rejected(self):
        with pytest.raises(DomainError):
            spectral_radius([[-0.1]])


class TestStability:
    spec = univariate_spec("exponential", 3)

    def test_sinusoid_weights(self):
        # weights whose largest entry is 1.6, kernel exp(-2t) of mass 0.5
        th = ParamVector(np.array([1.0, 2.0]), np.array([1.0, 1.6, 1.4, 1.2]))
        s = check_stability(self.spec, th)
        assert s.rho == pytest.approx(0.8, abs=1e-11)
        assert s.stable

    def test_zero_weights(self):
        s = check_stability(self.spec, ParamVector(np.array([1.0, 2.0]), np.zeros(4)))
        assert s.rho == 0 and s.stable

    def test_critical_rejected(self):
        s = check_stability(self.spec, ParamVector(np.array([1.0, 2.0]), np.full(4, 2.0)))
        assert s.rho == pytest.approx(1.0, abs=1e-11)
        assert not s.stable

    def test_branching_matrix_scales(self):
        fam = KernelFamily("exponential", np.array([[[0.2, 1], [0.1, 2]], [[0.0, 1], [0.3, 3]]]))
        np.testing.assert_allclose(branching_matrix(fam, 2.0), 2 * np.array([[0.2, 0.1], [0.0, 0.3]]))
