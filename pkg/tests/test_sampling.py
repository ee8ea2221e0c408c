import math

import numpy as np
import pytest
from scipy import stats

from haarbook.densities import log_k1, log_t_constant
from haarbook.integration import tangent_map
from haarbook.ltgroup import TriMatrix, tau
from haarbook.sampling import (
    EnvelopeUnavailableError,
    RngStream,
    bartlett_degrees,
    rejection_bound,
    sample_bartlett,
    sample_data,
    sample_k0,
    sample_k1_pivot,
    sample_k1_rejection,
)

ALPHA = 1e-3
N_DRAWS = 100_000


def sines(w):
    """t_j = w_j / sqrt(1 + w_1^2 + ... + w_j^2), the sines of the tangent coordinates."""
    return w / np.sqrt(1.0 + np.cumsum(w * w, axis=-1))


def sine_law(n, j):
    # under k1 the tangent coordinates are independent with density cos^{n-j}(a_j),
    # so (t_j + 1) / 2 ~ Beta((n - j + 1)/2, (n - j + 1)/2), j = 1..p
    a = 0.5 * (n - j + 1)
    return stats.beta(a, a)


def cell_chi2(w, n, bins=8):
    """Pearson chi-square of the joint sine histogram against the product law (p = 2)."""
    t = (sines(w) + 1) / 2
    edges = [sine_law(n, j + 1).ppf(np.linspace(0, 1, bins + 1)) for j in range(2)]
    counts, _, _ = np.histogram2d(t[:, 0], t[:, 1], bins=edges)
    expected = np.full_like(counts, w.shape[0] / bins**2)
    return stats.chisquare(counts.ravel(), expected.ravel(), ddof=0)


class TestStreams:
    def test_reproducible(self):
        a = RngStream(7, 3).generator(2).standard_normal(5)
        b = RngStream(7, 3).generator(2).standard_normal(5)
        np.testing.assert_array_equal(a, b)

    def test_distinct(self):
        a = RngStream(7, 3).generator().standard_normal(5)
        assert not np.allclose(a, RngStream(7, 4).generator().standard_normal(5))
        assert not np.allclose(a, RngStream(8, 3).generator().standard_normal(5))
        assert not np.allclose(RngStream(7, 3).generator(0).standard_normal(5), RngStream(7, 3).generator(1).standard_normal(5))

    def test_child(self):
        assert RngStream(5, 1).child(9) == RngStream(5, 9)


class TestOracle:
    @pytest.mark.parametrize("n,p", [(2, 2), (3, 2), (4, 3)])
    def test_pullback_factorises(self, n, p, rng):
        # k1(w(a)) |dw/da| = C prod_j cos^{n-j}(a_j): checks the oracle used below against log_k1
        a = rng.uniform(-1.5, 1.5, size=(200, p))
        w, log_jac = tangent_map(a)
        lhs = log_k1(w, n) + log_jac
        j = np.arange(1, p + 1)
        rhs = np.sum((n - j) * np.log(np.cos(a)), axis=-1)
        np.testing.assert_allclose(lhs - rhs, np.full(200, lhs[0] - rhs[0]), atol=1e-10)


class TestHaarSamplers:
    def test_cauchy_at_n1(self):
        w = sample_k1_pivot(RngStream(1, 0).generator(), 1, 1, N_DRAWS)
        assert stats.kstest(w[:, 0], stats.cauchy.cdf).pvalue > ALPHA

    @pytest.mark.parametrize("n", [1, 2, 5])
    def test_p1_is_student(self, n):
        w = sample_k1_pivot(RngStream(2, n).generator(), n, 1, N_DRAWS)
        assert stats.kstest(math.sqrt(n) * w[:, 0], stats.t(n).cdf).pvalue > ALPHA

    @pytest.mark.parametrize("n", [2, 3, 4])
    def test_pivot_cell_chi2_p2(self, n):
        w = sample_k1_pivot(RngStream(3, n).generator(), n, 2, N_DRAWS)
        assert cell_chi2(w, n).pvalue > ALPHA

    @pytest.mark.parametrize("n", [3, 4, 6])
    def test_rejection_cell_chi2_p2(self, n):
        w = sample_k1_rejection(RngStream(4, n).generator(), n, 2, N_DRAWS)
        assert cell_chi2(w, n).pvalue > ALPHA

    @pytest.mark.parametrize("n", [1, 3])
    def test_rejection_p1(self, n):
        w = sample_k1_rejection(RngStream(5, n).generator(), n, 1, N_DRAWS)
        assert stats.kstest(math.sqrt(n) * w[:, 0], stats.t(n).cdf).pvalue > ALPHA

    @pytest.mark.parametrize("p,n", [(p, n) for p in (1, 2, 3) for n in range(p, p + 4)])
    def test_pivot_marginals(self, p, n):
        t = sines(sample_k1_pivot(RngStream(6, 10 * p + n).generator(), n, p, N_DRAWS))
        for j in range(p):
            assert stats.kstest((t[:, j] + 1) / 2, sine_law(n, j + 1).cdf).pvalue > ALPHA, f"coordinate {j + 1}"

    @pytest.mark.parametrize("p,n", [(p, n) for p in (1, 2, 3) for n in range(p, p + 4) if n >= 2 * p - 1])
    def test_samplers_agree(self, p, n):
        a = sample_k1_pivot(RngStream(7, 10 * p + n).generator(), n, p, N_DRAWS)
        b = sample_k1_rejection(RngStream(8, 10 * p + n).generator(), n, p, N_DRAWS)
        ta, tb = sines(a), sines(b)
        for j in range(p):
            assert stats.ks_2samp(ta[:, j], tb[:, j]).pvalue > ALPHA, f"coordinate {j + 1}"
        # the squared radius mixes all coordinates
        assert stats.ks_2samp(np.sum(a * a, axis=1), np.sum(b * b, axis=1)).pvalue > ALPHA

    def test_p1_envelope_is_exact(self):
        _, rate = sample_k1_rejection(RngStream(9, 1).generator(), 4, 1, 10_000, return_rate=True)
        assert rate == 1.0

    def test_envelope_dominates(self):
        # k1 <= M g with g the t envelope of n - 2p + 2 degrees of freedom
        n, p = 5, 3
        w = sample_k1_rejection(RngStream(9, 2).generator(), n, p, 10_000)
        log_env = log_t_constant(n - p + 1, p) - 0.5 * (n - p + 2) * np.log1p(np.sum(w * w, axis=1))
        assert np.all(log_k1(w, n) <= math.log(rejection_bound(n, p)) + log_env + 1e-12)

    def test_acceptance_rate(self):
        _, rate = sample_k1_rejection(RngStream(9, 0).generator(), 3, 2, N_DRAWS, return_rate=True)
        assert rejection_bound(3, 2) == pytest.approx(2.0)
        assert rate == pytest.approx(1.0 / rejection_bound(3, 2), abs=0.01)

    def test_envelope_unavailable(self):
        with pytest.raises(EnvelopeUnavailableError, match="use pivot sampler"):
            sample_k1_rejection(np.random.default_rng(0), 2, 2, 10)

    def test_shapes(self):
        rng = np.random.default_rng(0)
        assert sample_k1_pivot(rng, 3, 2).shape == (2,)
        assert sample_k1_pivot(rng, 3, 2, 7).shape == (7, 2)
        assert sample_k1_rejection(rng, 3, 2, (2, 3)).shape == (2, 3, 2)

    def test_pivot_requires_n_ge_p(self):
        with pytest.raises(ValueError, match="n >= p"):
            sample_k1_pivot(np.random.default_rng(0), 1, 2, 3)


class TestOtherSamplers:
    def test_k0_cauchy(self):
        w = sample_k0(RngStream(10, 1).generator(), 1, 1, N_DRAWS)
        assert stats.kstest(w[:, 0], stats.cauchy.cdf).pvalue > ALPHA

    def test_k0_sign_symmetry(self):
        w = sample_k0(RngStream(10, 2).generator(), 3, 2, N_DRAWS)
        s = np.sign(w[:, 0])
        assert abs(s.mean()) <= 3 * s.std() / math.sqrt(N_DRAWS)

    def test_k0_p1_is_student(self):
        w = sample_k0(RngStream(10, 0).generator(), 4, 1, N_DRAWS)
        assert stats.kstest(2.0 * w[:, 0], stats.t(4).cdf).pvalue > ALPHA

    def test_k0_radius(self):
        # |sqrt(nu) w|^2 / p ~ F(p, nu) with nu = n - p + 1
        n, p = 5, 3
        w = sample_k0(RngStream(11, 0).generator(), n, p, N_DRAWS)
        nu = n - p + 1
        assert stats.kstest(nu * np.sum(w * w, axis=1) / p, stats.f(p, nu).cdf).pvalue > ALPHA

    def test_k0_non_integer(self):
        w = sample_k0(RngStream(12, 0).generator(), 2.5, 1, N_DRAWS)
        assert stats.kstest(math.sqrt(2.5) * w[:, 0], stats.t(2.5).cdf).pvalue > ALPHA
        with pytest.raises(ValueError):
            sample_k0(np.random.default_rng(0), 1.0, 2)

    def test_bartlett_degrees(self):
        np.testing.assert_array_equal(bartlett_degrees(5, 3), [5, 4, 3])

    def test_bartlett_diagonal(self):
        v = sample_bartlett(RngStream(13, 0).generator(), 5, 3, N_DRAWS)
        assert np.all(np.triu(v, 1) == 0)
        for i, d in enumerate(bartlett_degrees(5, 3)):
            assert stats.kstest(v[:, i, i] ** 2, stats.chi2(d).cdf).pvalue > ALPHA
        assert stats.kstest(v[:, 2, 0], stats.norm.cdf).pvalue > ALPHA

    def test_data_factor_schedule(self):
        # the factor of XX' under theta = I has L_ii^2 ~ chi2(n - i + 1)
        rng = RngStream(14, 0).generator()
        n, p = 4, 3
        diag = np.array([tau(sample_data(rng, TriMatrix.identity(p), n).s).diagonal for _ in range(5000)])
        for i in range(p):
            assert stats.kstest(diag[:, i] ** 2, stats.chi2(n - i).cdf).pvalue > ALPHA

    def test_data_covariance(self):
        theta = TriMatrix.from_array([[1.0, 0.0], [0.5, 2.0]])
        x = sample_data(RngStream(15, 0).generator(), theta, 200_000)
        cov = theta.to_array() @ theta.to_array().T
        np.testing.assert_allclose(x.s / x.n, cov, atol=0.03)

    def test_data_mean_zero(self):
        x = sample_data(RngStream(16, 0).generator(), TriMatrix.identity(1), 10**6)
        assert abs(x.data.mean()) < 3e-3

    def test_data_variance_ratio(self):
        x = sample_data(RngStream(17, 0).generator(), TriMatrix.diag([1.0, 2.0]), N_DRAWS)
        v = x.data.var(axis=1)
        # Var of a sample variance ratio is about 2 * 4^2 * 2 / N for Gaussian rows
        assert abs(v[1] / v[0] - 4.0) < 3 * math.sqrt(64.0 / N_DRAWS)

    def test_data_deterministic(self):
        a = sample_data(RngStream(18, 0).generator(), TriMatrix.identity(2), 5)
        b = sample_data(RngStream(18, 0).generator(), TriMatrix.identity(2), 5)
        np.testing.assert_array_equal(a.data, b.data)

    def test_data_requires_n_ge_p(self):
        with pytest.raises(ValueError, match="n >= p"):
            sample_data(np.random.default_rng(0), TriMatrix.identity(3), 2)
