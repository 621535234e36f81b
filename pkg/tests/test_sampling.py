import numpy as np
import pytest

from Basis import natural_spline_basis
from designs.synthetic import simulate_var
from errors import InvalidConfig, SingularSigma22
from Estimation import active_set, als_fit, one_step_residuals, residual_covariance
from Panel import NeighborGraph, PanelData, build_sparsity
from Precision import covariance_select
from Sampling import (
    ChainState,
    Conditionals,
    PriorSpec,
    conditional_mvn,
    forecast_counterfactual,
    gibbs_run,
    sample_a_block,
    sample_beta_block,
)


def random_covariance(rng, n=4):
    x = rng.normal(size=(2 * n, n))
    return x.T @ x / (2 * n) + 0.1 * np.eye(n)


@pytest.fixture
def fitted(panel, basis, pattern):
    als = als_fit(panel, basis, pattern)
    precision = covariance_select(residual_covariance(panel, basis, als), pattern)
    return als, precision


def gaussian_block_posterior(panel, pattern, sigma, residual_of, size, prior_variance):
    """
    Mean and covariance of a block whose one-step residuals are affine in it, summing
    r_t' Sigma_t^-1 r_t over the active units of every time point.
    """
    active = active_set(panel, pattern)
    base = residual_of(np.zeros(size))
    jacobian = np.stack([residual_of(np.eye(size)[m]) - base for m in range(size)], axis=-1)
    precision = np.eye(size) / prior_variance
    rhs = np.zeros(size)
    for t in range(panel.T):
        idx = np.flatnonzero(active[:, t])
        if idx.size == 0:
            continue
        inverse = np.linalg.inv(sigma[np.ix_(idx, idx)])
        J = jacobian[idx, t]
        precision += J.T @ inverse @ J
        rhs -= J.T @ inverse @ base[idx, t]
    covariance = np.linalg.inv(precision)
    return covariance @ rhs, covariance


def beta_residuals(panel, basis, state, k):
    def residual_of(values):
        beta = state.beta.copy()
        beta[k] = values
        return one_step_residuals(panel, basis, beta, state.a_matrix)

    return residual_of


def a_slot_residuals(panel, basis, state, rows, cols):
    def residual_of(values):
        a_matrix = state.a_matrix.copy()
        a_matrix[rows, cols] = values
        return one_step_residuals(panel, basis, state.beta, a_matrix)

    return residual_of


@pytest.fixture
def chain_state(fitted):
    als, _precision = fitted
    return ChainState(als.beta.copy(), als.a_matrix.copy())


@pytest.fixture
def dense_sigma(panel):
    return random_covariance(np.random.default_rng(11), n=panel.n)


def assert_moments(draws, mean, covariance, width=4.0):
    B = draws.shape[0]
    se_mean = np.sqrt(np.diag(covariance) / B)
    assert np.all(np.abs(draws.mean(axis=0) - mean) < width * se_mean)
    se_cov = np.sqrt((covariance**2 + np.outer(np.diag(covariance), np.diag(covariance))) / B)
    assert np.all(np.abs(np.cov(draws.T) - covariance) < width * se_cov)


class TestConditionalMvn:
    def test_observed_coordinates_are_exact(self):
        rng = np.random.default_rng(0)
        sigma = random_covariance(rng)
        draw = conditional_mvn(np.zeros(4), sigma, [3, 1], [2.5, -1.25], rng)
        assert draw[3] == 2.5
        assert draw[1] == -1.25

    def test_nothing_observed_is_the_marginal(self):
        rng = np.random.default_rng(1)
        sigma = random_covariance(rng, n=2)
        draws = np.array([conditional_mvn(np.array([1.0, -1.0]), sigma, [], [], rng) for _ in range(20000)])
        np.testing.assert_allclose(draws.mean(axis=0), [1.0, -1.0], atol=0.05)
        np.testing.assert_allclose(np.cov(draws.T), sigma, atol=0.05)

    @pytest.mark.slow
    @pytest.mark.parametrize("seed", range(5))
    def test_moments_match_schur_complement(self, seed):
        rng = np.random.default_rng(seed)
        sigma = random_covariance(rng)
        mean = rng.normal(size=4)
        observed, values = np.array([0, 2]), rng.normal(size=2)
        free = np.array([1, 3])

        gain = sigma[np.ix_(free, observed)] @ np.linalg.inv(sigma[np.ix_(observed, observed)])
        expected_mean = mean[free] + gain @ (values - mean[observed])
        expected_cov = sigma[np.ix_(free, free)] - gain @ sigma[np.ix_(observed, free)]

        B = 100_000
        draws = np.array([conditional_mvn(mean, sigma, observed, values, rng)[free] for _ in range(B)])
        se_mean = np.sqrt(np.diag(expected_cov) / B)
        assert np.all(np.abs(draws.mean(axis=0) - expected_mean) < 3 * se_mean)
        empirical = np.cov(draws.T)
        se_cov = np.sqrt((expected_cov**2 + np.outer(np.diag(expected_cov), np.diag(expected_cov))) / B)
        assert np.all(np.abs(empirical - expected_cov) < 3 * se_cov)

    def test_singular_conditioning_block(self):
        sigma = np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
        with pytest.raises(SingularSigma22):
            conditional_mvn(np.zeros(3), sigma, [0, 1], [0.0, 0.0], np.random.default_rng(0))


class TestConditionals:
    def test_segments_share_active_sets(self, panel, basis, pattern, fitted):
        _als, precision = fitted
        conditionals = Conditionals(panel, basis, pattern, precision, PriorSpec())
        for s in range(conditionals.precisions.shape[0]):
            columns = conditionals.active[:, conditionals.segment_of == s]
            assert np.all(columns == columns[:, :1])

    def test_inactive_units_carry_no_weight(self, panel, basis, pattern, fitted):
        _als, precision = fitted
        conditionals = Conditionals(panel, basis, pattern, precision, PriorSpec())
        last = conditionals.segment_of[-1]
        inactive = ~conditionals.active[:, -1]
        assert np.all(conditionals.precisions[last][inactive] == 0.0)

    def test_single_block_draws_respect_mask(self, panel, basis, pattern, fitted):
        als, precision = fitted
        state = ChainState(als.beta.copy(), als.a_matrix.copy())
        rng = np.random.default_rng(4)
        beta = sample_beta_block(state, panel, basis, precision, PriorSpec(), 0, rng, pattern)
        assert beta.shape == (panel.n,)
        a_matrix = sample_a_block(state, panel, basis, precision, PriorSpec(), 1, rng, pattern)
        assert np.all(a_matrix[~pattern.a_mask] == 0.0)

    @pytest.mark.parametrize("k", range(3))
    def test_beta_conditional_closed_form(self, panel, basis, pattern, chain_state, dense_sigma, k):
        prior = PriorSpec(beta_variance=50.0)
        conditionals = Conditionals(panel, basis, pattern, dense_sigma, prior)
        rhs, precision = conditionals.beta_conditional(chain_state, k)
        mean, covariance = gaussian_block_posterior(
            panel, pattern, dense_sigma, beta_residuals(panel, basis, chain_state, k), panel.n, prior.beta_variance
        )
        np.testing.assert_allclose(np.linalg.solve(precision, rhs), mean, rtol=1e-7, atol=1e-8)
        np.testing.assert_allclose(np.linalg.inv(precision), covariance, rtol=1e-7, atol=1e-9)

    @pytest.mark.parametrize("slot", range(2))
    def test_a_conditional_closed_form(self, panel, basis, pattern, chain_state, dense_sigma, slot):
        prior = PriorSpec(a_variance=2.0)
        conditionals = Conditionals(panel, basis, pattern, dense_sigma, prior)
        rows, cols, rhs, precision = conditionals.a_conditional(chain_state, slot)
        assert np.all(pattern.a_mask[rows, cols])
        mean, covariance = gaussian_block_posterior(
            panel,
            pattern,
            dense_sigma,
            a_slot_residuals(panel, basis, chain_state, rows, cols),
            rows.size,
            prior.a_variance,
        )
        np.testing.assert_allclose(np.linalg.solve(precision, rhs), mean, rtol=1e-7, atol=1e-9)
        np.testing.assert_allclose(np.linalg.inv(precision), covariance, rtol=1e-7, atol=1e-9)

    def test_block_helpers_match_conditionals(self, panel, basis, pattern, chain_state, dense_sigma):
        conditionals = Conditionals(panel, basis, pattern, dense_sigma, PriorSpec())
        expected = conditionals.sample_beta(chain_state, 1, np.random.default_rng(6))
        beta = sample_beta_block(chain_state, panel, basis, dense_sigma, PriorSpec(), 1, np.random.default_rng(6), pattern)
        np.testing.assert_array_equal(beta, expected)
        expected = conditionals.sample_a(chain_state, 0, np.random.default_rng(6))
        a_matrix = sample_a_block(chain_state, panel, basis, dense_sigma, PriorSpec(), 1, np.random.default_rng(6), pattern)
        np.testing.assert_array_equal(a_matrix, expected)

    @pytest.mark.slow
    def test_beta_draws_match_closed_form_moments(self, panel, basis, pattern, chain_state, dense_sigma):
        prior = PriorSpec(beta_variance=50.0)
        conditionals = Conditionals(panel, basis, pattern, dense_sigma, prior)
        mean, covariance = gaussian_block_posterior(
            panel, pattern, dense_sigma, beta_residuals(panel, basis, chain_state, 0), panel.n, prior.beta_variance
        )
        rng = np.random.default_rng(12)
        draws = np.array([conditionals.sample_beta(chain_state, 0, rng) for _ in range(20_000)])
        assert_moments(draws, mean, covariance)

    @pytest.mark.slow
    def test_a_draws_match_closed_form_moments(self, panel, basis, pattern, chain_state, dense_sigma):
        prior = PriorSpec(a_variance=2.0)
        conditionals = Conditionals(panel, basis, pattern, dense_sigma, prior)
        rows, cols = conditionals.slots[0]
        mean, covariance = gaussian_block_posterior(
            panel,
            pattern,
            dense_sigma,
            a_slot_residuals(panel, basis, chain_state, rows, cols),
            rows.size,
            prior.a_variance,
        )
        rng = np.random.default_rng(13)
        draws = np.array([conditionals.sample_a(chain_state, 0, rng)[rows, cols] for _ in range(20_000)])
        assert_moments(draws, mean, covariance)

    def test_vanishing_prior_variance_shrinks_draws_to_zero(self, panel, basis, pattern, chain_state, dense_sigma):
        prior = PriorSpec(beta_variance=1e-12, a_variance=1e-12)
        conditionals = Conditionals(panel, basis, pattern, dense_sigma, prior)
        rng = np.random.default_rng(14)
        for k in range(basis.df):
            assert np.all(np.abs(conditionals.sample_beta(chain_state, k, rng)) < 1e-4)
        for slot in range(len(conditionals.slots)):
            rows, cols = conditionals.slots[slot]
            assert np.all(np.abs(conditionals.sample_a(chain_state, slot, rng)[rows, cols]) < 1e-4)

    def test_prior_must_be_positive(self):
        with pytest.raises(InvalidConfig):
            PriorSpec(beta_variance=0.0)


class TestGibbsRun:
    def test_same_seed_same_draws(self, panel, basis, pattern, fitted):
        als, precision = fitted
        first = gibbs_run(panel, basis, pattern, precision, PriorSpec(), als, iters=40, burnin=10, seed=5)
        second = gibbs_run(panel, basis, pattern, precision, PriorSpec(), als, iters=40, burnin=10, seed=5)
        np.testing.assert_array_equal(first.beta_draws, second.beta_draws)
        np.testing.assert_array_equal(first.a_values, second.a_values)

    def test_storage_and_mask(self, panel, basis, pattern, fitted):
        als, precision = fitted
        draws = gibbs_run(panel, basis, pattern, precision, PriorSpec(), als, iters=40, burnin=10, thin=3, seed=5)
        assert draws.n_draws == len(range(10, 40, 3))
        assert draws.beta_draws.shape == (draws.n_draws, basis.df, panel.n)
        assert draws.a_values.shape[1] == int(pattern.a_mask.sum())
        assert np.all(draws.a_draws[:, ~pattern.a_mask] == 0.0)

    def test_concentrates_at_least_squares_without_noise(self, panel, basis, pattern, fitted):
        als, _precision = fitted
        tiny = 1e-10 * np.eye(panel.n)
        draws = gibbs_run(panel, basis, pattern, tiny, PriorSpec(), als, iters=30, burnin=10, seed=2)
        np.testing.assert_allclose(draws.beta_draws.mean(axis=0), als.beta, atol=1e-3)
        np.testing.assert_allclose(draws.a_draws.mean(axis=0), als.a_matrix, atol=1e-3)

    @pytest.mark.slow
    def test_recovers_ar_coefficient(self):
        rng = np.random.default_rng(8)
        T = 300
        trend = np.tile(20.0 + 0.02 * np.arange(1, T + 1), (2, 1))
        outcomes = simulate_var(trend, 0.6 * np.eye(2), np.eye(2), rng)
        panel = PanelData(("a", "b"), outcomes, np.array([T - 5, T + 1]))
        pattern = build_sparsity(panel, NeighborGraph(frozenset()))
        basis = natural_spline_basis(panel.times, 2)
        als = als_fit(panel, basis, pattern)
        precision = covariance_select(residual_covariance(panel, basis, als), pattern)
        draws = gibbs_run(panel, basis, pattern, precision, PriorSpec(), als, iters=600, burnin=200, seed=3)
        a = draws.a_values
        assert np.all(np.abs(a.mean(axis=0) - 0.6) < 2 * a.std(axis=0) + 0.02)

    def test_no_stored_draws(self, panel, basis, pattern, fitted):
        als, precision = fitted
        with pytest.raises(InvalidConfig):
            gibbs_run(panel, basis, pattern, precision, PriorSpec(), als, iters=10, burnin=10)


class TestForecast:
    def test_untreated_outcomes_reproduced(self, panel, basis, pattern, fitted):
        als, precision = fitted
        draws = gibbs_run(panel, basis, pattern, precision, PriorSpec(), als, iters=30, burnin=10, seed=1)
        cf = forecast_counterfactual(draws, panel, basis, precision, np.random.default_rng(9))
        assert cf.t_min == panel.t_min
        assert cf.y_tilde.shape == (draws.n_draws, panel.n, panel.T - panel.t_min + 1)
        for h, t in enumerate(range(panel.t_min, panel.T + 1)):
            untreated = panel.untreated(t)
            np.testing.assert_array_equal(
                cf.y_tilde[:, untreated, h], np.broadcast_to(panel.outcomes[untreated, t - 1], (draws.n_draws, untreated.sum()))
            )
        assert np.all(np.isfinite(cf.y_tilde))

    def test_same_generator_seed_same_paths(self, panel, basis, pattern, fitted):
        als, precision = fitted
        draws = gibbs_run(panel, basis, pattern, precision, PriorSpec(), als, iters=20, burnin=5, seed=1)
        first = forecast_counterfactual(draws, panel, basis, precision, np.random.default_rng(9))
        second = forecast_counterfactual(draws, panel, basis, precision, np.random.default_rng(9))
        np.testing.assert_array_equal(first.y_tilde, second.y_tilde)
