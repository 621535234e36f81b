import numpy as np
import pytest

from errors import NoConverge, NotPD
from Panel import SparsityPattern
from Precision import covariance_select, kkt_residual, selection_objective


def random_problem(seed, n=10, forbidden=0.3):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(3 * n, n))
    s_hat = x.T @ x / (3 * n)
    upper = np.triu(rng.uniform(size=(n, n)) < forbidden, k=1)
    mask = ~(upper | upper.T)
    return s_hat, SparsityPattern(np.eye(n, dtype=bool), mask)


def newton_oracle(s_hat, mask, iters=100):
    """
    Newton's method on the free entries of omega, used as an independent reference.
    """
    n = s_hat.shape[0]
    pairs = [(i, j) for i in range(n) for j in range(i, n) if mask[i, j]]
    basis = []
    for i, j in pairs:
        e = np.zeros((n, n))
        e[i, j] = e[j, i] = 1.0
        basis.append(e)

    omega = np.diag(1.0 / np.diag(s_hat))
    for _ in range(iters):
        sigma = np.linalg.inv(omega)
        grad = np.array([np.sum(e * (s_hat - sigma)) for e in basis])
        if np.max(np.abs(grad)) < 1e-13:
            break
        left = [sigma @ e for e in basis]
        hessian = np.array([[np.sum(a * b.T) for b in left] for a in left])
        step = np.linalg.solve(hessian, grad)
        direction = sum(s * e for s, e in zip(step, basis))
        size = 1.0
        current = selection_objective(omega, s_hat)
        while selection_objective(omega - size * direction, s_hat) > current and size > 1e-8:
            size /= 2
        omega = omega - size * direction
    return omega


class TestCovarianceSelect:
    def test_unconstrained_is_the_inverse(self):
        s_hat, _ = random_problem(0)
        full = SparsityPattern(np.eye(10, dtype=bool), np.ones((10, 10), dtype=bool))
        result = covariance_select(s_hat, full)
        np.testing.assert_allclose(result.omega, np.linalg.inv(s_hat), atol=1e-10, rtol=0)
        assert result.jitter == 0.0

    @pytest.mark.parametrize("seed", range(50))
    def test_kkt_conditions(self, seed):
        s_hat, pattern = random_problem(seed)
        result = covariance_select(s_hat, pattern)
        assert result.kkt_residual <= 1e-6
        assert np.all(result.omega[~pattern.omega_mask] == 0.0)
        np.testing.assert_allclose(result.sigma[pattern.omega_mask], s_hat[pattern.omega_mask], atol=1e-6)
        np.linalg.cholesky(result.omega)

    @pytest.mark.parametrize("seed", range(5))
    def test_agrees_with_newton_reference(self, seed):
        s_hat, pattern = random_problem(100 + seed)
        result = covariance_select(s_hat, pattern, tol=1e-10)
        reference = newton_oracle(s_hat, pattern.omega_mask)
        np.testing.assert_allclose(result.omega, reference, atol=1e-5, rtol=0)

    def test_diagonal_pattern(self):
        s_hat, _ = random_problem(7)
        diagonal = SparsityPattern(np.eye(10, dtype=bool), np.eye(10, dtype=bool))
        result = covariance_select(s_hat, diagonal)
        np.testing.assert_allclose(result.omega, np.diag(1.0 / np.diag(s_hat)))

    def test_zero_variance_without_jitter(self):
        s_hat = np.diag([1.0, 0.0, 1.0])
        full = SparsityPattern(np.eye(3, dtype=bool), np.ones((3, 3), dtype=bool))
        with pytest.raises(NotPD):
            covariance_select(s_hat, full, allow_jitter=False)

    def test_jitter_rescues_degenerate_input(self):
        s_hat = np.diag([1.0, 0.0, 1.0])
        full = SparsityPattern(np.eye(3, dtype=bool), np.ones((3, 3), dtype=bool))
        result = covariance_select(s_hat, full)
        assert result.jitter > 0
        np.linalg.cholesky(result.omega)

    @pytest.mark.parametrize("seed", range(3))
    def test_relabelling_units_permutes_the_answer(self, seed):
        s_hat, pattern = random_problem(200 + seed)
        perm = np.random.default_rng(seed).permutation(10)
        permuted = SparsityPattern(np.eye(10, dtype=bool), pattern.omega_mask[np.ix_(perm, perm)])
        result = covariance_select(s_hat, pattern, tol=1e-10)
        again = covariance_select(s_hat[np.ix_(perm, perm)], permuted, tol=1e-10)
        np.testing.assert_allclose(again.omega, result.omega[np.ix_(perm, perm)], atol=1e-7, rtol=0)
        assert np.all(again.omega[~permuted.omega_mask] == 0.0)

    def test_sweep_limit(self):
        s_hat, pattern = random_problem(3)
        with pytest.raises(NoConverge):
            covariance_select(s_hat, pattern, max_sweeps=1)


class TestKktResidual:
    def test_zero_at_the_inverse(self):
        s_hat, _ = random_problem(1)
        mask = np.ones((10, 10), dtype=bool)
        assert kkt_residual(np.linalg.inv(s_hat), s_hat, mask) < 1e-10

    def test_counts_forbidden_entries(self):
        s_hat = np.eye(2)
        omega = np.array([[1.0, 0.5], [0.5, 1.0]])
        mask = np.eye(2, dtype=bool)
        assert kkt_residual(omega, s_hat, mask) >= 0.5
