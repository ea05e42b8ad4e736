import numpy as np
import pytest

from hdlogit.errors import InvalidInputError
from hdlogit.model import Dataset
from hdlogit.solvers import (
    fit_logistic_lasso,
    fit_nodewise_lasso,
    lambda_path,
)

import oracles


def _binary_dataset(rng, n, p, beta=None):
    X = rng.standard_normal((n, p))
    if beta is None:
        beta = np.zeros(p)
    prob = 1.0 / (1.0 + np.exp(-X @ beta))
    y = (rng.random(n) < prob).astype(float)
    return Dataset(X, y)


class TestLogisticLasso:
    def test_zero_solution_above_lambda_max(self):
        rng = np.random.default_rng(0)
        d = _binary_dataset(rng, 30, 5)
        lam_max = float(np.max(np.abs(d.X.T @ (d.y - 0.5)))) / d.n
        fit = fit_logistic_lasso(d, lam_max * 1.0000001)
        assert np.array_equal(fit.beta_hat, np.zeros(5))
        assert fit.converged

    @pytest.mark.parametrize("seed", range(8))
    def test_matches_prox_grad_oracle(self, seed):
        rng = np.random.default_rng(100 + seed)
        beta = np.zeros(5)
        beta[:2] = [1.0, -0.5]
        d = _binary_dataset(rng, 20, 5, beta)
        fit = fit_logistic_lasso(d, 0.1)
        assert fit.converged
        assert fit.kkt_residual <= 1e-7
        oracle = oracles.prox_grad_logistic_lasso(d.X, d.y, 0.1, tol=1e-10)
        assert np.max(np.abs(fit.beta_hat - oracle)) <= 1e-5

    def test_lambda_zero_matches_newton_mle(self):
        rng = np.random.default_rng(42)
        beta = np.array([0.7, -0.4])
        d = _binary_dataset(rng, 50, 2, beta)
        fit = fit_logistic_lasso(d, 0.0)
        mle = oracles.newton_logistic_mle(d.X, d.y)
        assert fit.converged
        assert np.max(np.abs(fit.beta_hat - mle)) <= 1e-5

    def test_objective_path_monotone(self):
        rng = np.random.default_rng(5)
        beta = np.zeros(6)
        beta[0] = 1.5
        d = _binary_dataset(rng, 60, 6, beta)
        fit = fit_logistic_lasso(d, 0.05)
        path = np.asarray(fit.objective_path)
        assert np.all(np.diff(path) <= 1e-12)

    def test_sample_permutation_invariance(self):
        rng = np.random.default_rng(9)
        beta = np.zeros(4)
        beta[1] = 1.0
        d = _binary_dataset(rng, 40, 4, beta)
        perm = rng.permutation(40)
        d2 = Dataset(d.X[perm], d.y[perm])
        f1 = fit_logistic_lasso(d, 0.05)
        f2 = fit_logistic_lasso(d2, 0.05)
        assert np.max(np.abs(f1.beta_hat - f2.beta_hat)) <= 1e-7

    def test_invalid_lambda(self):
        rng = np.random.default_rng(1)
        d = _binary_dataset(rng, 10, 2)
        with pytest.raises(InvalidInputError):
            fit_logistic_lasso(d, -0.1)
        with pytest.raises(InvalidInputError):
            fit_logistic_lasso(d, np.inf)

    def test_nonconvergence_flagged(self):
        rng = np.random.default_rng(2)
        beta = np.zeros(5)
        beta[0] = 2.0
        d = _binary_dataset(rng, 50, 5, beta)
        fit = fit_logistic_lasso(d, 0.01, max_iter=1)
        assert not fit.converged


class TestNodewiseLasso:
    def test_orthogonal_design_zero_gamma(self):
        # construct exactly orthogonal columns via QR
        rng = np.random.default_rng(3)
        Q, _ = np.linalg.qr(rng.standard_normal((20, 4)))
        d = Dataset(Q, (rng.random(20) < 0.5).astype(float))
        fit = fit_nodewise_lasso(d, 1, 0.05)
        assert np.array_equal(fit.gamma_hat, np.zeros(3))
        np.testing.assert_array_equal(fit.residual, d.column(1))

    def test_p2_closed_form(self):
        rng = np.random.default_rng(4)
        X = rng.standard_normal((50, 2))
        X /= np.sqrt(np.mean(X**2, axis=0))  # standardized columns
        d = Dataset(X, (rng.random(50) < 0.5).astype(float))
        lam = 0.02
        fit = fit_nodewise_lasso(d, 0, lam)
        rho = float(X[:, 1] @ X[:, 0]) / 50
        denom = float(X[:, 1] @ X[:, 1]) / 50
        expected = oracles.soft_threshold(rho, lam) / denom
        assert fit.gamma_hat[0] == pytest.approx(expected, abs=1e-8)

    @pytest.mark.parametrize("seed", range(6))
    def test_matches_shuffled_order_oracle(self, seed):
        rng = np.random.default_rng(50 + seed)
        X = rng.standard_normal((30, 6))
        X[:, 0] += 0.5 * X[:, 1]  # induce correlation
        d = Dataset(X, (rng.random(30) < 0.5).astype(float))
        fit = fit_nodewise_lasso(d, 0, 0.05)
        oracle = oracles.shuffled_cd_nodewise(X, 0, 0.05, order_seed=seed)
        assert np.max(np.abs(fit.gamma_hat - oracle)) <= 1e-6

    def test_residual_reconstruction_identity(self):
        rng = np.random.default_rng(6)
        X = rng.standard_normal((25, 5))
        d = Dataset(X, (rng.random(25) < 0.5).astype(float))
        fit = fit_nodewise_lasso(d, 2, 0.01)
        mask = np.arange(5) != 2
        expected = d.column(2) - d.X[:, mask] @ fit.gamma_hat
        np.testing.assert_array_equal(fit.residual, expected)

    def test_p1_degenerate_case(self):
        rng = np.random.default_rng(7)
        X = rng.standard_normal((10, 1))
        d = Dataset(X, (rng.random(10) < 0.5).astype(float))
        fit = fit_nodewise_lasso(d, 0, 0.1)
        assert fit.gamma_hat.size == 0
        np.testing.assert_array_equal(fit.residual, d.column(0))

    def test_bad_index(self):
        rng = np.random.default_rng(8)
        d = Dataset(rng.standard_normal((10, 3)), (rng.random(10) < 0.5).astype(float))
        with pytest.raises(InvalidInputError):
            fit_nodewise_lasso(d, 3, 0.1)


class TestLambdaPath:
    def test_two_point_grid_endpoints(self):
        rng = np.random.default_rng(10)
        d = Dataset(rng.standard_normal((20, 4)), (rng.random(20) < 0.5).astype(float))
        grid = lambda_path(d, j=0, grid_size=2, ratio=0.01)
        lam_max = np.max(np.abs(d.X[:, 1:].T @ d.column(0))) / 20
        assert grid[0] == pytest.approx(lam_max, rel=1e-14)
        assert grid[1] == pytest.approx(0.01 * lam_max, rel=1e-14)

    def test_log_uniform_spacing(self):
        rng = np.random.default_rng(11)
        d = Dataset(rng.standard_normal((20, 4)), (rng.random(20) < 0.5).astype(float))
        grid = lambda_path(d, j=1, grid_size=30, ratio=1e-3)
        assert np.all(np.diff(grid) < 0)
        ratios = grid[1:] / grid[:-1]
        assert np.max(np.abs(ratios - ratios[0])) <= 1e-12

    def test_fit_at_lambda_max_is_zero(self):
        rng = np.random.default_rng(12)
        X = rng.standard_normal((30, 5))
        X[:, 0] += X[:, 3]
        d = Dataset(X, (rng.random(30) < 0.5).astype(float))
        grid = lambda_path(d, j=0, grid_size=10, ratio=0.01)
        fit = fit_nodewise_lasso(d, 0, float(grid[0]) * (1 + 1e-12))
        assert np.array_equal(fit.gamma_hat, np.zeros(4))

    def test_whole_model_lambda_max(self):
        rng = np.random.default_rng(13)
        d = _binary_dataset(rng, 25, 3)
        grid = lambda_path(d, grid_size=5, ratio=0.1)
        fit = fit_logistic_lasso(d, float(grid[0]))
        assert np.array_equal(fit.beta_hat, np.zeros(3))

    def test_zero_column_rejected_by_name(self):
        X = np.ones((10, 3))
        X[:, 1] = 0.0
        d = Dataset(X, np.array([0, 1] * 5, dtype=float))
        with pytest.raises(InvalidInputError, match="column 1"):
            lambda_path(d, j=0)

    def test_bad_grid_args(self):
        rng = np.random.default_rng(14)
        d = Dataset(rng.standard_normal((10, 2)), (rng.random(10) < 0.5).astype(float))
        with pytest.raises(InvalidInputError):
            lambda_path(d, j=0, grid_size=1)
        with pytest.raises(InvalidInputError):
            lambda_path(d, j=0, ratio=1.5)


class TestPathConsistency:
    def test_warm_equals_cold_along_path(self):
        # warm-started scan solutions vs cold single fits, within 10*tol
        from hdlogit import _kernels
        from hdlogit.debias import WEIGHT_FLOOR

        rng = np.random.default_rng(15)
        X = rng.standard_normal((40, 8))
        X[:, 0] += 0.8 * X[:, 2]
        d = Dataset(X, (rng.random(40) < 0.5).astype(float))
        grid = lambda_path(d, j=0, grid_size=20, ratio=1e-3)
        XT = np.ascontiguousarray(X.T)
        G = _kernels.gram(XT)
        w = np.full(40, 0.25)
        tol = 1e-7
        gamma_path, *_ = _kernels.nodewise_scan(
            X, XT, G, 0, grid, w, WEIGHT_FLOOR, tol, 10_000
        )
        for li, lam in enumerate(grid):
            cold = fit_nodewise_lasso(d, 0, float(lam), tol=tol)
            warm_gamma = np.delete(gamma_path[li], 0)
            assert np.max(np.abs(warm_gamma - cold.gamma_hat)) <= 10 * tol
