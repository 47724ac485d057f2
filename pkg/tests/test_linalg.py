import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.optimize import minimize

from mlrpca.linalg import (
    MatrixNorms,
    norms,
    soft_threshold,
    svd_full,
    svd_truncated,
    svt,
)


def nuclear(x):
    return np.sum(np.linalg.svd(x, compute_uv=False))


def svt_objective(z, x, tau):
    return tau * nuclear(z) + 0.5 * np.sum((z - x) ** 2)


class TestSoftThreshold:
    def test_forced_values(self):
        out = soft_threshold(np.array([[1.0, -0.3, 0.7]]), 0.5)
        assert_allclose(out, [[0.5, 0.0, 0.2]], atol=1e-15)

    def test_zero_tau_is_identity(self):
        x = np.random.default_rng(0).standard_normal((4, 5))
        assert_allclose(soft_threshold(x, 0.0), x)

    def test_saturation(self):
        x = np.array([[0.2, -0.4], [0.1, 0.3]])
        assert np.all(soft_threshold(x, 0.5) == 0.0)

    def test_negative_tau_rejected(self):
        with pytest.raises(ValueError):
            soft_threshold(np.ones((2, 2)), -0.1)

    def test_composition(self):
        # S_a(S_b(x)) = S_{a+b}(x)
        rng = np.random.default_rng(1)
        for _ in range(20):
            x = rng.standard_normal((6, 4)) * rng.uniform(0.1, 5)
            a, b = rng.uniform(0, 1, size=2)
            assert_allclose(soft_threshold(soft_threshold(x, b), a),
                            soft_threshold(x, a + b), atol=1e-12)

    def test_lipschitz(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            x = rng.standard_normal((5, 5))
            y = rng.standard_normal((5, 5))
            tau = rng.uniform(0, 2)
            lhs = np.abs(soft_threshold(x, tau) - soft_threshold(y, tau))
            assert np.all(lhs <= np.abs(x - y) + 1e-15)


class TestSvd:
    def test_diagonal(self):
        f = svd_full(np.diag([3.0, 2.0, 1.0]))
        assert_allclose(f.sigma, [3, 2, 1])

    def test_identity(self):
        f = svd_full(np.eye(3))
        assert_allclose(f.sigma, [1, 1, 1])

    def test_reconstruction_oracle(self):
        x = np.random.default_rng(3).standard_normal((20, 10))
        u, s, v = svd_full(x)
        assert np.linalg.norm(x - (u * s) @ v.T) <= 1e-8 * np.linalg.norm(x)
        assert_allclose(u.T @ u, np.eye(10), atol=1e-8)
        assert_allclose(v.T @ v, np.eye(10), atol=1e-8)
        assert np.all(np.diff(s) <= 0)

    def test_sign_convention(self):
        u, _, _ = svd_full(np.random.default_rng(4).standard_normal((8, 5)))
        peaks = u[np.argmax(np.abs(u), axis=0), np.arange(5)]
        assert np.all(peaks > 0)

    def test_truncated_diagonal(self):
        f = svd_truncated(np.diag([3.0, 2.0, 1.0]), 2)
        assert_allclose(f.sigma, [3, 2])

    def test_truncated_rank_one(self):
        u = np.array([3.0, 4.0]) / 5.0
        v = np.array([1.0, 2.0, 2.0]) / 3.0
        f = svd_truncated(np.outer(u, v), 1)
        assert_allclose(f.sigma, [1.0], atol=1e-12)
        assert_allclose(np.abs(f.u[:, 0]), np.abs(u), atol=1e-12)
        assert_allclose(np.abs(f.v[:, 0]), np.abs(v), atol=1e-12)

    def test_truncated_matches_full(self):
        x = np.random.default_rng(5).standard_normal((50, 30))
        full = svd_full(x)
        part = svd_truncated(x, 5)
        assert_allclose(part.sigma, full.sigma[:5], rtol=1e-8)

    def test_lanczos_path_matches_dense(self):
        # above the dense cutoff the Lanczos branch takes over
        x = np.random.default_rng(6).standard_normal((300, 280))
        full = np.linalg.svd(x, compute_uv=False)
        part = svd_truncated(x, 4)
        assert_allclose(part.sigma, full[:4], rtol=1e-8)
        assert np.linalg.norm(x @ part.v - part.u * part.sigma) <= 1e-6

    def test_rank_out_of_range(self):
        x = np.ones((4, 3))
        with pytest.raises(ValueError):
            svd_truncated(x, 0)
        with pytest.raises(ValueError):
            svd_truncated(x, 4)

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            svd_full(np.array([[1.0, np.nan], [0.0, 1.0]]))


class TestSvt:
    def test_diagonal(self):
        z, rank = svt(np.diag([3.0, 1.0]), 2.0)
        assert_allclose(z, np.diag([1.0, 0.0]), atol=1e-12)
        assert rank == 1

    def test_zero_tau(self):
        x = np.random.default_rng(7).standard_normal((5, 4))
        z, rank = svt(x, 0.0)
        assert_allclose(z, x, atol=1e-10)
        assert rank == 4

    def test_threshold_at_second_value(self):
        x = np.random.default_rng(8).standard_normal((8, 6))
        s = np.linalg.svd(x, compute_uv=False)
        z, rank = svt(x, s[1])
        assert rank == 1
        zs = np.linalg.svd(z, compute_uv=False)
        assert_allclose(zs[0], s[0] - s[1], rtol=1e-10)
        assert np.all(zs[1:] < 1e-10 * s[0])

    def test_tie_counts_as_zeroed(self):
        z, rank = svt(np.diag([3.0, 2.0]), 2.0)
        assert rank == 1
        assert_allclose(z, np.diag([1.0, 0.0]), atol=1e-12)

    def test_variational_characterization(self):
        # svt is the prox of tau*||.||_*: derivative-free refinement from
        # several starts must not find a better objective value.
        rng = np.random.default_rng(9)
        for _ in range(5):
            x = rng.standard_normal((3, 3))
            tau = rng.uniform(0.1, 1.0)
            z, _ = svt(x, tau)
            best = svt_objective(z, x, tau)
            for start in (x, np.zeros_like(x), rng.standard_normal((3, 3))):
                res = minimize(
                    lambda v: svt_objective(v.reshape(3, 3), x, tau),
                    start.ravel(), method="Nelder-Mead",
                    options={"maxiter": 4000, "xatol": 1e-9, "fatol": 1e-12})
                assert res.fun >= best - 1e-6


class TestNorms:
    def test_diagonal(self):
        out = norms(np.diag([3.0, 1.0]))
        assert_allclose(
            [out.nuclear, out.l1, out.frobenius, out.spectral],
            [4.0, 4.0, np.sqrt(10.0), 3.0])

    def test_zero(self):
        out = norms(np.zeros((3, 2)))
        assert out == MatrixNorms(0.0, 0.0, 0.0, 0.0)

    def test_ordering(self):
        x = np.random.default_rng(10).standard_normal((10, 7))
        out = norms(x)
        assert out.nuclear >= out.frobenius >= out.spectral


class TestSingularValueProductInequality:
    def test_random_pairs(self):
        # sum_{i<=k} s_i(A) s_{n-i+1}(B) <= sum_{i<=k} s_i(AB)
        #                                <= sum_{i<=k} s_i(A) s_i(B)
        rng = np.random.default_rng(11)
        for _ in range(50):
            m, n, p = rng.integers(2, 10, size=3)
            m = int(max(m, n))  # tall-or-square A
            a = rng.standard_normal((m, n))
            b = rng.standard_normal((n, p))
            sa = np.zeros(n)
            sa[:min(m, n)] = np.linalg.svd(a, compute_uv=False)
            sb = np.zeros(n)
            sb[:min(n, p)] = np.linalg.svd(b, compute_uv=False)
            sab = np.zeros(n)
            sab[:min(m, p)] = np.linalg.svd(a @ b, compute_uv=False)
            for k in range(1, n + 1):
                lower = np.sum(sa[:k] * sb[::-1][:k])
                upper = np.sum(sa[:k] * sb[:k])
                mid = np.sum(sab[:k])
                assert lower <= mid + 1e-8
                assert mid <= upper + 1e-8
