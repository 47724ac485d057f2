import numpy as np
import pytest
from numpy.testing import assert_allclose

from mlrpca.multilevel import (
    LevelError,
    build_chain,
    build_interpolation,
    coarse_sizes,
    epsilon_bound,
    prolong,
    restrict,
    restrict_least_squares,
    select_levels,
)

# 6x3 worked example: transpose is (1/2) * [2 2 1 0 0 0; 0 0 1 2 1 0; 0 0 0 0 1 2]
R6_EXPECTED = 0.5 * np.array([
    [2, 2, 1, 0, 0, 0],
    [0, 0, 1, 2, 1, 0],
    [0, 0, 0, 0, 1, 2],
]).T


class TestBuildInterpolation:
    def test_worked_example_exact(self):
        assert np.array_equal(build_interpolation(6).toarray(), R6_EXPECTED)

    def test_prolonged_ones_stay_ones(self):
        ones_h = np.ones((4, 3))
        assert_allclose(ones_h @ build_interpolation(6).T.toarray(),
                        np.ones((4, 6)), atol=0)

    @pytest.mark.parametrize("n", [6, 8, 64])
    def test_row_sums_one(self, n):
        rows = build_interpolation(n).toarray().sum(axis=1)
        assert_allclose(rows, np.ones(n), atol=0)

    @pytest.mark.parametrize("n", [3, 5, 7, 13, 25])
    def test_odd_sizes(self, n):
        r = build_interpolation(n).toarray()
        assert r.shape == (n, (n + 1) // 2)
        assert_allclose(r.sum(axis=1), np.ones(n), atol=0)
        # final coarse column is a unit injection into the final row
        assert r[n - 1, -1] == 1.0
        assert np.count_nonzero(r[n - 1]) == 1

    @pytest.mark.parametrize("n", list(range(2, 40)) + [400, 401, 1024])
    def test_spectral_ratio_at_most_two(self, n):
        s = np.linalg.svd(build_interpolation(n).toarray(), compute_uv=False)
        assert s[0] / s[-1] <= 2.0

    def test_at_most_two_nonzeros_per_row(self):
        for n in (6, 7, 64, 65):
            counts = (build_interpolation(n).toarray() != 0).sum(axis=1)
            assert counts.max() <= 2

    def test_too_small_rejected(self):
        with pytest.raises(ValueError):
            build_interpolation(1)


class TestBuildChain:
    def test_two_level_chain(self):
        chain = build_chain(8, 2)
        assert [f.shape for f in chain.levels] == [(8, 4), (4, 2)]
        assert chain.composite.shape == (8, 2)
        s = np.linalg.svd(chain.composite.toarray(), compute_uv=False)
        assert s[-1] > 1e-8  # full column rank

    def test_single_level_equals_interpolation(self):
        chain = build_chain(6, 3, normalize=False)
        assert np.array_equal(chain.composite.toarray(), R6_EXPECTED)

    def test_normalized_spectral_norm_is_one(self):
        chain = build_chain(64, 8)
        s = np.linalg.svd(chain.composite.toarray(), compute_uv=False)
        assert abs(s[0] - 1.0) <= 1e-10

    def test_identity_chain(self):
        chain = build_chain(10, 10)
        assert chain.levels == []
        assert_allclose(chain.composite.toarray(), np.eye(10))

    def test_raw_composite_row_stochastic(self):
        chain = build_chain(64, 8, normalize=True)
        assert_allclose(chain.raw_composite.toarray().sum(axis=1),
                        np.ones(64), atol=1e-12)

    def test_unreachable_target(self):
        with pytest.raises(ValueError, match="not reachable"):
            build_chain(8, 3)

    def test_left_inverse(self):
        chain = build_chain(64, 8)
        r = chain.composite.toarray()
        assert_allclose(np.linalg.pinv(r) @ r, np.eye(8), atol=1e-10)


class TestSelectLevels:
    def test_deep_halving(self):
        assert select_levels(1024, rank_guess=5, r_needed=1, m=10000) == 8

    def test_enumerated_rule(self):
        # reachable sizes from 400: 400,200,100,50,25,13,7,4,2,1; the
        # smallest one exceeding max(rank_guess, r_needed) = 2 is 4
        assert coarse_sizes(400) == [400, 200, 100, 50, 25, 13, 7, 4, 2, 1]
        assert select_levels(400, rank_guess=2, r_needed=1, m=3072) == 4

    def test_no_feasible_level(self):
        with pytest.raises(LevelError, match="n_H > max"):
            select_levels(6, rank_guess=10, r_needed=1, m=100)

    def test_rank_bound_warning(self):
        # every valid coarse size exceeds (m+1)/2 for a tiny row count
        with pytest.warns(RuntimeWarning, match="n_H"):
            select_levels(64, rank_guess=30, r_needed=1, m=10)


class TestRestrictProlong:
    def test_identity_chain_roundtrip(self):
        chain = build_chain(6, 6)
        x = np.random.default_rng(0).standard_normal((4, 6))
        assert_allclose(restrict(x, chain), x)
        assert_allclose(prolong(x, chain), x)

    def test_restrict_matches_dense_product(self):
        chain = build_chain(16, 4)
        x = np.random.default_rng(1).standard_normal((5, 16))
        assert_allclose(restrict(x, chain), x @ chain.composite.toarray(),
                        atol=1e-12)

    def test_prolong_ones_raw(self):
        chain = build_chain(6, 3, normalize=False)
        assert_allclose(prolong(np.ones((4, 3)), chain), np.ones((4, 6)),
                        atol=0)

    def test_prolong_zero(self):
        chain = build_chain(8, 4)
        assert np.all(prolong(np.zeros((3, 4)), chain) == 0.0)

    def test_prolong_matches_dense_product(self):
        chain = build_chain(16, 4)
        x = np.random.default_rng(2).standard_normal((5, 4))
        assert_allclose(prolong(x, chain), x @ chain.composite.toarray().T,
                        atol=1e-12)

    def test_dimension_mismatch(self):
        chain = build_chain(8, 4)
        with pytest.raises(ValueError):
            restrict(np.ones((3, 7)), chain)
        with pytest.raises(ValueError):
            prolong(np.ones((3, 5)), chain)

    def test_restrict_prolong_is_gram_product(self):
        chain = build_chain(16, 8)
        x = np.random.default_rng(3).standard_normal((5, 8))
        r = chain.composite.toarray()
        assert_allclose(restrict(prolong(x, chain), chain), x @ (r.T @ r).T,
                        atol=1e-12)

    def test_least_squares_restriction_inverts_prolong(self):
        chain = build_chain(32, 8)
        x = np.random.default_rng(4).standard_normal((6, 8))
        assert_allclose(restrict_least_squares(prolong(x, chain), chain), x,
                        atol=1e-10)


class TestEpsilonBound:
    def test_orthogonal_columns_give_zero(self):
        chain = build_chain(8, 8)  # identity composite, all sigmas are 1
        l_h = np.random.default_rng(5).standard_normal((6, 8))
        assert epsilon_bound(l_h, chain) == pytest.approx(0.0, abs=1e-12)

    def test_zero_matrix_gives_zero(self):
        chain = build_chain(8, 4)
        assert epsilon_bound(np.zeros((5, 4)), chain) == 0.0

    def test_bounds_nuclear_norm_loss(self):
        rng = np.random.default_rng(6)
        for _ in range(50):
            n = int(rng.choice([8, 16, 32]))
            n_h = int(rng.choice([s for s in coarse_sizes(n) if s > 1]))
            chain = build_chain(n, n_h)
            l_h = rng.standard_normal((int(rng.integers(3, 12)), n_h))
            eps = epsilon_bound(l_h, chain)
            nuc_h = np.sum(np.linalg.svd(l_h, compute_uv=False))
            nuc_f = np.sum(np.linalg.svd(prolong(l_h, chain),
                                         compute_uv=False))
            assert nuc_h >= nuc_f - 1e-8          # ||R||_2 <= 1 direction
            assert nuc_f >= nuc_h - eps - 1e-8    # epsilon direction
            assert eps >= -1e-12
