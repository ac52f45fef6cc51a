import numpy as np
import pytest

from crowdmetric.linalg import numeric_rank
from crowdmetric.model import (
    CrowdModel,
    LinkFunction,
    ResponseDataset,
    delta,
    delta_records,
    delta_spread,
    delta_table,
    gen_items_gaussian,
    gen_metric,
    gen_users_gaussian,
    load_items_csv,
    load_responses_csv,
    make_crowd_model,
    preprocess_items,
    response_prob,
    sample_dataset,
    sample_user_pool,
    save_items_csv,
    save_responses_csv,
    spawn_rng,
    split_blocked_by_user,
)


class TestGenerators:
    def test_item_norms_concentrate(self):
        rng = np.random.default_rng(0)
        X = gen_items_gaussian(10_000, 10, rng)
        norms_sq = np.sum(X * X, axis=0)
        # ||x||^2 has mean 1 and variance 2/d under N(0, I/d)
        sigma = np.sqrt(2 / 10 / 10_000)
        assert abs(norms_sq.mean() - 1.0) <= 3 * sigma

    def test_seed_reproducibility(self):
        a = gen_items_gaussian(7, 3, np.random.default_rng(5))
        b = gen_items_gaussian(7, 3, np.random.default_rng(5))
        assert np.array_equal(a, b)

    def test_scalar_dimension(self):
        rng = np.random.default_rng(1)
        U = gen_users_gaussian(20_000, 1, rng)
        assert abs(U.var() - 1.0) < 0.05

    def test_metric_normalization(self):
        rng = np.random.default_rng(2)
        for mode in ("low_rank", "full_rank"):
            for d, r in ((4, 1), (5, 3), (6, 6)):
                M = gen_metric(d, r, rng, mode)
                assert np.linalg.norm(M) == pytest.approx(d, abs=1e-10)
                assert numeric_rank(M) == r
                assert np.linalg.eigvalsh(M)[0] >= -1e-12

    def test_full_rank_orthonormal_degeneracy(self):
        # the orthonormal route with r = d collapses to a scaled identity
        rng = np.random.default_rng(3)
        M = gen_metric(4, 4, rng, "low_rank")
        np.testing.assert_allclose(M, np.sqrt(4) * np.eye(4), atol=1e-12)

    def test_invalid_rank(self):
        with pytest.raises(ValueError):
            gen_metric(3, 4, np.random.default_rng(0))


class TestDelta:
    def test_identical_items(self):
        rng = np.random.default_rng(4)
        M = np.eye(3)
        x = rng.standard_normal(3)
        assert delta(M, np.zeros(3), x, x) == 0.0

    def test_norm_difference(self):
        assert delta(np.eye(2), np.zeros(2), np.array([1.0, 0.0]), np.array([0.0, 2.0])) == -3.0

    def test_ideal_point_consistency_example(self):
        M = np.eye(2)
        u = np.array([1.0, 0.0])
        v = -2 * M @ u
        x_i = np.array([1.0, 0.0])
        x_j = np.array([0.0, 2.0])
        assert delta(M, v, x_i, x_j) == pytest.approx(-5.0)
        direct = np.sum((x_i - u) ** 2) - np.sum((x_j - u) ** 2)
        assert direct == pytest.approx(-5.0)

    def test_linear_form_matches_distance_form(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            d = int(rng.integers(1, 6))
            L = rng.standard_normal((d, d))
            M = L @ L.T
            u = rng.standard_normal(d)
            v = -2 * M @ u
            x_i = rng.standard_normal(d)
            x_j = rng.standard_normal(d)
            lin = delta(M, v, x_i, x_j)
            dist = (x_i - u) @ M @ (x_i - u) - (x_j - u) @ M @ (x_j - u)
            assert lin == pytest.approx(dist, abs=1e-10)

    def test_delta_table_matches_record_form(self):
        rng = np.random.default_rng(6)
        model = make_crowd_model(3, 6, 2, 2, rng)
        table = delta_table(model.M_star, model.V_star, model.X)
        i = np.array([0, 3, 5])
        j = np.array([1, 2, 0])
        k = np.array([0, 1, 1])
        recs = delta_records(model.M_star, model.V_star, model.X, i, j, k)
        for t in range(3):
            assert recs[t] == pytest.approx(table[k[t], i[t], j[t]], abs=1e-12)


class TestLink:
    def test_half_at_zero(self):
        for link in (LinkFunction("logistic", 2.5), LinkFunction("probit")):
            assert response_prob(link, 0.0) == pytest.approx(0.5)

    def test_logistic_inversion(self):
        link = LinkFunction("logistic", 1.0)
        assert response_prob(link, -np.log(9)) == pytest.approx(0.9, abs=1e-12)

    def test_monotone_limit(self):
        link = LinkFunction("logistic", 1.0)
        assert response_prob(link, 50.0) < 1e-20

    def test_symmetry_on_grid(self):
        grid = np.linspace(-8, 8, 100)
        for link in (LinkFunction("logistic", 3.0), LinkFunction("probit")):
            np.testing.assert_allclose(link(grid), 1 - link(-grid), atol=1e-12)

    def test_strictly_increasing(self):
        grid = np.linspace(-5, 5, 200)
        for link in (LinkFunction("logistic", 0.7), LinkFunction("probit")):
            vals = link(grid)
            assert np.all(np.diff(vals) > 0)

    def test_invalid_configs(self):
        with pytest.raises(ValueError):
            LinkFunction("logistic", beta=0.0)
        with pytest.raises(ValueError):
            LinkFunction("cauchy")


class TestCrowdModel:
    def test_pseudo_points_consistent(self):
        rng = np.random.default_rng(7)
        model = make_crowd_model(3, 8, 4, 2, rng)
        np.testing.assert_allclose(model.V_star, -2 * model.M_star @ model.U_star, atol=1e-12)

    def test_inconsistent_pseudo_points_rejected(self):
        rng = np.random.default_rng(8)
        model = make_crowd_model(2, 5, 2, 2, rng)
        with pytest.raises(ValueError):
            CrowdModel(model.X, model.M_star, model.U_star, model.V_star + 1.0)

    def test_non_psd_metric_rejected(self):
        rng = np.random.default_rng(9)
        X = gen_items_gaussian(4, 2, rng)
        with pytest.raises(ValueError):
            CrowdModel(X, np.diag([1.0, -0.5]), np.zeros((2, 1)))

    def test_delta_spread_reports_magnitudes(self):
        rng = np.random.default_rng(10)
        model = make_crowd_model(2, 6, 2, 1, rng)
        stats = delta_spread(model)
        assert stats["max_abs"] >= stats["mean_abs"] >= 0


class TestSampling:
    def test_empty_dataset(self):
        rng = np.random.default_rng(11)
        model = make_crowd_model(2, 5, 2, 1, rng)
        ds = sample_dataset(model, LinkFunction("logistic", 1.0), 0, rng)
        assert len(ds) == 0

    def test_hard_threshold_labels(self):
        rng = np.random.default_rng(12)
        model = make_crowd_model(3, 10, 3, 3, rng)
        link = LinkFunction("logistic", beta=1e6)
        ds = sample_dataset(model, link, 500, rng)
        deltas = delta_records(model.M_star, model.V_star, model.X, ds.i_idx, ds.j_idx, ds.k_idx)
        np.testing.assert_array_equal(ds.y, np.where(deltas < 0, -1.0, 1.0))

    def test_deterministic_mode_matches_sign(self):
        rng = np.random.default_rng(13)
        model = make_crowd_model(2, 6, 2, 2, rng)
        ds = sample_dataset(model, LinkFunction("logistic", 1.0), 200, rng, deterministic=True)
        deltas = delta_records(model.M_star, model.V_star, model.X, ds.i_idx, ds.j_idx, ds.k_idx)
        np.testing.assert_array_equal(ds.y, np.where(deltas < 0, -1.0, 1.0))

    def test_label_frequencies_match_link(self):
        # n = 2 pins the sampled pair; check the empirical flip rate
        rng = np.random.default_rng(14)
        model = make_crowd_model(2, 2, 1, 2, rng)
        link = LinkFunction("logistic", 1.5)
        ds = sample_dataset(model, link, 10_000, rng)
        d01 = delta(model.M_star, model.V_star[:, 0], model.X[:, 0], model.X[:, 1])
        # records may present the pair in either orientation
        oriented = np.where(ds.i_idx == 0, ds.y, -ds.y)
        p = float(response_prob(link, d01))
        frac_neg = np.mean(oriented == -1)
        sigma = np.sqrt(p * (1 - p) / len(ds))
        assert abs(frac_neg - p) <= 3 * sigma

    def test_same_seed_identical_different_seed_not(self):
        model = make_crowd_model(2, 8, 3, 1, np.random.default_rng(15))
        link = LinkFunction("logistic", 2.0)
        a = sample_dataset(model, link, 300, spawn_rng(99, 1))
        b = sample_dataset(model, link, 300, spawn_rng(99, 1))
        c = sample_dataset(model, link, 300, spawn_rng(99, 2))
        assert np.array_equal(a.y, b.y) and np.array_equal(a.i_idx, b.i_idx)
        assert not (np.array_equal(a.y, c.y) and np.array_equal(a.i_idx, c.i_idx))

    def test_user_pool_fixed_user(self):
        rng = np.random.default_rng(16)
        model = make_crowd_model(2, 6, 4, 1, rng)
        pool = sample_user_pool(model, LinkFunction("logistic", 1.0), 2, 50, rng)
        assert np.all(pool.k_idx == 2)

    def test_label_validation(self):
        with pytest.raises(ValueError):
            ResponseDataset(4, 2, [0], [0], [0], [1.0])  # i == j
        with pytest.raises(ValueError):
            ResponseDataset(4, 2, [0], [1], [0], [0.5])  # bad label
        with pytest.raises(ValueError):
            ResponseDataset(4, 2, [0], [1], [5], [1.0])  # bad user


class TestSplitting:
    def _pools(self, rng, sizes):
        model = make_crowd_model(2, 6, len(sizes), 1, rng)
        link = LinkFunction("logistic", 1.0)
        return [
            sample_user_pool(model, link, k, size, rng) for k, size in enumerate(sizes)
        ]

    def test_zero_train_all_test(self):
        rng = np.random.default_rng(17)
        pools = self._pools(rng, [10, 10])
        train, test = split_blocked_by_user(pools, 0, rng)
        assert len(train) == 0 and len(test) == 20

    def test_equal_counts_per_user(self):
        rng = np.random.default_rng(18)
        pools = self._pools(rng, [30, 30, 30])
        train, test = split_blocked_by_user(pools, 12, rng)
        for k in range(3):
            assert int(np.sum(train.k_idx == k)) == 12
            assert int(np.sum(test.k_idx == k)) == 18

    def test_partition_preserves_records(self):
        rng = np.random.default_rng(19)
        pools = self._pools(rng, [15, 15])
        train, test = split_blocked_by_user(pools, 5, rng)

        def multiset(ds):
            return sorted(zip(ds.i_idx, ds.j_idx, ds.k_idx, ds.y))

        combined = multiset(train) + multiset(test)
        original = []
        for pool in pools:
            original += multiset(pool)
        assert sorted(combined) == sorted(original)

    def test_insufficient_pool(self):
        rng = np.random.default_rng(20)
        pools = self._pools(rng, [4, 4])
        with pytest.raises(ValueError):
            split_blocked_by_user(pools, 5, rng)


class TestCSV:
    def test_items_roundtrip(self, tmp_path):
        rng = np.random.default_rng(21)
        X = gen_items_gaussian(9, 4, rng)
        path = tmp_path / "items.csv"
        save_items_csv(path, X)
        np.testing.assert_allclose(load_items_csv(path), X, atol=0)

    def test_preprocessing_flags(self, tmp_path):
        rng = np.random.default_rng(22)
        X = 5.0 + 2.0 * rng.standard_normal((3, 37))
        path = tmp_path / "colors.csv"
        save_items_csv(path, X)
        Z = load_items_csv(path, center=True, maxnorm=True)
        np.testing.assert_allclose(Z.mean(axis=1), 0.0, atol=1e-12)
        assert np.linalg.norm(Z, axis=0).max() == pytest.approx(1.0, abs=1e-12)

    def test_preprocess_direct(self):
        X = np.array([[1.0, 3.0], [2.0, 6.0]])
        Z = preprocess_items(X, center=True)
        np.testing.assert_allclose(Z.mean(axis=1), 0.0, atol=1e-15)

    def test_responses_roundtrip(self, tmp_path):
        rng = np.random.default_rng(23)
        model = make_crowd_model(2, 7, 3, 1, rng)
        ds = sample_dataset(model, LinkFunction("logistic", 2.0), 40, rng)
        path = tmp_path / "resp.csv"
        save_responses_csv(path, ds)
        back = load_responses_csv(path, n_items=7, n_users=3)
        assert np.array_equal(back.i_idx, ds.i_idx)
        assert np.array_equal(back.j_idx, ds.j_idx)
        assert np.array_equal(back.k_idx, ds.k_idx)
        assert np.array_equal(back.y, ds.y)

    def test_header_validation(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("a,b\n1,2\n")
        with pytest.raises(ValueError):
            load_items_csv(bad)
        with pytest.raises(ValueError):
            load_responses_csv(bad)
