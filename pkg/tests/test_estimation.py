import logging

import numpy as np
import pytest

from crowdmetric.estimation import (
    ConstraintScheme,
    Loss,
    SolverConfig,
    UnidentifiableError,
    empirical_risk,
    fit_erm,
    fit_single_user,
    oracle_hyperparameters,
    oracle_single_user_radius,
    recover_ideal_points,
    risk_subgradient,
    solve_unquantized,
)
from crowdmetric.linalg import nu, nu_inverse, nuclear_norm, half_dim
from crowdmetric.model import (
    CrowdModel,
    LinkFunction,
    ResponseDataset,
    delta_records,
    gen_items_gaussian,
    make_crowd_model,
    sample_dataset,
)
from crowdmetric.selection import (
    SelectionMatrix,
    UserScheme,
    minimal_multiuser_construction,
    sample_uniform_pairs,
    selection_rank,
)


def scheme_deltas(model, scheme):
    out = []
    for k, S in enumerate(scheme.users):
        i = np.array([p for p, q in S.rows], dtype=np.int64)
        j = np.array([q for p, q in S.rows], dtype=np.int64)
        out.append(
            delta_records(model.M_star, model.V_star, model.X, i, j, np.full(len(i), k))
        )
    return out


class TestSolveUnquantized:
    def test_minimal_construction_recovery(self):
        rng = np.random.default_rng(0)
        scheme = minimal_multiuser_construction(2, 3)
        for _ in range(10):
            X = gen_items_gaussian(6, 2, rng)
            model = CrowdModel(
                X,
                np.array([[2.0, 0.3], [0.3, 1.0]]),
                rng.standard_normal((2, 3)),
            )
            M, V = solve_unquantized(X, scheme, scheme_deltas(model, scheme))
            truth = np.concatenate([nu(model.M_star), model.V_star.T.ravel()])
            est = np.concatenate([nu(M), V.T.ravel()])
            assert np.linalg.norm(est - truth) <= 1e-8 * np.linalg.norm(truth)

    def test_pathological_example_unidentifiable(self):
        # identity metric, basis items, constant-vector users: every
        # measurement is exactly zero and nothing can be recovered
        d = n = 3
        X = np.eye(d)
        M = 1.7 * np.eye(d)
        U = np.tile(np.array([[0.4], [0.4], [0.4]]), (1, 2))
        model = CrowdModel(X, M, U)
        rng = np.random.default_rng(1)
        scheme = UserScheme(tuple(sample_uniform_pairs(n, 6, rng) for _ in range(2)))
        deltas = scheme_deltas(model, scheme)
        for block in deltas:
            np.testing.assert_allclose(block, 0.0, atol=1e-12)
        with pytest.raises(UnidentifiableError) as exc:
            solve_unquantized(X, scheme, deltas)
        assert exc.value.rank < exc.value.required

    def test_single_user_full_rank_selection(self):
        rng = np.random.default_rng(2)
        d = 2
        D = half_dim(d)
        n = 10
        while True:
            S = sample_uniform_pairs(n, D + d + 2, rng)
            if selection_rank(S) >= D + d:
                break
        scheme = UserScheme((S,))
        X = gen_items_gaussian(n, d, rng)
        model = CrowdModel(X, np.array([[1.0, 0.2], [0.2, 0.5]]), rng.standard_normal((2, 1)))
        M, V = solve_unquantized(X, scheme, scheme_deltas(model, scheme))
        np.testing.assert_allclose(M, model.M_star, atol=1e-9)
        np.testing.assert_allclose(V, model.V_star, atol=1e-9)

    def test_measurement_count_mismatch(self):
        rng = np.random.default_rng(3)
        scheme = minimal_multiuser_construction(2, 3)
        X = gen_items_gaussian(6, 2, rng)
        with pytest.raises(ValueError):
            solve_unquantized(X, scheme, np.zeros(5))


class TestIdealPointRecovery:
    def test_exact_inversion(self):
        U = recover_ideal_points(np.eye(2), np.array([[-2.0], [0.0]]), alpha=0.0)
        np.testing.assert_allclose(U, [[1.0], [0.0]], atol=1e-14)

    def test_regularized_example(self):
        U = recover_ideal_points(np.eye(2), np.array([[-2.0], [0.0]]), alpha=1.0)
        np.testing.assert_allclose(U, [[0.8], [0.0]], atol=1e-14)

    def test_zero_pseudo_points(self):
        U = recover_ideal_points(np.eye(3), np.zeros((3, 2)), alpha=0.0)
        np.testing.assert_allclose(U, 0.0)

    def test_singular_metric_uses_pseudoinverse(self):
        M = np.diag([1.0, 0.0])
        u = np.array([[0.5], [0.7]])
        v = -2 * M @ u
        U = recover_ideal_points(M, v, alpha=0.0)
        np.testing.assert_allclose(U, [[0.5], [0.0]], atol=1e-12)

    def test_default_alpha_is_dimension(self):
        M = np.eye(2)
        v = np.array([[-2.0], [0.0]])
        np.testing.assert_allclose(
            recover_ideal_points(M, v), recover_ideal_points(M, v, alpha=2.0)
        )

    def test_solve_then_recover_full_rank(self):
        rng = np.random.default_rng(4)
        scheme = minimal_multiuser_construction(2, 3)
        X = gen_items_gaussian(6, 2, rng)
        model = CrowdModel(X, np.array([[1.5, 0.2], [0.2, 0.8]]), rng.standard_normal((2, 3)))
        M, V = solve_unquantized(X, scheme, scheme_deltas(model, scheme))
        U = recover_ideal_points(M, V, alpha=0.0)
        assert np.linalg.norm(U - model.U_star) <= 1e-6 * max(1, np.linalg.norm(model.U_star))


class TestRiskAndGradient:
    def _toy(self, seed=5, N=60, beta=2.0):
        rng = np.random.default_rng(seed)
        model = make_crowd_model(3, 8, 2, 3, rng, "full_rank")
        ds = sample_dataset(model, LinkFunction("logistic", beta), N, rng)
        return model, ds, rng

    def test_hinge_satisfied_margin(self):
        model, _, _ = self._toy()
        ds = ResponseDataset(8, 2, [0], [1], [0], [1.0])
        # pick parameters making y*delta large positive
        d01 = delta_records(model.M_star, model.V_star, model.X, ds.i_idx, ds.j_idx, ds.k_idx)[0]
        scale = 2.0 / d01 if d01 != 0 else 1.0
        risk = empirical_risk(scale * model.M_star, scale * model.V_star, ds, model.X, Loss("hinge"))
        if d01 > 0:
            assert risk == 0.0

    def test_logistic_at_zero_margin(self):
        model, _, _ = self._toy()
        ds = ResponseDataset(8, 2, [0, 2], [1, 3], [0, 1], [1.0, -1.0])
        risk = empirical_risk(np.zeros((3, 3)), np.zeros((3, 2)), ds, model.X, Loss("logistic", 1.0))
        assert risk == pytest.approx(np.log(2), rel=1e-12)

    def test_nll_logistic_equals_logistic_loss(self):
        model, ds, rng = self._toy()
        M = model.M_star + 0.1
        M = 0.5 * (M + M.T)
        V = model.V_star + 0.05
        beta = 2.0
        a = empirical_risk(M, V, ds, model.X, Loss("logistic", beta))
        b = empirical_risk(M, V, ds, model.X, Loss("nll", link=LinkFunction("logistic", beta)))
        assert a == pytest.approx(b, rel=1e-12)

    def test_zero_dataset_gradient(self):
        model, _, _ = self._toy()
        empty = ResponseDataset(8, 2, [], [], [], [])
        g_nu, g_V = risk_subgradient(np.eye(3), np.zeros((3, 2)), empty, model.X, Loss("hinge"))
        assert not g_nu.any() and not g_V.any()

    def test_gradient_matches_finite_differences(self):
        model, ds, rng = self._toy(seed=6, N=50)
        losses = [
            Loss("hinge"),
            Loss("logistic", 2.0),
            Loss("nll", link=LinkFunction("logistic", 3.0)),
            Loss("nll", link=LinkFunction("probit")),
        ]
        D = half_dim(3)
        for loss in losses:
            for trial in range(5):
                M = 0.3 * np.eye(3) + 0.1 * trial * np.eye(3)
                V = 0.1 * rng.standard_normal((3, 2))
                g_nu, g_V = risk_subgradient(M, V, ds, model.X, loss)
                theta = np.concatenate([nu(M), V.T.ravel()])
                grad = np.concatenate([g_nu, g_V.T.ravel()])

                def risk_at(th):
                    Mx = nu_inverse(th[:D])
                    Vx = th[D:].reshape(2, 3).T
                    return empirical_risk(Mx, Vx, ds, model.X, loss)

                h = 1e-6
                fd = np.zeros_like(theta)
                for idx in range(theta.size):
                    up = theta.copy()
                    dn = theta.copy()
                    up[idx] += h
                    dn[idx] -= h
                    fd[idx] = (risk_at(up) - risk_at(dn)) / (2 * h)
                scale = max(np.linalg.norm(fd), 1e-12)
                assert np.linalg.norm(fd - grad) / scale <= 1e-5

    def test_hinge_kink_uses_zero_slope_side(self):
        # a record sitting exactly at margin 1 must not contribute slope
        X = np.array([[1.0, 0.0], [0.0, 1.0]])
        ds = ResponseDataset(2, 1, [0], [1], [0], [1.0])
        # delta = x_0'Mx_0 - x_1'Mx_1 + v'(x_0 - x_1); choose M, v for delta=1
        M = np.diag([1.0, 0.0])
        V = np.zeros((2, 1))
        g_nu, g_V = risk_subgradient(M, V, ds, X, Loss("hinge"))
        assert not g_nu.any() and not g_V.any()

    def test_convexity_midpoint(self):
        model, ds, rng = self._toy(seed=7)
        loss = Loss("logistic", 2.0)
        for _ in range(20):
            A1 = rng.standard_normal((3, 3))
            A2 = rng.standard_normal((3, 3))
            M1, M2 = 0.5 * (A1 + A1.T), 0.5 * (A2 + A2.T)
            V1 = rng.standard_normal((3, 2))
            V2 = rng.standard_normal((3, 2))
            mid = empirical_risk(0.5 * (M1 + M2), 0.5 * (V1 + V2), ds, model.X, loss)
            ends = 0.5 * empirical_risk(M1, V1, ds, model.X, loss) + 0.5 * empirical_risk(
                M2, V2, ds, model.X, loss
            )
            assert mid <= ends + 1e-10


class TestConstraintScheme:
    def test_kind_validation(self):
        with pytest.raises(ValueError):
            ConstraintScheme("frobenius")
        with pytest.raises(ValueError):
            ConstraintScheme("frobenius_metric", lambda_F=1.0)  # missing lambda_v

    def test_zero_radius_floored(self):
        s = ConstraintScheme("nuclear_full", lambda_star=0.0)
        assert s.lambda_star == 1e-12

    def test_oracle_frobenius_example(self):
        X = gen_items_gaussian(5, 2, np.random.default_rng(8))
        model = CrowdModel(X, np.eye(2), np.array([[1.0], [0.0]]))
        s = oracle_hyperparameters(model, "frobenius_metric")
        assert s.lambda_F == pytest.approx(np.sqrt(2))
        assert s.lambda_v == pytest.approx(2.0)

    def test_oracle_nuclear_full_dominates_metric(self):
        rng = np.random.default_rng(9)
        model = make_crowd_model(3, 8, 4, 2, rng)
        full = oracle_hyperparameters(model, "nuclear_full")
        metric = oracle_hyperparameters(model, "nuclear_metric")
        assert full.lambda_star >= metric.lambda_star - 1e-12

    def test_oracle_degenerate_pseudo_points(self):
        X = gen_items_gaussian(5, 2, np.random.default_rng(10))
        model = CrowdModel(X, np.eye(2), np.zeros((2, 3)))
        s = oracle_hyperparameters(model, "frobenius_metric")
        assert s.lambda_v == 1e-12


class TestFitERM:
    def _instance(self, seed=11, N=300, beta=4.0):
        rng = np.random.default_rng(seed)
        model = make_crowd_model(4, 30, 5, 1, rng)
        link = LinkFunction("logistic", beta)
        ds = sample_dataset(model, link, N, rng)
        return model, ds, Loss("logistic", beta)

    def test_single_separable_record(self):
        X = gen_items_gaussian(6, 2, np.random.default_rng(12))
        ds = ResponseDataset(6, 1, [0], [1], [0], [1.0])
        fit = fit_erm(ds, X, Loss("hinge"), ConstraintScheme("psd_only"),
                      SolverConfig(step_scale=1.0, max_iters=400))
        assert fit.objective == pytest.approx(0.0, abs=1e-8)

    def test_best_trace_nonincreasing(self):
        model, ds, loss = self._instance()
        scheme = oracle_hyperparameters(model, "frobenius_metric")
        fit = fit_erm(ds, model.X, loss, scheme, SolverConfig(max_iters=300))
        assert np.all(np.diff(fit.trace) <= 0)

    def test_constraints_satisfied(self):
        model, ds, loss = self._instance(seed=13)
        for kind in ("frobenius_metric", "nuclear_full", "nuclear_metric", "nuclear_split", "psd_only"):
            scheme = oracle_hyperparameters(model, kind)
            fit = fit_erm(ds, model.X, loss, scheme, SolverConfig(step_scale=3.0, max_iters=300))
            res = fit.constraint_residuals
            assert res["min_eigenvalue"] >= -1e-10
            for name, val in res.items():
                if name != "min_eigenvalue":
                    assert val <= 1e-6, (kind, name, val)
            if kind == "nuclear_full":
                joint = nuclear_norm(np.hstack([fit.M_hat, fit.V_hat]))
                assert joint <= scheme.lambda_star * (1 + 1e-6)

    def test_oracle_sanity_gap(self):
        # fitted risk within 0.02 of the feasible ground-truth point
        rng = np.random.default_rng(14)
        model = make_crowd_model(5, 60, 10, 1, rng)
        link = LinkFunction("logistic", 4.0)
        loss = Loss("logistic", 4.0)
        ds = sample_dataset(model, link, 2000, rng)
        scheme = oracle_hyperparameters(model, "nuclear_full")
        fit = fit_erm(ds, model.X, loss, scheme, SolverConfig(step_scale=5.0, max_iters=5000))
        truth = empirical_risk(model.M_star, model.V_star, ds, model.X, loss)
        assert fit.objective <= truth + 0.02

    def test_identity_scheme_fixes_metric(self):
        model, ds, loss = self._instance(seed=15)
        scheme = oracle_hyperparameters(model, "identity_metric")
        fit = fit_erm(ds, model.X, loss, scheme, SolverConfig(max_iters=100))
        np.testing.assert_array_equal(fit.M_hat, np.eye(4))

    def test_empty_dataset_rejected(self):
        model, _, loss = self._instance()
        empty = ResponseDataset(30, 5, [], [], [], [])
        with pytest.raises(ValueError):
            fit_erm(empty, model.X, loss, ConstraintScheme("psd_only"))

    def test_dykstra_flag_stays_feasible(self):
        model, ds, loss = self._instance(seed=16, N=150)
        scheme = oracle_hyperparameters(model, "frobenius_metric")
        fit = fit_erm(
            ds, model.X, loss, scheme,
            SolverConfig(step_scale=3.0, max_iters=120, use_dykstra=True, dykstra_iters=30),
        )
        assert fit.constraint_residuals["min_eigenvalue"] >= -1e-10
        assert fit.constraint_residuals["frobenius"] <= 1e-6

    def test_early_stopping(self):
        model, ds, loss = self._instance(seed=17)
        scheme = oracle_hyperparameters(model, "frobenius_metric")
        fit = fit_erm(ds, model.X, loss, scheme, SolverConfig(max_iters=5000, tol_objective=0.05))
        assert fit.iterations < 5000


class TestSingleUser:
    def test_degenerate_crowd_equals_fit_erm(self):
        rng = np.random.default_rng(18)
        model = make_crowd_model(3, 12, 1, 1, rng)
        link = LinkFunction("logistic", 3.0)
        loss = Loss("logistic", 3.0)
        ds = sample_dataset(model, link, 120, rng)
        lam = oracle_single_user_radius(model, 0)
        cfg = SolverConfig(step_scale=2.0, max_iters=200)
        fits = fit_single_user(ds, model.X, loss, [lam], cfg)
        direct = fit_erm(ds, model.X, loss, ConstraintScheme("nuclear_full", lambda_star=lam), cfg)
        np.testing.assert_allclose(fits[0].M_hat, direct.M_hat, atol=1e-12)
        np.testing.assert_allclose(fits[0].V_hat, direct.V_hat, atol=1e-12)

    def test_identical_user_data_identical_fits(self):
        rng = np.random.default_rng(19)
        model = make_crowd_model(2, 8, 2, 1, rng)
        base = sample_dataset(model, LinkFunction("logistic", 2.0), 50, rng)
        # clone user 0's records onto user 1
        ds = ResponseDataset(
            8, 2,
            np.concatenate([base.i_idx, base.i_idx]),
            np.concatenate([base.j_idx, base.j_idx]),
            np.concatenate([np.zeros(len(base), dtype=np.int64), np.ones(len(base), dtype=np.int64)]),
            np.concatenate([base.y, base.y]),
        )
        cfg = SolverConfig(step_scale=2.0, max_iters=150)
        fits = fit_single_user(ds, model.X, Loss("logistic", 2.0), [3.0, 3.0], cfg)
        np.testing.assert_allclose(fits[0].M_hat, fits[1].M_hat, atol=1e-12)
        np.testing.assert_allclose(fits[0].V_hat, fits[1].V_hat, atol=1e-12)

    def test_user_without_records_skipped(self, caplog):
        rng = np.random.default_rng(20)
        model = make_crowd_model(2, 8, 3, 1, rng)
        ds = sample_dataset(model, LinkFunction("logistic", 2.0), 60, rng)
        keep = ds.k_idx != 1
        ds = ds.subset(keep)
        with caplog.at_level(logging.WARNING):
            fits = fit_single_user(ds, model.X, Loss("hinge"), [1.0, 1.0, 1.0],
                                   SolverConfig(max_iters=30))
        assert fits[1] is None
        assert fits[0] is not None and fits[2] is not None
        assert any("no records" in r.message for r in caplog.records)
