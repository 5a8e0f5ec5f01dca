import numpy as np
import pytest
import scipy.stats

from confbands.regression import (
    FormulaError,
    Table,
    Term,
    build_design,
    fit_logistic,
    fit_ols,
    parse_formula,
    predict_mean,
    scb_coef_bootstrap,
    scb_mean_bootstrap,
)


def expit(x):
    return 1.0 / (1.0 + np.exp(-x))


class TestParseFormula:
    def test_powers(self):
        spec = parse_formula("y ~ x1 + I(x1^2) + I(x1^3)")
        assert spec.response == "y"
        assert spec.terms == (
            Term("main", "x1"),
            Term("power", "x1", 2),
            Term("power", "x1", 3),
        )

    def test_dot(self):
        spec = parse_formula("y ~ .")
        assert spec.terms == (Term("all"),)

    def test_double_tilde_rejected(self):
        with pytest.raises(FormulaError):
            parse_formula("y ~~ x")

    def test_whitespace_insensitive(self):
        assert parse_formula(" y~x1+ I( x1 ^ 2 ) ") == parse_formula("y ~ x1 + I(x1^2)")

    def test_duplicate_terms_rejected(self):
        with pytest.raises(FormulaError, match="duplicate"):
            parse_formula("y ~ x1 + x1")

    def test_response_as_predictor_rejected(self):
        with pytest.raises(FormulaError, match="response"):
            parse_formula("y ~ y")

    def test_power_must_be_at_least_two(self):
        with pytest.raises(FormulaError, match="power"):
            parse_formula("y ~ I(x^1)")

    def test_error_carries_position(self):
        with pytest.raises(FormulaError, match="position"):
            parse_formula("y ~ x +")

    def test_names_starting_with_I(self):
        spec = parse_formula("y ~ Iks")
        assert spec.terms == (Term("main", "Iks"),)

    def test_dot_expands_in_table_order(self, rng):
        t = Table.from_arrays(
            b=rng.standard_normal(20), y=rng.standard_normal(20), a=rng.standard_normal(20)
        )
        _, names, _ = build_design(t, parse_formula("y ~ ."))
        assert names == ["intercept", "b", "a"]


class TestFitOls:
    def test_exact_recovery(self, rng):
        x = rng.standard_normal(30)
        t = Table.from_arrays(x=x, y=2.0 + 3.0 * x)
        fit = fit_ols(t, parse_formula("y ~ x"))
        np.testing.assert_allclose(fit.beta, [2.0, 3.0], atol=1e-10)
        assert fit.sigma2 == pytest.approx(0.0, abs=1e-16)

    def test_intercept_only_is_mean(self, rng):
        y = rng.standard_normal(25)
        t = Table.from_arrays(z=np.zeros(25), y=y)
        # intercept-only via a formula with one constant-free predictor is not
        # expressible; fit y ~ z with z == 0 is rank deficient, so use the
        # design directly: mean recovery through a trivial regression
        t2 = Table.from_arrays(x=rng.standard_normal(25), y=y)
        fit = fit_ols(t2, parse_formula("y ~ x"))
        ybar_model = fit.beta[0] + fit.beta[1] * t2.column("x").mean()
        assert ybar_model == pytest.approx(y.mean())

    def test_matches_pinv_oracle(self, rng):
        X = rng.standard_normal((50, 3))
        y = rng.standard_normal(50)
        t = Table.from_arrays(a=X[:, 0], b=X[:, 1], c=X[:, 2], y=y)
        fit = fit_ols(t, parse_formula("y ~ a + b + c"))
        Xd = np.column_stack([np.ones(50), X])
        beta_oracle = np.linalg.pinv(Xd) @ y
        np.testing.assert_allclose(fit.beta, beta_oracle, atol=1e-8)

    def test_orthogonality_invariant(self, rng):
        X = rng.standard_normal((60, 4))
        y = rng.standard_normal(60)
        t = Table.from_arrays(**{f"x{i}": X[:, i] for i in range(4)}, y=y)
        fit = fit_ols(t, parse_formula("y ~ x0 + x1 + x2 + x3"))
        Xd, _, _ = build_design(t, fit.spec)
        resid = y - Xd @ fit.beta
        scale = max(np.abs(Xd.T @ y).max(), 1.0)
        assert np.abs(Xd.T @ resid).max() < 1e-8 * scale

    def test_rank_deficiency_names_columns(self, rng):
        x = rng.standard_normal(30)
        t = Table.from_arrays(x=x, xx=2 * x, y=rng.standard_normal(30))
        with pytest.raises(ValueError, match="collinear"):
            fit_ols(t, parse_formula("y ~ x + xx"))

    def test_needs_enough_rows(self, rng):
        t = Table.from_arrays(x=rng.standard_normal(2), y=rng.standard_normal(2))
        with pytest.raises(ValueError, match="rows"):
            fit_ols(t, parse_formula("y ~ x"))


class TestFitLogistic:
    def test_balanced_intercept_zero(self, rng):
        y = np.array([0.0, 1.0] * 20)
        t = Table.from_arrays(x=rng.standard_normal(40), y=y)
        fit = fit_logistic(t, parse_formula("y ~ x"))
        # covariate is noise; intercept should be near logit(0.5) = 0
        assert abs(fit.beta[0]) < 0.8

    def test_intercept_recovers_logit_rate(self):
        # symmetric x design with success rate exactly 0.73: the MLE slope is
        # 0 by symmetry and the intercept is logit(0.73)
        y = np.concatenate([np.ones(146), np.zeros(54)])
        x = np.concatenate([np.tile([1.0, -1.0], 73), np.tile([1.0, -1.0], 27)])
        fit = fit_logistic(Table.from_arrays(x=x, y=y), parse_formula("y ~ x"))
        assert fit.beta[0] == pytest.approx(np.log(0.73 / 0.27), abs=1e-8)
        assert fit.beta[1] == pytest.approx(0.0, abs=1e-8)

    def test_score_condition_at_convergence(self, rng):
        x = rng.standard_normal(80)
        p = expit(0.3 - 0.7 * x)
        y = (rng.random(80) < p).astype(float)
        t = Table.from_arrays(x=x, y=y)
        fit = fit_logistic(t, parse_formula("y ~ x"))
        X, _, yv = build_design(t, fit.spec)
        score = X.T @ (yv - expit(X @ fit.beta))
        assert np.abs(score).max() < 1e-8

    def test_response_must_be_binary(self, rng):
        t = Table.from_arrays(x=rng.standard_normal(20), y=rng.standard_normal(20))
        with pytest.raises(ValueError, match="values in"):
            fit_logistic(t, parse_formula("y ~ x"))

    def test_separation_detected(self):
        # perfectly separated with a razor-thin margin, so the coefficient
        # diverges past the monitor before the score can converge
        x = np.concatenate([np.linspace(-2, -0.001, 20), np.linspace(0.001, 2, 20)])
        y = (x > 0).astype(float)
        with pytest.raises(ValueError, match="quasi-separation|IRLS failed"):
            fit_logistic(Table.from_arrays(x=x, y=y), parse_formula("y ~ x"))


class TestPredictMean:
    def test_saturated_noiseless(self, rng):
        x = np.array([0.0, 1.0, 2.0, 3.0, 4.0])
        y = 1.0 - 2.0 * x
        t = Table.from_arrays(x=x, y=y)
        fit = fit_ols(t, parse_formula("y ~ x"))
        eta, _ = predict_mean(fit, Table.from_arrays(x=x))
        np.testing.assert_allclose(eta, y, atol=1e-10)

    def test_intercept_only_se(self, rng):
        # a zero-coefficient covariate leaves the intercept SE near
        # sqrt(sigma2/n) at the covariate mean
        n = 200
        x = rng.standard_normal(n)
        y = 5.0 + rng.standard_normal(n)
        fit = fit_ols(Table.from_arrays(x=x, y=y), parse_formula("y ~ x"))
        _, se = predict_mean(fit, Table.from_arrays(x=np.array([x.mean()])))
        assert se[0] == pytest.approx(np.sqrt(fit.sigma2 / n), rel=1e-10)

    def test_matrix_product_oracle(self, rng):
        X = rng.standard_normal((40, 2))
        y = rng.standard_normal(40)
        t = Table.from_arrays(a=X[:, 0], b=X[:, 1], y=y)
        fit = fit_ols(t, parse_formula("y ~ a + b"))
        grid = Table.from_arrays(a=rng.standard_normal(7), b=rng.standard_normal(7))
        eta, se = predict_mean(fit, grid)
        G = np.column_stack([np.ones(7), grid.column("a"), grid.column("b")])
        np.testing.assert_allclose(eta, G @ fit.beta, atol=1e-12)
        np.testing.assert_allclose(
            se, np.sqrt(np.diag(G @ fit.cov_beta @ G.T)), atol=1e-12
        )

    def test_missing_columns_error(self, rng):
        t = Table.from_arrays(x=rng.standard_normal(20), y=rng.standard_normal(20))
        fit = fit_ols(t, parse_formula("y ~ x"))
        with pytest.raises(ValueError, match="missing columns"):
            predict_mean(fit, Table.from_arrays(z=np.zeros(3)))


class TestMeanBootstrap:
    def test_zero_noise_degenerate(self, rng):
        x = rng.standard_normal(40)
        t = Table.from_arrays(x=x, y=1.0 + 2.0 * x)
        grid = Table.from_arrays(x=np.linspace(-1, 1, 11))
        with pytest.warns(UserWarning, match="degenerate"):
            band = scb_mean_bootstrap(t, parse_formula("y ~ x"), grid, n_boot=100, seed=0)
        np.testing.assert_allclose(band.scb_low, band.scb_up, atol=1e-10)

    def test_seed_determinism(self, rng):
        x = rng.standard_normal(60)
        y = x + rng.standard_normal(60)
        t = Table.from_arrays(x=x, y=y)
        grid = Table.from_arrays(x=np.linspace(-2, 2, 15))
        b1 = scb_mean_bootstrap(t, parse_formula("y ~ x"), grid, n_boot=150, seed=9)
        b2 = scb_mean_bootstrap(t, parse_formula("y ~ x"), grid, n_boot=150, seed=9)
        assert np.array_equal(b1.scb_low, b2.scb_low)
        assert b1.q_alpha == b2.q_alpha

    def test_simultaneous_contains_pointwise(self, rng):
        x = rng.standard_normal(80)
        y = 1 + x - 0.5 * x**2 + rng.standard_normal(80)
        t = Table.from_arrays(x=x, y=y)
        grid = Table.from_arrays(x=np.linspace(-2, 2, 40))
        band = scb_mean_bootstrap(
            t, parse_formula("y ~ x + I(x^2)"), grid, n_boot=400, alpha=0.05, seed=3
        )
        z = scipy.stats.norm.ppf(0.975)
        assert band.q_alpha >= z

    def test_logistic_band_is_expit_image(self, rng):
        x = rng.standard_normal(90)
        p = expit(0.5 * x)
        y = (rng.random(90) < p).astype(float)
        t = Table.from_arrays(x=x, y=y)
        grid = Table.from_arrays(x=np.linspace(-1.5, 1.5, 21))
        band = scb_mean_bootstrap(
            t, parse_formula("y ~ x"), grid, family="binomial", n_boot=200, seed=4
        )
        assert band.link == "logit"
        assert np.all(band.scb_low > 0) and np.all(band.scb_up < 1)
        assert np.all(band.scb_low <= band.eta_hat) and np.all(band.eta_hat <= band.scb_up)
        # monotone transform preserves ordering: width shrinks toward 0/1
        assert np.all(band.scb_low < band.scb_up)

    def test_grid_boot_used_for_max(self, rng):
        x = rng.standard_normal(70)
        y = x + rng.standard_normal(70)
        t = Table.from_arrays(x=x, y=y)
        grid = Table.from_arrays(x=np.linspace(-1, 1, 5))
        wide = Table.from_arrays(x=np.linspace(-3, 3, 25))
        b_default = scb_mean_bootstrap(t, parse_formula("y ~ x"), grid, n_boot=200, seed=5)
        b_wide = scb_mean_bootstrap(
            t, parse_formula("y ~ x"), grid, n_boot=200, grid_boot=wide, seed=5
        )
        # maximizing over a wider grid cannot shrink the critical value
        assert b_wide.q_alpha >= b_default.q_alpha

    def test_min_boot_enforced(self, rng):
        t = Table.from_arrays(x=rng.standard_normal(30), y=rng.standard_normal(30))
        with pytest.raises(ValueError, match="n_boot"):
            scb_mean_bootstrap(t, parse_formula("y ~ x"), Table.from_arrays(x=np.zeros(1)), n_boot=10)


class TestCoefBootstrap:
    def test_domain_labels(self, rng):
        x = rng.standard_normal(50)
        t = Table.from_arrays(x=x, y=x + rng.standard_normal(50))
        band = scb_coef_bootstrap(t, parse_formula("y ~ x"), n_boot=150, seed=1)
        assert band.domain.labels == ("intercept", "x")

    def test_width_is_2_a_se(self, rng):
        x = rng.standard_normal(50)
        t = Table.from_arrays(x=x, y=x + rng.standard_normal(50))
        band = scb_coef_bootstrap(t, parse_formula("y ~ x"), n_boot=150, seed=1)
        np.testing.assert_allclose(
            band.scb_up - band.scb_low, 2 * band.q_alpha * band.se
        )

    def test_column_permutation_equivariance(self, rng):
        X = rng.standard_normal((60, 3))
        y = X @ np.array([1.0, -1.0, 0.5]) + rng.standard_normal(60)
        t1 = Table.from_arrays(a=X[:, 0], b=X[:, 1], c=X[:, 2], y=y)
        t2 = Table.from_arrays(c=X[:, 2], a=X[:, 0], b=X[:, 1], y=y)
        b1 = scb_coef_bootstrap(t1, parse_formula("y ~ a + b + c"), n_boot=150, seed=2)
        b2 = scb_coef_bootstrap(t2, parse_formula("y ~ a + b + c"), n_boot=150, seed=2)
        # same term order in the formula: identical bands regardless of table order
        np.testing.assert_array_equal(b1.scb_low, b2.scb_low)
        # permuted formula order permutes rows identically
        b3 = scb_coef_bootstrap(t1, parse_formula("y ~ c + a + b"), n_boot=150, seed=2)
        order = [b3.domain.labels.index(lbl) for lbl in b1.domain.labels]
        np.testing.assert_allclose(np.asarray(b3.eta_hat)[order], b1.eta_hat)

    def test_logistic_coefs_stay_log_odds(self, rng):
        x = rng.standard_normal(120)
        y = (rng.random(120) < expit(2.0 + x)).astype(float)
        t = Table.from_arrays(x=x, y=y)
        band = scb_coef_bootstrap(t, parse_formula("y ~ x"), family="binomial",
                                  n_boot=150, seed=3)
        assert band.link == "identity"
        assert band.scb_up.max() > 1.0  # log-odds scale, not probabilities


class TestTable:
    def test_csv_round_trip(self, tmp_path, rng):
        path = tmp_path / "t.csv"
        path.write_text("x,y\n1.0,2.0\n3.0,4.0\n")
        t = Table.from_csv(path)
        assert t.names == ("x", "y")
        assert t.n_rows == 2
        np.testing.assert_array_equal(t.column("y"), [2.0, 4.0])

    def test_unique_names(self):
        with pytest.raises(ValueError, match="unique"):
            Table(("a", "a"), {"a": [1.0]})

    def test_non_finite_modeled_columns_rejected(self):
        t = Table.from_arrays(x=np.array([1.0, np.nan]), y=np.array([0.0, 1.0]))
        with pytest.raises(ValueError, match="non-finite"):
            build_design(t, parse_formula("y ~ x"))


class TestBootstrapRedraw:
    def test_redraw_prone_design_still_deterministic(self, rng):
        # a covariate with two nonzero entries: many resamples are rank
        # deficient and must be redrawn
        n = 25
        x = rng.standard_normal(n)
        z = np.zeros(n)
        z[3], z[17] = 1.0, -1.0
        y = x + z + rng.standard_normal(n)
        t = Table.from_arrays(x=x, z=z, y=y)
        grid = Table.from_arrays(x=np.linspace(-1, 1, 5), z=np.zeros(5))
        b1 = scb_mean_bootstrap(t, parse_formula("y ~ x + z"), grid, n_boot=120, seed=6)
        b2 = scb_mean_bootstrap(t, parse_formula("y ~ x + z"), grid, n_boot=120, seed=6)
        assert b1.q_alpha == b2.q_alpha
        assert np.isfinite(b1.q_alpha)
