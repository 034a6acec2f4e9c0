import numpy as np
import pytest

from dppred.glm import (
    FitConfig,
    GlmModel,
    fit_glm,
    fit_lasso,
    lambda_max,
    linear_loss,
    logistic_loss,
    predict_glm,
    predict_proba,
    sigmoid,
    support,
)


def rng(seed=0):
    return np.random.default_rng(seed)


class TestLosses:
    def test_linear_loss_value(self):
        X = np.array([[1.0], [0.0]])
        f, gw, gb = linear_loss(X, np.array([1.0, 0.0]), np.zeros(1), 0.0)
        assert f == 0.5  # residuals (-1, 0): mean square 0.5

    def test_gradients_match_central_differences(self):
        # 100 random instances for both losses, relative error < 1e-4
        h = 1e-5
        gen = rng(12)
        for trial in range(100):
            n = int(gen.integers(2, 50))
            d = int(gen.integers(1, 10))
            X = gen.random((n, d))
            w = gen.normal(size=d)
            b = float(gen.normal())
            for kind in ("linear", "logistic"):
                if kind == "linear":
                    y = gen.normal(size=n)
                    loss = lambda wv, bv: linear_loss(X, y, wv, bv)[0]
                    _, gw, gb = linear_loss(X, y, w, b)
                else:
                    y = gen.integers(0, 2, size=n).astype(np.float64)
                    loss = lambda wv, bv: logistic_loss(X, y, wv, bv)[0]
                    _, gw, gb = logistic_loss(X, y, w, b)
                num = np.empty(d)
                for j in range(d):
                    e = np.zeros(d)
                    e[j] = h
                    num[j] = (loss(w + e, b) - loss(w - e, b)) / (2 * h)
                num_b = (loss(w, b + h) - loss(w, b - h)) / (2 * h)
                denom = max(np.linalg.norm(np.append(gw, gb)), 1e-8)
                err = np.linalg.norm(np.append(gw - num, gb - num_b)) / denom
                assert err < 1e-4, f"{kind} gradient off by {err} on trial {trial}"


class TestFitGlm:
    def test_separable_single_column(self):
        gen = rng(3)
        col = gen.integers(0, 2, size=200).astype(np.float64)
        X = col.reshape(-1, 1)
        y = col.astype(np.int64)
        m = fit_glm(X, y, "logistic")
        assert m.weights[0] > 0
        preds = [predict_glm(m, X[i]) for i in range(200)]
        assert np.mean(np.array(preds) == y) == 1.0

    def test_linear_constant_column_reproduces_mean(self):
        y = np.array([1.0, 2.0, 3.0, 6.0])
        X = np.ones((4, 1))
        m = fit_glm(X, y, "linear")
        assert abs((m.weights[0] + m.intercept) - y.mean()) < 1e-6
        f, _, _ = linear_loss(X, y, m.weights, m.intercept)
        assert abs(f - y.var()) < 1e-8

    def test_constant_labels_linear(self):
        X = rng(1).random((30, 4))
        m = fit_glm(X, np.full(30, 2.5), "linear")
        assert np.allclose(m.weights, 0.0)
        assert abs(m.intercept - 2.5) < 1e-12

    def test_single_class_logistic_rejected(self):
        X = rng(1).random((10, 2))
        with pytest.raises(ValueError, match="distinct"):
            fit_glm(X, np.zeros(10, dtype=int), "logistic")

    def test_objective_trace_non_increasing(self):
        gen = rng(7)
        X = gen.integers(0, 2, size=(120, 6)).astype(np.float64)
        y = (X[:, 0] + gen.random(120) > 0.8).astype(np.int64)
        for task, labels in (("logistic", y), ("linear", y.astype(float))):
            m = fit_glm(X, labels, task)
            diffs = np.diff(m.objective_trace)
            assert np.all(diffs <= 1e-12)

    def test_fixed_step_divergence_raises(self):
        X = rng(1).random((20, 3)) * 10
        y = rng(2).normal(size=20) * 10
        cfg = FitConfig(step_policy="fixed", step_size=10.0, max_iterations=500)
        with np.errstate(over="ignore", invalid="ignore"):
            with pytest.raises(ValueError, match="non-finite"):
                fit_glm(X, y, "linear", cfg)

    def test_multiclass_one_vs_rest(self):
        gen = rng(5)
        y = gen.integers(0, 3, size=150)
        X = np.column_stack([(y == c).astype(float) for c in range(3)])
        m = fit_glm(X, y, "logistic")
        assert m.classes == 3
        assert m.weights.shape == (3, 3)
        preds = [predict_glm(m, X[i]) for i in range(150)]
        assert np.mean(np.array(preds) == y) == 1.0


class TestPredict:
    def test_zero_model_linear(self):
        m = GlmModel(weights=np.zeros(2), intercept=0.0, task="linear")
        assert predict_glm(m, np.array([1.0, 1.0])) == 0.0

    def test_zero_logistic_ties_to_class_zero(self):
        m = GlmModel(weights=np.zeros(2), intercept=0.0, task="logistic", classes=2)
        assert predict_proba(m, np.array([1.0, 0.0])).tolist() == [0.5, 0.5]
        assert predict_glm(m, np.array([1.0, 0.0])) == 0

    def test_dot_product(self):
        m = GlmModel(weights=np.array([2.0, -1.0]), intercept=0.0, task="linear")
        assert predict_glm(m, np.array([1.0, 1.0])) == 1.0

    def test_dimension_mismatch(self):
        m = GlmModel(weights=np.zeros(2), intercept=0.0, task="linear")
        with pytest.raises(ValueError):
            predict_glm(m, np.zeros(3))

    def test_probabilities_sum_to_one_binary(self):
        gen = rng(9)
        m = GlmModel(weights=gen.normal(size=4), intercept=0.3, task="logistic", classes=2)
        for _ in range(25):
            p = predict_proba(m, gen.integers(0, 2, size=4).astype(float))
            assert abs(p.sum() - 1.0) < 1e-12
            assert np.all((p > 0) & (p < 1))


class TestLambdaMax:
    def test_constant_labels_linear(self):
        X = rng(0).integers(0, 2, size=(40, 5)).astype(np.float64)
        assert lambda_max(X, np.full(40, 1.3), "linear") == 0.0

    def test_hand_computed_aligned_column(self):
        # y = (+1,-1,+1,-1) centered; x = indicator of the positives;
        # gradient at zero weights is 2/n * x_c'(mean-y) with magnitude 1
        X = np.array([[1.0], [0.0], [1.0], [0.0]])
        y = np.array([1.0, -1.0, 1.0, -1.0])
        assert abs(lambda_max(X, y, "linear") - 1.0) < 1e-12

    def test_zero_fixpoint_above_lambda_max(self):
        gen = rng(4)
        for trial in range(8):
            X = gen.integers(0, 2, size=(60, 12)).astype(np.float64)
            task = "linear" if trial % 2 else "logistic"
            if task == "linear":
                y = gen.normal(size=60)
            else:
                y = gen.integers(0, 2, size=60)
            lm = lambda_max(X, y, task)
            if lm == 0.0:
                continue
            m = fit_lasso(X, y, 1.01 * lm, task)
            assert np.all(np.atleast_2d(m.weights) == 0.0), f"trial {trial} ({task})"


class TestFitLasso:
    def test_zero_penalty_matches_unpenalized_objective(self):
        gen = rng(11)
        X = gen.integers(0, 2, size=(80, 5)).astype(np.float64)
        y = (X[:, 0] * 2 + gen.normal(size=80) * 0.1)
        plain = fit_glm(X, y, "linear")
        lasso = fit_lasso(X, y, 0.0, "linear")
        f_plain, _, _ = linear_loss(X, y, plain.weights, plain.intercept)
        f_lasso, _, _ = linear_loss(X, y, lasso.weights, lasso.intercept)
        assert abs(f_plain - f_lasso) < 1e-5

    def test_zero_penalty_matches_unpenalized_logistic(self):
        gen = rng(13)
        X = gen.integers(0, 2, size=(100, 4)).astype(np.float64)
        y = ((X[:, 0] + X[:, 1] + gen.random(100)) > 1.4).astype(np.int64)
        cfg = FitConfig(tolerance=1e-12, max_iterations=50_000)
        plain = fit_glm(X, y, "logistic", cfg)
        lasso = fit_lasso(X, y, 0.0, "logistic", cfg)
        f_plain, _, _ = logistic_loss(X, y.astype(float), plain.weights, plain.intercept)
        f_lasso, _, _ = logistic_loss(X, y.astype(float), lasso.weights, lasso.intercept)
        assert abs(f_plain - f_lasso) < 1e-5

    def test_support_shrinks_with_penalty(self):
        gen = rng(17)
        X = gen.integers(0, 2, size=(150, 20)).astype(np.float64)
        w_true = np.zeros(20)
        w_true[:4] = [3.0, -2.0, 1.5, 1.0]
        y = X @ w_true + gen.normal(size=150) * 0.05
        lm = lambda_max(X, y, "linear")
        sizes = []
        for frac in [1.2, 0.5, 0.2, 0.05, 0.01]:
            m = fit_lasso(X, y, lm * frac, "linear")
            sizes.append(len(support(m)))
        assert sizes[0] == 0
        assert all(a <= b for a, b in zip(sizes, sizes[1:]))

    def test_exact_zeros_not_epsilon_small(self):
        gen = rng(19)
        X = gen.integers(0, 2, size=(60, 8)).astype(np.float64)
        y = X[:, 0] + gen.normal(size=60) * 0.01
        m = fit_lasso(X, y, 0.5 * lambda_max(X, y, "linear"), "linear")
        off = np.atleast_1d(m.weights)[np.atleast_1d(m.weights) != 0.0]
        zeros = np.atleast_1d(m.weights)[np.atleast_1d(m.weights) == 0.0]
        assert len(zeros) > 0 and len(off) > 0

    def test_negative_penalty_rejected(self):
        with pytest.raises(ValueError):
            fit_lasso(np.ones((4, 1)), np.zeros(4), -0.1, "linear")


class TestSupportMonotonicityProperty:
    def test_decreasing_grid_mostly_non_decreasing_support(self):
        # over a decreasing penalty grid, support sizes should be
        # non-decreasing in at least 95% of adjacent pairs
        gen = rng(23)
        good = total = 0
        for trial in range(20):
            n = int(gen.integers(40, 120))
            d = int(gen.integers(5, 25))
            X = gen.integers(0, 2, size=(n, d)).astype(np.float64)
            task = "linear" if trial % 2 == 0 else "logistic"
            w_true = np.zeros(d)
            nz = gen.choice(d, size=min(4, d), replace=False)
            w_true[nz] = gen.normal(size=len(nz)) * 2
            if task == "linear":
                y = X @ w_true + gen.normal(size=n) * 0.1
            else:
                y = (sigmoid(X @ w_true - w_true.sum() / 2 + gen.normal(size=n) * 0.3) > 0.5
                     ).astype(np.int64)
                if len(np.unique(y)) < 2:
                    continue
            lm = lambda_max(X, y, task)
            if lm <= 0:
                continue
            grid = lm * np.array([0.9, 0.7, 0.5, 0.35, 0.25, 0.15, 0.1, 0.05, 0.02, 0.01])
            sizes = [len(support(fit_lasso(X, y, lam, task))) for lam in grid]
            for a, b in zip(sizes, sizes[1:]):
                total += 1
                good += a <= b
        assert total > 0
        assert good / total >= 0.95, f"monotone fraction {good}/{total}"
