import numpy as np
import pytest

from postscore.errors import SingularSystemError
from postscore.model import (
    LinearModel,
    TrainingMeta,
    TrainingSet,
    fit,
    loo_user_cv,
    posts_curve,
    predict_post,
    predict_user,
    score_tokenized_posts,
    _eligible_users,
)

from oracles import gd_fit


def _ts(X, y, groups):
    return TrainingSet(X=np.asarray(X, float), y=np.asarray(y, float), groups=np.asarray(groups))


def _random_grouped(seed, n_users, posts_per_user, d, noise=5.0, y_scale=30.0, y_offset=500.0):
    rng = np.random.default_rng(seed)
    n = n_users * posts_per_user
    X = rng.standard_normal((n, d))
    beta = rng.standard_normal(d)
    users = np.repeat([f"u{i:04d}" for i in range(n_users)], posts_per_user)
    y = y_offset + y_scale * (X @ beta) + noise * rng.standard_normal(n)
    return _ts(X, y, users)


class TestFit:
    def test_exact_line(self):
        ts = _ts([[1.0], [2.0], [3.0]], [3.0, 5.0, 7.0], ["a", "b", "c"])
        model = fit(ts)
        assert model.weights[0] == pytest.approx(2.0, abs=1e-12)
        assert model.bias == pytest.approx(1.0, abs=1e-12)

    def test_constant_targets(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((20, 3))
        ts = _ts(X, np.full(20, 7.5), ["u%d" % i for i in range(20)])
        for lam in (0.0, 1.0, 100.0):
            model = fit(ts, lam=lam)
            assert model.weights == pytest.approx(np.zeros(3), abs=1e-9)
            assert model.bias == pytest.approx(7.5, abs=1e-9)

    def test_matches_gradient_descent_oracle(self):
        """Closed-form solution vs long-run GD on the same loss (5 instances)."""
        for seed in range(5):
            ts = _random_grouped(seed, n_users=10, posts_per_user=5, d=5)
            model = fit(ts)
            w_ref, b_ref = gd_fit(ts.X, ts.y, lam=0.0, tol=1e-10)
            assert model.weights == pytest.approx(w_ref, abs=1e-6)
            assert model.bias == pytest.approx(b_ref, abs=1e-6)

    def test_ridge_matches_gradient_descent_oracle(self):
        ts = _random_grouped(7, n_users=8, posts_per_user=5, d=4)
        lam = 3.5
        model = fit(ts, lam=lam)
        w_ref, b_ref = gd_fit(ts.X, ts.y, lam=lam, tol=1e-10)
        assert model.weights == pytest.approx(w_ref, abs=1e-6)
        assert model.bias == pytest.approx(b_ref, abs=1e-6)

    def test_underdetermined_needs_ridge(self):
        ts = _ts(np.eye(3), [1.0, 2.0, 3.0], ["a", "b", "c"])  # n = d < d+1
        with pytest.raises(SingularSystemError, match="lambda"):
            fit(ts, lam=0.0)
        fit(ts, lam=0.1)  # regularized solve goes through

    def test_duplicate_column_singular(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((30, 1))
        X = np.hstack([x, x])
        ts = _ts(X, x[:, 0] * 2, ["u%d" % i for i in range(30)])
        with pytest.warns(RuntimeWarning, match="condition"):
            with pytest.raises(SingularSystemError):
                fit(ts, lam=0.0)

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError, match="non-finite"):
            _ts([[np.nan]], [1.0], ["a"])

    def test_target_shift_equivariance(self):
        ts = _random_grouped(2, n_users=10, posts_per_user=4, d=6)
        m0 = fit(ts)
        shifted = _ts(ts.X, ts.y + 123.25, ts.groups)
        m1 = fit(shifted)
        assert m1.weights == pytest.approx(m0.weights, abs=1e-8)
        assert m1.bias - m0.bias == pytest.approx(123.25, abs=1e-8)

    def test_fit_is_a_loss_minimum(self):
        """Perturbing the solution along random directions never improves it."""
        ts = _random_grouped(3, n_users=12, posts_per_user=4, d=8)
        lam = 0.5
        model = fit(ts, lam=lam)

        def loss(w, b):
            resid = ts.X @ w + b - ts.y
            return float(resid @ resid + lam * (w @ w))

        base = loss(model.weights, model.bias)
        rng = np.random.default_rng(4)
        for _ in range(20):
            dw = rng.standard_normal(ts.d)
            db = float(rng.standard_normal())
            scale = 1e-3 / np.sqrt(dw @ dw + db * db)
            assert loss(model.weights + scale * dw, model.bias + scale * db) >= base

    def test_training_meta(self):
        ts = _random_grouped(5, n_users=6, posts_per_user=3, d=2)
        model = fit(ts, embedding_fingerprint="abc123")
        meta = model.training_meta
        assert meta.n_posts == 18
        assert meta.n_users == 6
        assert meta.target_mean == pytest.approx(float(ts.y.mean()))
        assert meta.embedding_fingerprint == "abc123"


class TestPredict:
    def _model(self, w, b):
        meta = TrainingMeta(n_posts=1, n_users=1, target_mean=500.0, target_sd=1.0)
        w = np.asarray(w, dtype=np.float64)
        return LinearModel(weights=w, bias=b, lam=0.0, d=w.size, training_meta=meta)

    def test_dot_plus_bias(self):
        model = self._model([1.0, 1.0], 0.0)
        assert predict_post(model, [0.5, 0.5]) == pytest.approx(1.0)

    def test_zero_vector_gives_bias(self):
        model = self._model([2.0, -1.0], 3.25)
        assert predict_post(model, [0.0, 0.0]) == 3.25

    def test_dimension_mismatch(self):
        model = self._model([1.0, 2.0], 0.0)
        with pytest.raises(ValueError, match="dimension"):
            predict_post(model, [1.0, 2.0, 3.0])

    def test_affine_interpolation_identity(self):
        rng = np.random.default_rng(6)
        model = self._model(rng.standard_normal(4), 1.5)
        x, z = rng.standard_normal(4), rng.standard_normal(4)
        alpha = 0.3
        blended = predict_post(model, alpha * x + (1 - alpha) * z)
        mixed = alpha * predict_post(model, x) + (1 - alpha) * predict_post(model, z)
        assert blended == pytest.approx(mixed, abs=1e-12)

    def test_user_mean(self):
        model = self._model([1.0], 0.0)
        up = predict_user(model, [[480.0], [520.0]], "u")
        assert up.predicted == pytest.approx(500.0)
        assert up.n_posts_used == 2

    def test_user_single_post(self):
        model = self._model([1.0], 0.0)
        assert predict_user(model, [[13.0]], "u").predicted == pytest.approx(13.0)

    def test_user_no_posts_falls_back_to_target_mean(self):
        model = self._model([1.0], 0.0)
        up = predict_user(model, np.empty((0, 1)), "u")
        assert up.predicted == 500.0
        assert up.n_posts_used == 0

    def test_user_prediction_equals_prediction_of_mean_vector(self):
        rng = np.random.default_rng(7)
        model = self._model(rng.standard_normal(5), -2.0)
        X = rng.standard_normal((9, 5))
        up = predict_user(model, X, "u")
        assert up.predicted == pytest.approx(predict_post(model, X.mean(axis=0)), abs=1e-9)


class TestLooUserCV:
    def test_two_user_exclusion_is_exact(self):
        # user B's posts lie exactly on y = 2x; user A's on y = 2x + 8.
        # Leaving A out fits B's line, so A's held-out predictions are 2 and 4
        # (mean 3) no matter what A's own targets said.
        ts = _ts(
            [[1.0], [2.0], [0.0], [1.0], [2.0]],
            [10.0, 12.0, 0.0, 2.0, 4.0],
            ["A", "A", "B", "B", "B"],
        )
        preds = {p.user_id: p for p in loo_user_cv(ts)}
        assert preds["A"].predicted == pytest.approx(3.0, abs=1e-9)
        assert preds["A"].n_posts_used == 2
        # and B's held-out prediction comes from A's line: mean(2x+8) over x=0,1,2
        assert preds["B"].predicted == pytest.approx((8.0 + 10.0 + 12.0) / 3, abs=1e-9)

    def test_matches_naive_retraining(self):
        """Downdated per-user systems vs from-scratch refits, 200x10."""
        ts = _random_grouped(8, n_users=20, posts_per_user=10, d=10)
        fast = {p.user_id: p.predicted for p in loo_user_cv(ts)}
        for u in sorted(set(ts.groups.tolist())):
            keep = ts.groups != u
            model = fit(_ts(ts.X[keep], ts.y[keep], ts.groups[keep]))
            held = ts.X[~keep]
            naive = float((held @ model.weights + model.bias).mean())
            assert abs(naive - fast[u]) < 1e-8

    def test_matches_naive_retraining_with_ridge(self):
        ts = _random_grouped(9, n_users=12, posts_per_user=6, d=8)
        lam = 2.0
        fast = {p.user_id: p.predicted for p in loo_user_cv(ts, lam=lam)}
        for u in sorted(set(ts.groups.tolist())):
            keep = ts.groups != u
            model = fit(_ts(ts.X[keep], ts.y[keep], ts.groups[keep]), lam=lam)
            naive = float((ts.X[~keep] @ model.weights + model.bias).mean())
            assert abs(naive - fast[u]) < 1e-8

    def test_own_rows_leave_prediction_bit_identical(self):
        """A user's held-out prediction cannot depend on their training rows."""
        ts = _random_grouped(10, n_users=8, posts_per_user=5, d=4)
        base = {p.user_id: p.predicted for p in loo_user_cv(ts)}
        users = sorted(set(ts.groups.tolist()))
        for u in users[:3]:
            mine = ts.groups == u
            y2 = ts.y.copy()
            y2[mine] = 0.0  # zero the target; features stay (they are the
            # predict-time input), the training side must not see them
            X2 = ts.X.copy()
            mutated = _ts(X2, y2, ts.groups)
            pred = {p.user_id: p.predicted for p in loo_user_cv(mutated)}
            assert pred[u] == base[u]

    def test_zeroing_rows_entirely_leaves_held_out_model_untouched(self):
        """Zeroing user u's X and y rows changes only what u's held-out model
        is *applied to* (now the zero vector), never the model itself: u's
        prediction becomes exactly the bias of the refit-without-u model."""
        ts = _random_grouped(11, n_users=6, posts_per_user=4, d=3)
        u = sorted(set(ts.groups.tolist()))[2]
        mine = ts.groups == u
        X2, y2 = ts.X.copy(), ts.y.copy()
        X2[mine] = 0.0
        y2[mine] = 0.0
        pred = {p.user_id: p.predicted for p in loo_user_cv(_ts(X2, y2, ts.groups))}
        keep = ~mine
        ref_model = fit(_ts(ts.X[keep], ts.y[keep], ts.groups[keep]))
        assert pred[u] == pytest.approx(ref_model.bias, abs=1e-9)

    def test_requires_two_users(self):
        ts = _ts([[1.0], [2.0]], [1.0, 2.0], ["A", "A"])
        with pytest.raises(ValueError, match="2 users"):
            loo_user_cv(ts)

    def test_singular_downdate_advises_ridge(self):
        # 3 users, d=2, 4 posts: dropping any user leaves 2-3 rows < d+1
        X = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [2.0, 1.0]])
        ts = _ts(X, [1.0, 2.0, 3.0, 4.0], ["A", "A", "B", "C"])
        with pytest.raises(SingularSystemError, match="lambda"):
            loo_user_cv(ts, lam=0.0)
        loo_user_cv(ts, lam=0.5)

    def test_block_boundaries_cover_many_user_counts(self):
        """The block prefix/suffix assembly is exact for any user count."""
        for n_users in (2, 3, 4, 5, 9, 16, 17):
            ts = _random_grouped(100 + n_users, n_users=n_users, posts_per_user=3, d=2)
            fast = {p.user_id: p.predicted for p in loo_user_cv(ts, lam=0.1)}
            for u in sorted(set(ts.groups.tolist())):
                keep = ts.groups != u
                model = fit(_ts(ts.X[keep], ts.y[keep], ts.groups[keep]), lam=0.1)
                naive = float((ts.X[~keep] @ model.weights + model.bias).mean())
                assert abs(naive - fast[u]) < 1e-8


class TestScoreTokenizedPosts:
    def test_matches_vector_route(self, tiny_table):
        rng = np.random.default_rng(12)
        meta = TrainingMeta(n_posts=1, n_users=1, target_mean=500.0, target_sd=1.0)
        model = LinearModel(
            weights=rng.standard_normal(3), bias=400.0, lam=0.0, d=3, training_meta=meta
        )
        words = tiny_table.words + ["oov"]
        posts = [
            [words[i] for i in rng.integers(0, len(words), int(rng.integers(0, 7)))]
            for _ in range(200)
        ]
        scores, n_matched = score_tokenized_posts(model, tiny_table, posts)
        from postscore.embeddings import post_vector

        for tokens, score, matched in zip(posts, scores, n_matched):
            pv = post_vector(tiny_table, tokens)
            if pv.vector is None:
                assert matched == 0
                assert score == 500.0
            else:
                assert score == pytest.approx(predict_post(model, pv.vector), abs=1e-9)


class TestPostsCurve:
    def test_eligibility_threshold(self):
        rows = {"a": np.arange(5), "b": np.arange(20), "c": np.arange(19)}
        assert _eligible_users(rows, 20) == ["b"]
        assert _eligible_users(rows, 5) == ["a", "b", "c"]

    def test_error_when_no_eligible_user(self):
        ts = _random_grouped(13, n_users=4, posts_per_user=3, d=2)
        with pytest.raises(ValueError, match="at least 5"):
            posts_curve(ts, n_max=5, B=100, seed=0)

    def test_deterministic_and_shaped(self):
        ts = _random_grouped(14, n_users=12, posts_per_user=6, d=3, noise=20.0)
        a = posts_curve(ts, n_max=4, B=100, seed=3)
        b = posts_curve(ts, n_max=4, B=100, seed=3)
        assert a == b
        assert [p.n_posts for p in a] == [1, 2, 3, 4]
        for p in a:
            assert p.ci_low <= p.ci_high

    def test_different_seeds_differ(self):
        ts = _random_grouped(15, n_users=12, posts_per_user=6, d=3, noise=40.0)
        a = posts_curve(ts, n_max=2, B=100, seed=1)
        b = posts_curve(ts, n_max=2, B=100, seed=2)
        assert a != b


class TestModelSerialization:
    def test_round_trip(self):
        meta = TrainingMeta(n_posts=10, n_users=3, target_mean=500.0, target_sd=90.0,
                            embedding_fingerprint="fp")
        model = LinearModel(
            weights=np.array([1.5, -2.25]), bias=3.125, lam=0.5, d=2, training_meta=meta
        )
        back = LinearModel.from_dict(model.to_dict())
        assert np.array_equal(back.weights, model.weights)
        assert back.bias == model.bias
        assert back.lam == model.lam
        assert back.training_meta == meta

    def test_unknown_version_rejected(self):
        meta = TrainingMeta(n_posts=1, n_users=1, target_mean=0.0, target_sd=1.0)
        model = LinearModel(weights=np.zeros(1), bias=0.0, lam=0.0, d=1, training_meta=meta)
        bad = model.to_dict()
        bad["format_version"] = 99
        with pytest.raises(ValueError, match="format_version"):
            LinearModel.from_dict(bad)
