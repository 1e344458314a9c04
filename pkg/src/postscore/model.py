"""Linear regression on post vectors, user aggregation, grouped LOOCV.

Fitting minimizes sum((x.w + b - y)^2) + lambda*||w||^2 with an unpenalized
bias, solved by normal equations on centered data with a Cholesky (SPD)
factorization.

Leave-one-user-out CV re-solves the same normal equations per user with that
user's rows excluded. The per-user systems are assembled from per-user Gram
partials combined in a fixed user order (block prefix/suffix sums), which is
algebraically the classic downdate X'X - Xu'Xu but has two extra properties:
it never cancels a user's contribution against itself, and the system solved
for user u contains no floating-point trace of u's rows at all, so u's
held-out prediction is bit-identical no matter what u's training rows hold.
Cost stays O(posts*d^2 + users*d^3) instead of a full retrain per user.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import SingularSystemError
from .stats import pearson, bootstrap_ci

__all__ = [
    "TrainingMeta",
    "LinearModel",
    "TrainingSet",
    "UserPrediction",
    "CurvePoint",
    "fit",
    "predict_post",
    "predict_posts",
    "predict_user",
    "predict_users",
    "score_tokenized_posts",
    "loo_user_cv",
    "posts_curve",
]

CONDITION_ADVISORY = 1e12
MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class TrainingMeta:
    n_posts: int
    n_users: int
    target_mean: float
    target_sd: float
    embedding_fingerprint: str = ""


@dataclass(frozen=True)
class LinearModel:
    weights: np.ndarray
    bias: float
    lam: float
    d: int
    training_meta: TrainingMeta

    def to_dict(self) -> dict:
        return {
            "format_version": MODEL_FORMAT_VERSION,
            "d": self.d,
            "lambda": self.lam,
            "weights": [float(w) for w in self.weights],
            "bias": self.bias,
            "training_meta": {
                "n_posts": self.training_meta.n_posts,
                "n_users": self.training_meta.n_users,
                "target_mean": self.training_meta.target_mean,
                "target_sd": self.training_meta.target_sd,
                "embedding_fingerprint": self.training_meta.embedding_fingerprint,
            },
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "LinearModel":
        version = payload.get("format_version")
        if version != MODEL_FORMAT_VERSION:
            raise ValueError(f"unsupported model format_version: {version!r}")
        meta = payload["training_meta"]
        weights = np.asarray(payload["weights"], dtype=np.float64)
        if weights.shape != (payload["d"],):
            raise ValueError("weights length does not match d")
        return cls(
            weights=weights,
            bias=float(payload["bias"]),
            lam=float(payload["lambda"]),
            d=int(payload["d"]),
            training_meta=TrainingMeta(
                n_posts=int(meta["n_posts"]),
                n_users=int(meta["n_users"]),
                target_mean=float(meta["target_mean"]),
                target_sd=float(meta["target_sd"]),
                embedding_fingerprint=str(meta.get("embedding_fingerprint", "")),
            ),
        )


@dataclass
class TrainingSet:
    """Post matrix X (n x d, float64), per-post targets y, and the author of
    each row. Rows with absent post vectors must be excluded before assembly.
    """

    X: np.ndarray
    y: np.ndarray
    groups: np.ndarray  # row -> user_id, dtype=object or str

    def __post_init__(self):
        self.X = np.ascontiguousarray(self.X, dtype=np.float64)
        self.y = np.ascontiguousarray(self.y, dtype=np.float64)
        self.groups = np.asarray(self.groups)
        if self.X.ndim != 2:
            raise ValueError("X must be 2-dimensional")
        n = self.X.shape[0]
        if self.y.shape != (n,) or self.groups.shape != (n,):
            raise ValueError("X, y and groups must agree on the number of rows")
        if n and not (np.isfinite(self.X).all() and np.isfinite(self.y).all()):
            raise ValueError("training data contains non-finite values")

    @property
    def n_posts(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def user_ids(self) -> list:
        return sorted(set(self.groups.tolist()))

    def rows_by_user(self) -> dict:
        rows: dict = {}
        for i, u in enumerate(self.groups.tolist()):
            rows.setdefault(u, []).append(i)
        return {u: np.asarray(ix, dtype=np.int64) for u, ix in rows.items()}


@dataclass(frozen=True)
class UserPrediction:
    user_id: str
    predicted: float
    n_posts_used: int


@dataclass(frozen=True)
class CurvePoint:
    n_posts: int
    r: float
    ci_low: float
    ci_high: float


def _solve_spd(G: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        factor = cho_factor(G, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(str(exc)) from exc
    return cho_solve(factor, rhs, check_finite=False)


def fit(ts: TrainingSet, lam: float = 0.0, embedding_fingerprint: str = "") -> LinearModel:
    """Least-squares fit of post vectors to targets.

    Requires n_posts >= d+1 or lam > 0. Warns when the (regularized) Gram
    matrix condition number exceeds 1e12; raises SingularSystemError when the
    factorization fails at lam == 0.
    """
    if not math.isfinite(lam) or lam < 0:
        raise ValueError("lambda must be finite and >= 0")
    n, d = ts.X.shape
    if n == 0:
        raise ValueError("cannot fit on an empty training set")
    if lam == 0.0 and n < d + 1:
        raise SingularSystemError(f"underdetermined system ({n} posts, {d} dims)")
    x_mean = ts.X.mean(axis=0)
    y_mean = float(ts.y.mean())
    Xc = ts.X - x_mean
    yc = ts.y - y_mean
    G = Xc.T @ Xc
    if lam > 0.0:
        G[np.diag_indices_from(G)] += lam
    cond = np.linalg.cond(G)
    if not np.isfinite(cond) or cond > CONDITION_ADVISORY:
        warnings.warn(
            f"Gram matrix condition estimate {cond:.3g} exceeds {CONDITION_ADVISORY:.0e}; "
            "consider a ridge coefficient lambda > 0",
            RuntimeWarning,
            stacklevel=2,
        )
    w = _solve_spd(G, Xc.T @ yc)
    bias = y_mean - float(x_mean @ w)
    users = set(ts.groups.tolist())
    meta = TrainingMeta(
        n_posts=n,
        n_users=len(users),
        target_mean=y_mean,
        target_sd=float(ts.y.std()),
        embedding_fingerprint=embedding_fingerprint,
    )
    return LinearModel(weights=w, bias=bias, lam=lam, d=d, training_meta=meta)


def predict_post(model: LinearModel, vector) -> float:
    """w.x + b for one post vector."""
    v = np.asarray(vector, dtype=np.float64)
    if v.shape != (model.d,):
        raise ValueError(f"expected a vector of dimension {model.d}, got shape {v.shape}")
    return float(model.weights @ v) + model.bias


def predict_posts(model: LinearModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.d:
        raise ValueError(f"expected an n x {model.d} matrix, got shape {X.shape}")
    return X @ model.weights + model.bias


def predict_user(model: LinearModel, post_vectors, user_id: str = "") -> UserPrediction:
    """Mean of the user's post predictions.

    With zero usable posts the prediction falls back to the training target
    mean, flagged by n_posts_used == 0.
    """
    X = np.asarray(post_vectors, dtype=np.float64)
    if X.size == 0:
        return UserPrediction(user_id, model.training_meta.target_mean, 0)
    scores = predict_posts(model, X)
    return UserPrediction(user_id, float(scores.mean()), int(scores.size))


def predict_users(model: LinearModel, X, groups) -> list[UserPrediction]:
    """Per-user mean predictions for a matrix of post vectors, sorted by user."""
    ts = TrainingSet(X=np.asarray(X, dtype=np.float64), y=np.zeros(len(groups)), groups=groups)
    rows = ts.rows_by_user()
    scores = predict_posts(model, ts.X)
    return [
        UserPrediction(u, float(scores[rows[u]].mean()), int(rows[u].size))
        for u in sorted(rows)
    ]


def score_tokenized_posts(model: LinearModel, table, token_lists, word_scores=None):
    """Scores for already-tokenized posts, the high-throughput path.

    Exploits linearity: a post's score is the mean of its matched words'
    scores, so per-word scores are precomputed once (vectors @ w + b) and each
    post needs only a gather and a segment mean. Posts with no in-vocabulary
    token receive the training target mean. Callers scoring many batches can
    precompute ``word_scores`` once and pass it in.

    Returns (scores, n_matched) as float64/int64 arrays.
    """
    from .embeddings import flat_token_ids

    if table.dim != model.d:
        raise ValueError(f"table dim {table.dim} does not match model d {model.d}")
    if word_scores is None:
        word_scores = table.vectors.astype(np.float64) @ model.weights + model.bias
    flat, n_matched, _ = flat_token_ids(table, token_lists)
    n = len(token_lists)
    scores = np.full(n, model.training_meta.target_mean, dtype=np.float64)
    if n == 0:
        return scores, n_matched
    bounds = np.zeros(n, dtype=np.int64)
    np.cumsum(n_matched[:-1], out=bounds[1:])
    matched = n_matched > 0
    if matched.any():
        # Non-empty segment starts are strictly increasing and adjacent in
        # flat, so reduceat over them sums exactly each post's word scores.
        sums = np.add.reduceat(word_scores[flat], bounds[matched])
        scores[matched] = sums / n_matched[matched]
    return scores, n_matched


def _augmented_user_grams(ts: TrainingSet, users: list, rows: dict):
    """Per-user Gram partials of the augmented system [X, 1]."""
    d1 = ts.d + 1
    grams = np.empty((len(users), d1, d1), dtype=np.float64)
    rhs = np.empty((len(users), d1), dtype=np.float64)
    for k, u in enumerate(users):
        idx = rows[u]
        Z = np.empty((idx.size, d1), dtype=np.float64)
        Z[:, : ts.d] = ts.X[idx]
        Z[:, ts.d] = 1.0
        grams[k] = Z.T @ Z
        rhs[k] = Z.T @ ts.y[idx]
    return grams, rhs


def loo_user_cv(ts: TrainingSet, lam: float = 0.0) -> list[UserPrediction]:
    """Grouped leave-one-user-out predictions, sorted by user id.

    For each user the augmented normal equations are re-assembled from the
    other users' Gram partials (fixed summation order) and re-solved; the
    result matches naive per-user retraining to solver precision.
    """
    if not math.isfinite(lam) or lam < 0:
        raise ValueError("lambda must be finite and >= 0")
    rows = ts.rows_by_user()
    users = sorted(rows)
    if len(users) < 2:
        raise ValueError("grouped LOOCV requires at least 2 users")
    d = ts.d
    d1 = d + 1
    U = len(users)
    # Block prefix/suffix sums keep memory at O(sqrt(U)) Gram matrices even
    # when d is large (the tfidf route), while preserving a fixed order.
    m = max(1, math.isqrt(U - 1) + 1)
    n_blocks = (U + m - 1) // m

    block_slices = [slice(b * m, min((b + 1) * m, U)) for b in range(n_blocks)]
    block_gram = np.zeros((n_blocks, d1, d1), dtype=np.float64)
    block_rhs = np.zeros((n_blocks, d1), dtype=np.float64)
    per_block = []
    for b, sl in enumerate(block_slices):
        grams, rhs = _augmented_user_grams(ts, users[sl], rows)
        per_block.append((grams, rhs))
        for g in grams:
            block_gram[b] += g
        for r in rhs:
            block_rhs[b] += r

    suffix_gram = np.zeros((n_blocks + 1, d1, d1), dtype=np.float64)
    suffix_rhs = np.zeros((n_blocks + 1, d1), dtype=np.float64)
    for b in range(n_blocks - 1, -1, -1):
        suffix_gram[b] = block_gram[b] + suffix_gram[b + 1]
        suffix_rhs[b] = block_rhs[b] + suffix_rhs[b + 1]

    lam_diag = np.zeros(d1)
    lam_diag[:d] = lam
    predictions = []
    prefix_gram = np.zeros((d1, d1), dtype=np.float64)
    prefix_rhs = np.zeros(d1, dtype=np.float64)
    for b, sl in enumerate(block_slices):
        grams, rhs = per_block[b]
        block_users = users[sl]
        for j, u in enumerate(block_users):
            G = prefix_gram + suffix_gram[b + 1]
            c = prefix_rhs + suffix_rhs[b + 1]
            for k in range(len(block_users)):
                if k != j:
                    G += grams[k]
                    c += rhs[k]
            G[np.diag_indices_from(G)] += lam_diag
            theta = _solve_spd(G, c)
            idx = rows[u]
            scores = ts.X[idx] @ theta[:d] + theta[d]
            predictions.append(UserPrediction(u, float(scores.mean()), int(idx.size)))
        prefix_gram += block_gram[b]
        prefix_rhs += block_rhs[b]
    return predictions


def _eligible_users(rows: dict, n_max: int) -> list:
    return sorted(u for u, idx in rows.items() if idx.size >= n_max)


def posts_curve(
    ts: TrainingSet,
    n_max: int = 20,
    B: int = 1000,
    level: float = 0.90,
    seed: int = 0,
    lam: float = 0.0,
) -> list[CurvePoint]:
    """Predictive power as a function of posts per user.

    Restricted to users with at least n_max posts. For each N in 1..n_max,
    samples N posts per user without replacement (one seeded draw per
    (seed, N)), recomputes grouped LOOCV on the sample, and reports Pearson r
    between held-out user predictions and true scores with a percentile
    bootstrap interval over users. Byte-deterministic for a fixed seed.
    """
    rows = ts.rows_by_user()
    eligible = _eligible_users(rows, n_max)
    if not eligible:
        raise ValueError(f"no user has at least {n_max} posts")
    truth = {u: float(ts.y[rows[u][0]]) for u in eligible}
    points = []
    for n_sel in range(1, n_max + 1):
        rng = np.random.default_rng((seed, n_sel))
        kept = []
        for u in eligible:
            idx = rows[u]
            if idx.size < n_sel:
                continue  # dropped from this N
            kept.extend(sorted(rng.choice(idx, size=n_sel, replace=False).tolist()))
        sub = TrainingSet(X=ts.X[kept], y=ts.y[kept], groups=ts.groups[kept])
        preds = loo_user_cv(sub, lam=lam)
        pairs = [(p.predicted, truth[p.user_id]) for p in preds]
        r = pearson([a for a, _ in pairs], [b for _, b in pairs]).r
        ci_low, ci_high = bootstrap_ci(
            pairs,
            lambda sample: pearson([a for a, _ in sample], [b for _, b in sample]).r,
            B=B,
            level=level,
            seed=(seed, n_sel, 1),
        )
        points.append(CurvePoint(n_posts=n_sel, r=r, ci_low=ci_low, ci_high=ci_high))
    return points
