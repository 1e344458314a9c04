"""Open-vocabulary interpretability: score and rank every word in the table.

A word's score is the model's prediction for a single-word post, w.v + b, so
by linearity any post's score is the mean of its matched words' scores. The
ranking is descending by score with lexicographic tie-break; percentiles are
100*rank/(n-1) over the filtered vocabulary (top word = 100).
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .embeddings import EmbeddingTable
from .model import LinearModel

__all__ = [
    "WordScore",
    "score_word",
    "word_scores_array",
    "rank_all",
    "iter_ranked",
    "project_2d",
    "training_token_counts",
]


@dataclass(frozen=True)
class WordScore:
    word: str
    score: float
    freq: int | None
    percentile: float


def _check_dims(model: LinearModel, table: EmbeddingTable) -> None:
    if model.d != table.dim:
        raise ValueError(f"model dimension {model.d} does not match table dim {table.dim}")


def score_word(model: LinearModel, table: EmbeddingTable, word: str):
    """Score of a single word, or None when out of vocabulary."""
    _check_dims(model, table)
    vec = table.lookup(word)
    if vec is None:
        return None
    return float(model.weights @ vec.astype(np.float64)) + model.bias


def word_scores_array(model: LinearModel, table: EmbeddingTable) -> np.ndarray:
    """Scores for every table row at once (float64)."""
    _check_dims(model, table)
    return table.vectors.astype(np.float64) @ model.weights + model.bias


def training_token_counts(token_lists) -> Counter:
    """Occurrence counts over training posts, the default min-count source."""
    counts: Counter = Counter()
    for tokens in token_lists:
        counts.update(tokens)
    return counts


def _ranked_order(table: EmbeddingTable, scores: np.ndarray, keep: np.ndarray) -> np.ndarray:
    kept_idx = np.flatnonzero(keep)
    words = np.asarray(table.words, dtype=object)[kept_idx]
    # lexsort: last key is primary; descending score, then ascending word.
    order = np.lexsort((words, -scores[kept_idx]))
    return kept_idx[order]


def iter_ranked(
    model: LinearModel,
    table: EmbeddingTable,
    min_count: int = 0,
    counts=None,
    head: int | None = None,
    tail: int | None = None,
) -> Iterator[WordScore]:
    """Yield WordScore rows in rank order without materializing the list.

    ``counts`` maps word -> occurrence count and is required when
    min_count > 0; words below min_count (or unseen) are filtered out before
    percentiles are assigned. ``head``/``tail`` restrict the yield to the
    first and/or last rows of the full ranking (percentiles still come from
    the whole filtered vocabulary).
    """
    scores = word_scores_array(model, table)
    if min_count > 0:
        if counts is None:
            raise ValueError("min_count > 0 requires a frequency source")
        keep = np.fromiter(
            (counts.get(w, 0) >= min_count for w in table.words),
            dtype=bool,
            count=len(table.words),
        )
        if not keep.any():
            raise ValueError(f"no word reaches min_count={min_count}")
    else:
        keep = np.ones(len(table.words), dtype=bool)
    order = _ranked_order(table, scores, keep)
    n = order.size
    denom = float(n - 1) if n > 1 else 1.0
    if head is None and tail is None:
        positions = range(n)
    else:
        chosen = set(range(min(head or 0, n)))
        chosen.update(range(max(n - (tail or 0), 0), n))
        positions = sorted(chosen)
    for pos in positions:
        idx = order[pos]
        word = table.words[idx]
        freq = counts.get(word) if counts is not None else None
        percentile = 100.0 * (n - 1 - pos) / denom if n > 1 else 100.0
        yield WordScore(word=word, score=float(scores[idx]), freq=freq, percentile=percentile)


def rank_all(
    model: LinearModel,
    table: EmbeddingTable,
    min_count: int = 0,
    counts=None,
) -> list[WordScore]:
    """Full ranked list; see iter_ranked for the streaming variant."""
    return list(iter_ranked(model, table, min_count=min_count, counts=counts))


def project_2d(selected: list[WordScore], table: EmbeddingTable):
    """Top-2 PCA coordinates of the selected words' centered vectors.

    Returns (word, x, y, score) tuples in input order. The sign convention
    makes the largest-magnitude loading of each component positive, which
    fixes the output up to nothing: it is fully deterministic. A rank-1
    selection yields an exactly-zero second coordinate; a rank-0 selection
    (all vectors identical) is an error, as is a selection of fewer than 3
    words or any out-of-vocabulary word.
    """
    if len(selected) < 3:
        raise ValueError("2-d projection requires at least 3 words")
    rows = []
    for ws in selected:
        vec = table.lookup(ws.word)
        if vec is None:
            raise ValueError(f"word {ws.word!r} is not in the embedding table")
        rows.append(vec.astype(np.float64))
    M = np.vstack(rows)
    M -= M.mean(axis=0)
    U, S, Vt = np.linalg.svd(M, full_matrices=False)
    tol = max(M.shape) * np.finfo(np.float64).eps * (S[0] if S.size else 0.0)
    rank = int((S > tol).sum())
    if rank < 1:
        raise ValueError("selected vectors are all identical; nothing to project")
    coords = U[:, :2] * S[:2]
    if S.size < 2:
        coords = np.hstack([coords, np.zeros((M.shape[0], 1))])
    for k in range(2):
        if k < Vt.shape[0] and Vt[k].size:
            j = int(np.argmax(np.abs(Vt[k])))
            if Vt[k, j] < 0:
                coords[:, k] = -coords[:, k]
    return [
        (ws.word, float(coords[i, 0]), float(coords[i, 1]), ws.score)
        for i, ws in enumerate(selected)
    ]
