"""Pretrained word-embedding tables and bag-of-embeddings post vectors.

Tables use 32-bit storage with 64-bit accumulation for means: a realistic
table (millions of words x 300 dims) only fits in memory at float32, while
averaging and all downstream regression run in float64.

Loading has two routes over the same format contract: a pandas C-engine fast
path (the large-table gate), and a pure-Python validating parser used both as
fallback and to pinpoint the offending line whenever the fast path sees
anything suspicious.
"""

from __future__ import annotations

import csv
import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import DataFormatError

__all__ = ["EmbeddingTable", "PostVector", "post_vector", "post_vectors_matrix", "load_freq_csv"]

_BATCH_CHUNK = 8192


class EmbeddingTable:
    """Immutable word -> float32 vector map with optional corpus frequencies.

    Safe for concurrent reads after construction; nothing mutates it.
    """

    def __init__(self, words, vectors, freq=None):
        vectors = np.ascontiguousarray(vectors, dtype=np.float32)
        if vectors.ndim != 2 or vectors.shape[0] != len(words):
            raise ValueError("vectors must be a |vocab| x dim matrix")
        if len(words) < 1:
            raise ValueError("an embedding table needs at least one word")
        self.words = list(words)
        self.vectors = vectors
        self.vocab = {}
        for i, w in enumerate(self.words):
            if w in self.vocab:
                raise ValueError(f"duplicate word in embedding table: {w!r}")
            self.vocab[w] = i
        self.freq = dict(freq) if freq else None
        self._fingerprint = None
        vectors.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word: str) -> bool:
        return word.lower() in self.vocab

    def lookup(self, word: str):
        """Vector for the lowercased word, or None when out of vocabulary."""
        idx = self.vocab.get(word.lower())
        if idx is None:
            return None
        return self.vectors[idx]

    def fingerprint(self) -> str:
        """sha256 over shape, vocabulary and raw float32 bytes; cached."""
        if self._fingerprint is None:
            h = hashlib.sha256()
            h.update(b"embedding-table-v1")
            h.update(f"{len(self.words)} {self.dim}".encode())
            for w in self.words:
                h.update(w.encode("utf-8"))
                h.update(b"\x00")
            h.update(self.vectors.tobytes())
            self._fingerprint = h.hexdigest()
        return self._fingerprint

    def save_vec(self, path) -> None:
        """Write the text .vec format; float32 values round-trip bit-exactly."""
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(f"{len(self.words)} {self.dim}\n")
            for w, row in zip(self.words, self.vectors):
                f.write(w)
                f.write(" ")
                f.write(" ".join(str(v) for v in row))
                f.write("\n")

    @classmethod
    def load_vec(cls, path, freq=None) -> "EmbeddingTable":
        """Parse a text .vec file: header "<count> <dim>", then one word and
        dim space-separated reals per line.

        Raises DataFormatError naming the line for a malformed header, wrong
        field count, non-finite or unparseable value, duplicate word, or a
        count mismatch.
        """
        count, dim = _read_vec_header(path)
        parsed = _load_vec_fast(path, count, dim)
        if parsed is None:
            parsed = _load_vec_slow(path, count, dim)
        words, vectors = parsed
        _validate_rows(path, words, vectors, count, dim)
        return cls(words, vectors, freq=freq)


def _read_vec_header(path) -> tuple[int, int]:
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline()
    parts = header.split()
    if len(parts) != 2:
        raise DataFormatError('header must be "<count> <dim>"', path=path, line=1)
    try:
        count, dim = int(parts[0]), int(parts[1])
    except ValueError:
        raise DataFormatError('header must be "<count> <dim>"', path=path, line=1) from None
    if count < 1 or dim < 1:
        raise DataFormatError("count and dim must be positive", path=path, line=1)
    return count, dim


def _load_vec_fast(path, count, dim):
    """pandas C-parser route; returns None when anything looks off so the
    validating parser can produce a precise error (or succeed)."""
    try:
        import pandas as pd
    except ImportError:
        return None
    dtypes = {0: str}
    for i in range(1, dim + 1):
        dtypes[i] = np.float32
    try:
        df = pd.read_csv(
            path,
            sep=" ",
            header=None,
            skiprows=1,
            quoting=csv.QUOTE_NONE,
            na_filter=False,
            dtype=dtypes,
            encoding="utf-8",
        )
    except Exception:
        return None
    if df.shape[1] != dim + 1:
        return None
    words = df.iloc[:, 0].tolist()
    vectors = df.iloc[:, 1:].to_numpy(dtype=np.float32)
    return words, vectors


def _load_vec_slow(path, count, dim):
    """Line-by-line parser; errors carry exact line numbers."""
    words = []
    vectors = np.empty((count, dim), dtype=np.float32)
    row = 0
    with open(path, "r", encoding="utf-8") as f:
        f.readline()
        for lineno, line in enumerate(f, start=2):
            parts = line.rstrip("\n").rstrip().split(" ")
            if len(parts) != dim + 1:
                raise DataFormatError(
                    f"expected a word and {dim} values, found {len(parts)} fields",
                    path=path,
                    line=lineno,
                )
            if row >= count:
                raise DataFormatError(
                    f"more rows than the declared count {count}", path=path, line=lineno
                )
            words.append(parts[0])
            try:
                vectors[row] = [float(v) for v in parts[1:]]
            except ValueError:
                raise DataFormatError("unparseable vector value", path=path, line=lineno) from None
            row += 1
    return words, vectors[:row]


def _validate_rows(path, words, vectors, count, dim) -> None:
    if len(words) != count:
        raise DataFormatError(
            f"header declares {count} words but file has {len(words)}", path=path, line=1
        )
    finite = np.isfinite(vectors).all(axis=1)
    if not finite.all():
        bad = int(np.flatnonzero(~finite)[0])
        raise DataFormatError("non-finite vector value", path=path, line=bad + 2)
    seen = set()
    for i, w in enumerate(words):
        if w in seen:
            raise DataFormatError(f"duplicate word {w!r}", path=path, line=i + 2)
        seen.add(w)


def load_freq_csv(path) -> dict:
    """Sidecar corpus frequencies: CSV rows `word,count` (header optional)."""
    freq = {}
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        for lineno, row in enumerate(reader, start=1):
            if not row:
                continue
            if lineno == 1 and row[:2] == ["word", "count"]:
                continue
            if len(row) != 2:
                raise DataFormatError("expected `word,count`", path=path, line=lineno)
            try:
                count = int(row[1])
            except ValueError:
                raise DataFormatError("count must be an integer", path=path, line=lineno) from None
            if row[0] in freq:
                raise DataFormatError(f"duplicate word {row[0]!r}", path=path, line=lineno)
            freq[row[0]] = count
    return freq


@dataclass(frozen=True)
class PostVector:
    """Averaged embedding for one post; vector is None when no token matched."""

    post_id: str
    user_id: str
    vector: np.ndarray | None
    n_matched: int
    n_tokens: int


def post_vector(table: EmbeddingTable, tokens, post_id="", user_id="") -> PostVector:
    """Arithmetic mean (float64) of in-vocabulary token vectors.

    Duplicate tokens count per occurrence; out-of-vocabulary tokens are
    skipped; no match at all gives an absent vector.
    """
    vocab = table.vocab
    idx = [j for j in map(vocab.get, tokens) if j is not None]
    if not idx:
        return PostVector(post_id, user_id, None, 0, len(tokens))
    mean = table.vectors[idx].astype(np.float64).mean(axis=0)
    return PostVector(post_id, user_id, mean, len(idx), len(tokens))


def flat_token_ids(table: EmbeddingTable, token_lists):
    """Vocabulary row ids of all matched tokens, with per-post match counts.

    Returns (flat_ids, n_matched, n_tokens) where flat_ids concatenates the
    matched ids post by post.
    """
    get = table.vocab.get
    flat: list[int] = []
    extend = flat.extend
    n_posts = len(token_lists)
    n_matched = np.empty(n_posts, dtype=np.int64)
    n_tokens = np.empty(n_posts, dtype=np.int64)
    for i, tokens in enumerate(token_lists):
        ids = [j for j in map(get, tokens) if j is not None]
        n_tokens[i] = len(tokens)
        n_matched[i] = len(ids)
        extend(ids)
    return np.asarray(flat, dtype=np.int64), n_matched, n_tokens


def _mean_rows(vectors, flat, offsets, counts, out) -> None:
    """Segment means of gathered rows into ``out`` (NaN for empty segments)."""
    n, _ = out.shape
    if n == 0:
        return
    out.fill(np.nan)
    nonempty = counts > 0
    if not nonempty.any():
        return
    # Empty segments occupy no rows, so the starts of non-empty segments are
    # strictly increasing, in range, and adjacent in flat: reduceat over them
    # alone sums exactly each post's rows.
    gathered = vectors[flat].astype(np.float64)
    sums = np.add.reduceat(gathered, offsets[nonempty], axis=0)
    out[nonempty] = sums / counts[nonempty, None]


def post_vectors_matrix(table: EmbeddingTable, token_lists, threads: int = 1):
    """Post vectors for many posts at once.

    Returns (means, n_matched, n_tokens): ``means`` is n_posts x dim float64
    with NaN rows where no token matched. Work is chunked; with threads > 1
    chunks run on a thread pool but land in preallocated, disjoint slices, so
    the result is bit-identical for any thread count.
    """
    flat, n_matched, n_tokens = flat_token_ids(table, token_lists)
    n = len(token_lists)
    means = np.empty((n, table.dim), dtype=np.float64)
    bounds = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(n_matched, out=bounds[1:])

    def work(start: int, end: int) -> None:
        lo, hi = bounds[start], bounds[end]
        _mean_rows(
            table.vectors,
            flat[lo:hi],
            bounds[start:end] - lo,
            n_matched[start:end],
            means[start:end],
        )

    starts = list(range(0, n, _BATCH_CHUNK))
    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(lambda s: work(s, min(s + _BATCH_CHUNK, n)), starts))
    else:
        for s in starts:
            work(s, min(s + _BATCH_CHUNK, n))
    return means, n_matched, n_tokens
