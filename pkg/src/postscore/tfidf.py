"""Top-k unigram/bigram TF-IDF baseline vectorizer.

Candidate terms are all unigrams and adjacent-pair bigrams of the token
sequence after stopword removal (bigrams join surviving tokens, so removing a
stopword can bridge its neighbours). The vocabulary keeps the k terms with the
highest total occurrence count, ties broken lexicographically on the
space-joined term string. Weights are raw tf times the smoothed idf

    idf(t) = ln((1 + n_docs) / (1 + df(t))) + 1,

and each post vector is L2-normalized (a zero vector stays zero).
"""

from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import DataFormatError

__all__ = ["TfidfVocabulary", "build_vocab", "tfidf_vector", "tfidf_matrix", "load_stopwords"]


def load_stopwords(path) -> frozenset[str]:
    """One word per line, UTF-8; blank lines ignored."""
    words = set()
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            w = line.strip()
            if w:
                words.add(w)
    return frozenset(words)


@dataclass
class TfidfVocabulary:
    terms: list[str]
    df: dict[str, int]
    idf: dict[str, float]
    n_docs: int
    index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.index = {t: i for i, t in enumerate(self.terms)}

    def __len__(self) -> int:
        return len(self.terms)

    def save_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["term", "df", "idf"])
            for t in self.terms:
                writer.writerow([t, self.df[t], repr(self.idf[t])])

    @classmethod
    def load_csv(cls, path, n_docs: int = 0) -> "TfidfVocabulary":
        terms, df, idf = [], {}, {}
        with open(path, "r", encoding="utf-8", newline="") as f:
            reader = csv.reader(f)
            header = next(reader, None)
            if header != ["term", "df", "idf"]:
                raise DataFormatError("expected header `term,df,idf`", path=path, line=1)
            for lineno, row in enumerate(reader, start=2):
                if len(row) != 3:
                    raise DataFormatError("expected 3 fields", path=path, line=lineno)
                terms.append(row[0])
                try:
                    df[row[0]] = int(row[1])
                    idf[row[0]] = float(row[2])
                except ValueError:
                    raise DataFormatError("bad df/idf value", path=path, line=lineno) from None
        return cls(terms=terms, df=df, idf=idf, n_docs=n_docs)


def _post_terms(tokens, stopwords) -> list[str]:
    """Unigrams and adjacent bigrams of the stopword-filtered sequence."""
    kept = [t for t in tokens if t not in stopwords]
    terms = list(kept)
    terms.extend(f"{a} {b}" for a, b in zip(kept, kept[1:]))
    return terms


def build_vocab(corpus, stopwords=frozenset(), k: int = 1000) -> TfidfVocabulary:
    """Select the top-k terms of a tokenized corpus by total occurrence count.

    ``corpus`` is an iterable of token lists (one per post). Deterministic for
    a fixed corpus: the ranking key is (-count, term).
    """
    totals: Counter = Counter()
    df: Counter = Counter()
    n_docs = 0
    for tokens in corpus:
        n_docs += 1
        terms = _post_terms(tokens, stopwords)
        totals.update(terms)
        df.update(set(terms))
    if n_docs == 0:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    ranked = sorted(totals.items(), key=lambda kv: (-kv[1], kv[0]))[:k]
    terms = [t for t, _ in ranked]
    idf = {t: math.log((1 + n_docs) / (1 + df[t])) + 1.0 for t in terms}
    return TfidfVocabulary(terms=terms, df={t: df[t] for t in terms}, idf=idf, n_docs=n_docs)


def tfidf_vector(vocab: TfidfVocabulary, tokens, stopwords=frozenset()) -> np.ndarray:
    """L2-normalized tf-idf vector of one post over the fixed vocabulary."""
    vec = np.zeros(len(vocab.terms), dtype=np.float64)
    index = vocab.index
    for term, count in Counter(_post_terms(tokens, stopwords)).items():
        i = index.get(term)
        if i is not None:
            vec[i] = count * vocab.idf[term]
    norm = math.sqrt(float(vec @ vec))
    if norm > 0.0:
        vec /= norm
    return vec


def tfidf_matrix(vocab: TfidfVocabulary, corpus, stopwords=frozenset()) -> np.ndarray:
    """Stack of tfidf_vector rows for a tokenized corpus."""
    out = np.zeros((len(corpus), len(vocab.terms)), dtype=np.float64)
    for i, tokens in enumerate(corpus):
        out[i] = tfidf_vector(vocab, tokens, stopwords)
    return out
