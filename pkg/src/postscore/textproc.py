"""Tokenization, post filtering, and per-user surface features.

Tokens are maximal runs of Unicode letters/digits with internal apostrophes
and hyphens preserved ("don't", "re-read"), lowercased. Original-case
capitalization, emoji, '!' and script counts are recorded per post before
lowering so that per-user rates can be averaged with equal post weight.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field

__all__ = [
    "RawPost",
    "TokenizedPost",
    "UserSurfaceFeatures",
    "FEATURE_COLUMNS",
    "tokenize",
    "tokenize_post",
    "should_filter",
    "shannon_entropy",
    "surface_features",
    "FeatureAccumulator",
]

# A token: letter/digit run, optionally continued by '- or ' joined runs.
# [^\W_] is "word character except underscore" = Unicode letters and digits.
_TOKEN_RE = re.compile(r"[^\W_]+(?:['\-][^\W_]+)*", re.UNICODE)

# Emoji blocks counted by count_emoji: Miscellaneous Symbols and Pictographs,
# Emoticons, Transport and Map Symbols, Supplemental Symbols and Pictographs.
# ZWJ sequences contribute their base code points; U+200D itself never counts.
_EMOJI_RANGES = (
    (0x1F300, 0x1F5FF),
    (0x1F600, 0x1F64F),
    (0x1F680, 0x1F6FF),
    (0x1F900, 0x1F9FF),
)

# Latin-script letter ranges: ASCII, Latin-1 letters (minus × ÷), Latin
# Extended-A/B, Latin Extended Additional.
_LATIN_RANGES = (
    (0x0041, 0x005A),
    (0x0061, 0x007A),
    (0x00C0, 0x00D6),
    (0x00D8, 0x00F6),
    (0x00F8, 0x024F),
    (0x1E00, 0x1EFF),
)


@dataclass(frozen=True)
class RawPost:
    """One short text with author attribution, as read from the posts file."""

    user_id: str
    post_id: str
    text: str
    is_repost: bool = False


@dataclass(frozen=True)
class TokenizedPost:
    user_id: str
    post_id: str
    tokens: list[str]
    n_capitalized: int = 0
    n_emoji: int = 0
    n_exclaim: int = 0
    n_latin_chars: int = 0
    n_alpha_chars: int = 0
    char_len: int = 0


@dataclass(frozen=True)
class UserSurfaceFeatures:
    """The per-user surface features; rates are per-post counts normalized by
    post length in tokens, averaged with equal post weight."""

    user_id: str
    caps_rate: float
    emoji_rate: float
    exclaim_rate: float
    latin_rate: float
    avg_post_len: float
    avg_word_len: float
    vocab_size: int
    entropy_bits: float
    n_posts: int = 0  # exposed so callers can control for posting volume


FEATURE_COLUMNS = [
    "caps_rate",
    "emoji_rate",
    "exclaim_rate",
    "latin_rate",
    "avg_post_len",
    "avg_word_len",
    "vocab_size",
    "entropy_bits",
]


def tokenize(text: str) -> list[str]:
    """Lowercased tokens of ``text``; empty input gives an empty list."""
    return [m.group(0).lower() for m in _TOKEN_RE.finditer(text)]


def _in_ranges(cp: int, ranges) -> bool:
    for lo, hi in ranges:
        if lo <= cp <= hi:
            return True
    return False


def count_emoji(text: str) -> int:
    return sum(1 for ch in text if _in_ranges(ord(ch), _EMOJI_RANGES))


def _script_counts(text: str) -> tuple[int, int]:
    """(latin, alphabetic) character counts over the raw text."""
    n_latin = 0
    n_alpha = 0
    for ch in text:
        if ch.isalpha():
            n_alpha += 1
            if _in_ranges(ord(ch), _LATIN_RANGES):
                n_latin += 1
    return n_latin, n_alpha


def tokenize_post(post: RawPost) -> TokenizedPost:
    """Tokenize one post and record its surface counts."""
    raw_tokens = [m.group(0) for m in _TOKEN_RE.finditer(post.text)]
    n_cap = sum(1 for t in raw_tokens if t[0].isupper())
    n_latin, n_alpha = _script_counts(post.text)
    return TokenizedPost(
        user_id=post.user_id,
        post_id=post.post_id,
        tokens=[t.lower() for t in raw_tokens],
        n_capitalized=n_cap,
        n_emoji=count_emoji(post.text),
        n_exclaim=post.text.count("!"),
        n_latin_chars=n_latin,
        n_alpha_chars=n_alpha,
        char_len=len(post.text),
    )


def should_filter(post: RawPost) -> tuple[bool, str | None]:
    """Whether a post is excluded from the corpus, and why.

    Filter reasons, in the order checked: "url" (contains http://, https://,
    or a whitespace-delimited chunk starting with "www."), "repost", "empty"
    (no letter/digit tokens). Pure and order-independent across a corpus.
    """
    lowered = post.text.lower()
    if "http://" in lowered or "https://" in lowered:
        return True, "url"
    if any(chunk.startswith("www.") for chunk in lowered.split()):
        return True, "url"
    if post.is_repost:
        return True, "repost"
    if _TOKEN_RE.search(post.text) is None:
        return True, "empty"
    return False, None


def shannon_entropy(token_counts) -> float:
    """Shannon entropy in bits of the unigram distribution.

    ``token_counts`` maps token -> count (a Counter works). Uses
    H = log2(total) - sum(c*log2 c)/total, which is exact for uniform
    distributions (H == log2 k when all counts are equal).
    """
    counts = [c for c in token_counts.values() if c > 0]
    total = sum(counts)
    if total < 1:
        raise ValueError("entropy of an empty token multiset is undefined")
    weighted = sum(c * math.log2(c) for c in counts)
    return math.log2(total) - weighted / total


@dataclass
class FeatureAccumulator:
    """Streaming accumulator for one user's surface features.

    Posts may arrive in any order; the reduction is permutation-invariant.
    """

    n_posts: int = 0
    rate_caps: float = 0.0
    rate_emoji: float = 0.0
    rate_exclaim: float = 0.0
    n_latin: int = 0
    n_alpha: int = 0
    total_tokens: int = 0
    total_token_chars: int = 0
    counts: Counter = field(default_factory=Counter)

    def add(self, post: TokenizedPost) -> None:
        n_tok = len(post.tokens)
        if n_tok == 0:
            raise ValueError("cannot accumulate a post with zero tokens")
        self.n_posts += 1
        self.rate_caps += post.n_capitalized / n_tok
        self.rate_emoji += post.n_emoji / n_tok
        self.rate_exclaim += post.n_exclaim / n_tok
        self.n_latin += post.n_latin_chars
        self.n_alpha += post.n_alpha_chars
        self.total_tokens += n_tok
        self.total_token_chars += sum(len(t) for t in post.tokens)
        self.counts.update(post.tokens)

    def finish(self, user_id: str) -> UserSurfaceFeatures:
        if self.n_posts == 0:
            raise ValueError("no posts accumulated for user %r" % user_id)
        return UserSurfaceFeatures(
            user_id=user_id,
            caps_rate=self.rate_caps / self.n_posts,
            emoji_rate=self.rate_emoji / self.n_posts,
            exclaim_rate=self.rate_exclaim / self.n_posts,
            latin_rate=(self.n_latin / self.n_alpha) if self.n_alpha else 0.0,
            avg_post_len=self.total_tokens / self.n_posts,
            avg_word_len=self.total_token_chars / self.total_tokens,
            vocab_size=len(self.counts),
            entropy_bits=shannon_entropy(self.counts),
            n_posts=self.n_posts,
        )


def surface_features(posts: list[TokenizedPost]) -> UserSurfaceFeatures:
    """Surface features for one user's (non-empty) tokenized posts."""
    if not posts:
        raise ValueError("surface_features requires at least one post")
    acc = FeatureAccumulator()
    for post in posts:
        acc.add(post)
    return acc.finish(posts[0].user_id)
