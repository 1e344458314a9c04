import numpy as np
import pytest

from postscore.embeddings import EmbeddingTable
from postscore.pipeline import build_embedding_training, iter_clean_posts
from postscore.synth import SynthConfig, generate


@pytest.fixture(scope="session")
def tiny_table():
    """Five handmade 3-d vectors for exact arithmetic checks."""
    words = ["a", "b", "c", "d", "e"]
    vectors = np.array(
        [
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
            [1.0, 1.0, 0.0],
            [-1.0, 0.5, 2.0],
        ],
        dtype=np.float32,
    )
    return EmbeddingTable(words, vectors, freq={"a": 10, "b": 5, "c": 2, "d": 1, "e": 7})


@pytest.fixture(scope="session")
def synth_small():
    """One shared small dataset: 60 users, 6 institutions, 480 posts."""
    cfg = SynthConfig(
        vocab_size=1200,
        dim=16,
        n_topics=4,
        n_users=60,
        posts_per_user=8,
        tokens_per_post=8,
        noise_sd=40.0,
        institution_count=6,
        users_per_institution=8,
        seed=7,
    )
    return generate(cfg)


@pytest.fixture(scope="session")
def synth_small_training(synth_small):
    clean = list(iter_clean_posts(synth_small.posts))
    ts, _ = build_embedding_training(clean, synth_small.labels, synth_small.table)
    return clean, ts
