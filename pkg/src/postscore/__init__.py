"""postscore: predict a scalar outcome from short texts.

Posts are embedded by averaging pretrained word vectors, a linear model maps
post vectors to scores, user scores average post scores, institution scores
average user scores, and inverting the model scores every word in the
vocabulary. A deterministic synthetic-data generator makes the whole pipeline
verifiable at desk scale.
"""

__version__ = "0.1.0"

from .embeddings import EmbeddingTable, PostVector, post_vector, post_vectors_matrix
from .errors import DataFormatError, PostscoreError, SingularSystemError
from .model import (
    CurvePoint,
    LinearModel,
    TrainingSet,
    UserPrediction,
    fit,
    loo_user_cv,
    posts_curve,
    predict_post,
    predict_user,
)
from .stats import CorrelationReport, bootstrap_ci, pearson, spearman
from .synth import SynthConfig, generate
from .textproc import (
    RawPost,
    TokenizedPost,
    UserSurfaceFeatures,
    shannon_entropy,
    should_filter,
    surface_features,
    tokenize,
)
from .tfidf import TfidfVocabulary, build_vocab, tfidf_vector
from .transfer import InstitutionScore, aggregate, compare, cross_source_compare
from .wordrank import WordScore, project_2d, rank_all, score_word

__all__ = [
    "__version__",
    "EmbeddingTable",
    "PostVector",
    "post_vector",
    "post_vectors_matrix",
    "DataFormatError",
    "PostscoreError",
    "SingularSystemError",
    "CurvePoint",
    "LinearModel",
    "TrainingSet",
    "UserPrediction",
    "fit",
    "loo_user_cv",
    "posts_curve",
    "predict_post",
    "predict_user",
    "CorrelationReport",
    "bootstrap_ci",
    "pearson",
    "spearman",
    "SynthConfig",
    "generate",
    "RawPost",
    "TokenizedPost",
    "UserSurfaceFeatures",
    "shannon_entropy",
    "should_filter",
    "surface_features",
    "tokenize",
    "TfidfVocabulary",
    "build_vocab",
    "tfidf_vector",
    "InstitutionScore",
    "aggregate",
    "compare",
    "cross_source_compare",
    "WordScore",
    "project_2d",
    "rank_all",
    "score_word",
]
