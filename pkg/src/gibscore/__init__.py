"""Gibberishness scoring for speech-derived token sequences.

Pipeline: continuous features are quantized against a k-means codebook,
optionally run-length deduplicated, and scored under an autoregressive
unit language model; the per-utterance log-perplexity (nats/token, lower =
less gibberish) feeds correlation and distribution analysis against
content-intrusive error rates.
"""

__version__ = "0.1.0"

from .backend import KERNEL_BACKEND
from .errors import (
    CorruptionError,
    DivergenceError,
    FormatError,
    GibscoreError,
    InsufficientDataError,
    StageDependencyError,
    UndefinedStatisticError,
    ValidationError,
)
from .interchange import (
    FeatureMatrix,
    LogitsRecord,
    Manifest,
    ManifestEntry,
    ScoreRecord,
    ScoreReport,
    TokenSequence,
    read_features,
    read_logits,
    read_manifest,
    read_report,
    read_tokens,
    write_features,
    write_logits,
    write_manifest,
    write_report,
    write_tokens,
)
from .intrusive import AlignmentResult, align, corpus_error_rate
from .scoring import (
    UtteranceScore,
    cross_entropy,
    perplexity,
    score_corpus,
    score_external,
    score_utterance,
)
from .stats import (
    DensityEstimate,
    PairedSamples,
    condition_report,
    histogram,
    kde,
    pearson,
    spearman,
)
from .tokenizer import (
    Codebook,
    deduplicate,
    quantize,
    read_codebook,
    train_codebook,
    write_codebook,
)
from .ulm import (
    ExternalModel,
    NGramModel,
    RecurrentModel,
    RecurrentTrainConfig,
    next_token_distribution,
    read_ngram,
    read_recurrent,
    train_ngram,
    train_recurrent,
    write_ngram,
    write_recurrent,
)
