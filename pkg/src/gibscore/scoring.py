"""Per-utterance cross-entropy / perplexity and corpus-level score reports.

Cross-entropy is the natural-log average negative log-likelihood per token,
each conditional taken from the model's per-step distributions. Lower
scores mean the sequence is statistically closer to the training data,
i.e. less gibberish. Log-probabilities are clamped below at ln(1e-12);
clamped steps are counted, never fatal, since external logits may carry
-inf rows. Scoring is pure: repeated calls agree bitwise.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import GibscoreError, InsufficientDataError, ValidationError
from .interchange import (
    LogitsRecord,
    Manifest,
    ManifestEntry,
    ScoreRecord,
    ScoreReport,
    SkippedRecord,
    check_payload_kind,
    read_features,
    read_logits,
    read_tokens,
    summarize_records,
    TokenSequence,
)
from .tokenizer import Codebook, deduplicate, quantize
from .ulm import ExternalModel

logger = logging.getLogger(__name__)

LOG_PROB_FLOOR = math.log(1e-12)


@dataclass(frozen=True)
class UtteranceScore:
    id: str
    cross_entropy: float  # nats per token
    perplexity: float
    token_count: int
    clamped_steps: int = 0

    def __post_init__(self):
        if self.token_count < 1:
            raise ValidationError("scored utterances must have at least one token")
        if self.cross_entropy < 0.0:
            raise ValidationError("cross-entropy must be non-negative")


def _gather_log_probs(probs: np.ndarray, tokens: np.ndarray) -> tuple[np.ndarray, int]:
    p = probs[np.arange(tokens.shape[0]), tokens]
    with np.errstate(divide="ignore"):
        logs = np.log(p)
    # dust guard: stored rows may carry p marginally above 1
    np.minimum(logs, 0.0, out=logs)
    clamped = int((logs < LOG_PROB_FLOOR).sum())
    np.maximum(logs, LOG_PROB_FLOOR, out=logs)
    return logs, clamped


def cross_entropy_with_stats(model, sequence: TokenSequence) -> tuple[float, int]:
    """Cross-entropy in nats/token plus the number of clamped steps."""
    if len(sequence) < 1:
        raise ValidationError("cross-entropy is undefined for an empty sequence")
    if sequence.vocab_size != model.vocab_size:
        raise ValidationError(
            f"vocab mismatch: sequence {sequence.vocab_size}, model {model.vocab_size}"
        )
    probs = model.step_distributions(sequence.tokens)
    logs, clamped = _gather_log_probs(probs, sequence.tokens)
    if clamped:
        logger.warning("clamped %d near-zero probabilities during scoring", clamped)
    return -float(logs.mean()), clamped


def cross_entropy(model, sequence: TokenSequence) -> float:
    return cross_entropy_with_stats(model, sequence)[0]


def perplexity(model, sequence: TokenSequence) -> float:
    return math.exp(cross_entropy(model, sequence))


def score_utterance(model, sequence: TokenSequence, id: str = "") -> UtteranceScore:
    ce, clamped = cross_entropy_with_stats(model, sequence)
    return UtteranceScore(
        id=id,
        cross_entropy=ce,
        perplexity=math.exp(ce),
        token_count=len(sequence),
        clamped_steps=clamped,
    )


def score_external(record: LogitsRecord, id: str = "") -> UtteranceScore:
    """Score a stored logits record directly from its rows.

    Equals routing the record through the ExternalModel backend; this path
    just gathers the stored rows at the observed tokens.
    """
    if record.step_count < 1:
        raise ValidationError("cannot score an empty logits record")
    probs = ExternalModel(record)._row_probs(record.log_probs)
    logs, clamped = _gather_log_probs(probs, record.observed)
    ce = -float(logs.mean())
    return UtteranceScore(
        id=id,
        cross_entropy=ce,
        perplexity=math.exp(ce),
        token_count=record.step_count,
        clamped_steps=clamped,
    )


def _score_entry(
    model,
    manifest: Manifest,
    entry: ManifestEntry,
    dedup: bool,
    codebook: Codebook | None,
    external: bool,
) -> ScoreRecord | SkippedRecord:
    try:
        path = check_payload_kind(manifest, entry)
        if external:
            if entry.payload_kind != "logits":
                return SkippedRecord(entry.id, "external scoring requires a logits payload")
            us = score_external(read_logits(path), id=entry.id)
        else:
            if entry.payload_kind == "tokens":
                seq = read_tokens(path)
            elif entry.payload_kind == "features":
                if codebook is None:
                    return SkippedRecord(entry.id, "features payload requires a codebook")
                seq = quantize(codebook, read_features(path))
            else:
                return SkippedRecord(entry.id, "logits payload requires external scoring mode")
            if dedup:
                seq = deduplicate(seq)
            if len(seq) == 0:
                return SkippedRecord(entry.id, "empty token sequence")
            us = score_utterance(model, seq, id=entry.id)
    except (GibscoreError, OSError) as exc:
        return SkippedRecord(entry.id, str(exc))
    return ScoreRecord(
        id=entry.id,
        condition=entry.condition,
        score=us.cross_entropy,
        perplexity=us.perplexity,
        token_count=us.token_count,
        clamped_steps=us.clamped_steps,
    )


def score_corpus(
    model,
    manifest: Manifest,
    *,
    dedup: bool = False,
    codebook: Codebook | None = None,
    external: bool = False,
    jobs: int = 1,
    meta: Mapping[str, object] | None = None,
) -> ScoreReport:
    """Score every manifest entry; failures become skip records, not drops.

    Per-utterance work is independent and runs on up to `jobs` threads; the
    report preserves manifest order regardless of completion order.
    """
    if not external and model is None:
        raise ValidationError("a model is required unless scoring externally")

    def worker(entry: ManifestEntry):
        return _score_entry(model, manifest, entry, dedup, codebook, external)

    if jobs > 1 and len(manifest) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(worker, manifest.entries))
    else:
        results = [worker(entry) for entry in manifest.entries]

    records = tuple(r for r in results if isinstance(r, ScoreRecord))
    skipped = tuple(r for r in results if isinstance(r, SkippedRecord))
    if not records:
        raise InsufficientDataError(
            f"no entries scored ({len(skipped)} skipped:"
            f" {'; '.join(s.reason for s in skipped[:3])}...)"
            if skipped
            else "no entries scored (empty manifest)"
        )
    full_meta: dict[str, object] = {
        "backend": "external" if external else type(model).__name__,
        "dedup": bool(dedup),
        "scored": len(records),
        "skipped": len(skipped),
        "clamped_steps_total": int(sum(r.clamped_steps for r in records)),
    }
    if meta:
        full_meta.update(meta)
    return ScoreReport(
        records=records,
        summaries=summarize_records(records),
        skipped=skipped,
        meta=full_meta,
    )
