"""Content-intrusive error rates via minimum-edit-distance alignment.

Works over any discrete alphabet: words, phones, or unit tokens. Unit
costs; when backtracking, a hit/substitution is preferred over a deletion,
and a deletion over an insertion, so the S/D/I split is deterministic.
Corpus aggregation pools errors over pooled reference length rather than
averaging per-file rates; per-file results are kept for correlation use.
All functions are pure and concurrent-safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Hashable, Sequence

import numpy as np

from . import backend
from .errors import InsufficientDataError, ValidationError

# stripped from word symbols before tokenizing on whitespace
_PUNCTUATION = '.,!?;:"'
_STRIP_TABLE = str.maketrans("", "", _PUNCTUATION)


@dataclass(frozen=True)
class AlignmentResult:
    substitutions: int
    deletions: int
    insertions: int
    hits: int
    reference_length: int
    error_rate: float  # NaN when the reference is empty
    rate_defined: bool

    @property
    def distance(self) -> int:
        return self.substitutions + self.deletions + self.insertions


@dataclass(frozen=True)
class CorpusErrorRate:
    pooled_rate: float
    total_errors: int
    total_reference_length: int
    per_file: tuple[AlignmentResult, ...]


def _symbol_ids(reference: Sequence[Hashable], hypothesis: Sequence[Hashable]):
    table: dict[Hashable, int] = {}
    ref = np.fromiter(
        (table.setdefault(s, len(table)) for s in reference), dtype=np.int64, count=len(reference)
    )
    hyp = np.fromiter(
        (table.setdefault(s, len(table)) for s in hypothesis), dtype=np.int64, count=len(hypothesis)
    )
    return np.ascontiguousarray(ref), np.ascontiguousarray(hyp)


def align(reference: Sequence[Hashable], hypothesis: Sequence[Hashable]) -> AlignmentResult:
    """Minimum-edit alignment of hypothesis against reference.

    An empty reference leaves the rate undefined: the result is flagged
    with rate_defined=False, N=0 and distance = len(hypothesis).
    """
    ref, hyp = _symbol_ids(reference, hypothesis)
    hits, subs, dels, ins = backend.edit_ops(ref, hyp)
    n = len(reference)
    if n > 0:
        rate = (subs + dels + ins) / n
        defined = True
    else:
        rate = math.nan
        defined = False
    return AlignmentResult(
        substitutions=subs,
        deletions=dels,
        insertions=ins,
        hits=hits,
        reference_length=n,
        error_rate=rate,
        rate_defined=defined,
    )


def corpus_error_rate(
    pairs: Sequence[tuple[Sequence[Hashable], Sequence[Hashable]]]
) -> CorpusErrorRate:
    """Pooled rate sum(S+D+I)/sum(N) over all pairs, plus per-file results."""
    if not pairs:
        raise InsufficientDataError("no reference/hypothesis pairs given")
    per_file = tuple(align(ref, hyp) for ref, hyp in pairs)
    total_n = sum(r.reference_length for r in per_file)
    if total_n == 0:
        raise InsufficientDataError("all references are empty; pooled rate undefined")
    total_errors = sum(r.distance for r in per_file)
    return CorpusErrorRate(
        pooled_rate=total_errors / total_n,
        total_errors=total_errors,
        total_reference_length=total_n,
        per_file=per_file,
    )


def normalize_words(text: str) -> list[str]:
    """Lowercase, strip [.,!?;:"], collapse whitespace, split on spaces."""
    return text.lower().translate(_STRIP_TABLE).split()


def read_transcripts(source: str | Path) -> dict[str, str]:
    """Read a UTF-8 transcript file: one utterance per line, `id<ws>text`.

    A line holding only an id maps to an empty transcript. Insertion order
    is preserved.
    """
    out: dict[str, str] = {}
    source = Path(source)
    with open(source, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split(maxsplit=1)
            utt_id = parts[0]
            if utt_id in out:
                raise ValidationError(f"{source}:{lineno}: duplicate id {utt_id!r}")
            out[utt_id] = parts[1] if len(parts) > 1 else ""
    return out
