"""Binary payload formats and the manifest/report text schemas.

All engine I/O goes through the formats defined here; they are also the
sole contract with external feature/logits extractors. Every binary file
is little-endian with a fixed, seekable layout:

    GIBF  magic "GIBF" | version u32=1 | frame_count u64 | dim u32
          | frame_count*dim float32 (row-major)
    GIBT  magic "GIBT" | version u32=1 | length u64 | vocab u32 | dedup u8
          | length u32 tokens
    GIBL  magic "GIBL" | version u32=1 | steps u64 | vocab u32 | normalized u8
          | steps*vocab float32 natural-log probabilities (row-major)
          | steps u32 observed tokens

Manifests and score reports are JSON Lines: one self-describing record per
line, streamable and diff-friendly. Reports are additionally emitted as a
flat tab-separated table for spreadsheet inspection.

Readers are pure and safe to call concurrently; writers need exclusive
access to their destination. All parsed objects are immutable.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Iterable, Mapping, Sequence

import numpy as np

from .errors import CorruptionError, FormatError, ValidationError

FORMAT_VERSION = 1

MAGIC_FEATURES = b"GIBF"
MAGIC_TOKENS = b"GIBT"
MAGIC_LOGITS = b"GIBL"
MAGIC_CODEBOOK = b"GIBC"
MAGIC_NGRAM = b"GIBN"
MAGIC_RECURRENT = b"GIBR"

_MAGIC_KINDS = {
    MAGIC_FEATURES: "features",
    MAGIC_TOKENS: "tokens",
    MAGIC_LOGITS: "logits",
    MAGIC_CODEBOOK: "codebook",
    MAGIC_NGRAM: "ngram",
    MAGIC_RECURRENT: "recurrent",
}

PAYLOAD_KINDS = ("features", "tokens", "logits")

# Sums of exp(row) must land within this tolerance of 1 when a logits
# record claims normalized rows.
ROW_SUM_TOL = 1e-4


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


# ---------------------------------------------------------------------------
# domain types


@dataclass(frozen=True)
class FeatureMatrix:
    """A frames x dim float32 matrix of acoustic features (rows = frames)."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float32)
        if values.ndim != 2:
            raise ValidationError(f"feature matrix must be 2-D, got shape {values.shape}")
        if values.shape[1] < 1:
            raise ValidationError("feature dim must be positive")
        if not np.isfinite(values).all():
            raise ValidationError("feature matrix contains non-finite values")
        object.__setattr__(self, "values", _freeze(np.ascontiguousarray(values)))

    @property
    def frame_count(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class TokenSequence:
    """A sequence of vocabulary indices in [0, vocab_size)."""

    tokens: np.ndarray
    vocab_size: int
    dedup_flag: bool = False

    def __post_init__(self):
        tokens = np.asarray(self.tokens, dtype=np.int64).reshape(-1)
        if self.vocab_size < 1:
            raise ValidationError("vocab_size must be positive")
        if self.vocab_size > 0xFFFFFFFF:
            raise ValidationError("vocab_size exceeds the u32 file format limit")
        if tokens.size and (tokens.min() < 0 or tokens.max() >= self.vocab_size):
            raise ValidationError(
                f"token out of range for vocab_size={self.vocab_size}"
            )
        if self.dedup_flag and tokens.size > 1 and np.any(tokens[1:] == tokens[:-1]):
            raise ValidationError("dedup_flag set but adjacent duplicate tokens present")
        object.__setattr__(self, "tokens", _freeze(np.ascontiguousarray(tokens)))

    def __len__(self) -> int:
        return self.tokens.shape[0]


@dataclass(frozen=True)
class LogitsRecord:
    """Per-step natural-log probabilities with the observed token stream.

    normalized_flag means each row already sums to 1 after exponentiation;
    unnormalized rows get log-softmax-normalized at scoring time.
    """

    log_probs: np.ndarray
    observed: np.ndarray
    normalized_flag: bool

    def __post_init__(self):
        log_probs = np.asarray(self.log_probs, dtype=np.float32)
        observed = np.asarray(self.observed, dtype=np.int64).reshape(-1)
        if log_probs.ndim != 2:
            raise ValidationError(f"log_probs must be 2-D, got shape {log_probs.shape}")
        if log_probs.shape[1] < 1:
            raise ValidationError("vocab_size must be positive")
        if log_probs.shape[0] != observed.shape[0]:
            raise ValidationError(
                f"step mismatch: {log_probs.shape[0]} rows vs {observed.shape[0]} observed tokens"
            )
        if np.isnan(log_probs).any() or np.isposinf(log_probs).any():
            raise ValidationError("log_probs contain NaN or +inf")
        if observed.size and (observed.min() < 0 or observed.max() >= log_probs.shape[1]):
            raise ValidationError("observed token out of range")
        if self.normalized_flag and log_probs.shape[0]:
            sums = np.exp(log_probs.astype(np.float64)).sum(axis=1)
            worst = float(np.abs(sums - 1.0).max())
            if worst > ROW_SUM_TOL:
                raise ValidationError(
                    f"normalized_flag set but a row sum deviates from 1 by {worst:.3g}"
                )
        object.__setattr__(self, "log_probs", _freeze(np.ascontiguousarray(log_probs)))
        object.__setattr__(self, "observed", _freeze(np.ascontiguousarray(observed)))

    @property
    def step_count(self) -> int:
        return self.log_probs.shape[0]

    @property
    def vocab_size(self) -> int:
        return self.log_probs.shape[1]


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    condition: str
    payload_path: str
    payload_kind: str
    reference_metric: float | None = None
    reference_tokens_path: str | None = None

    def __post_init__(self):
        if self.payload_kind not in PAYLOAD_KINDS:
            raise ValidationError(
                f"entry {self.id!r}: unknown payload_kind {self.payload_kind!r}"
            )


@dataclass(frozen=True)
class Manifest:
    """Ordered utterance entries plus the directory relative paths resolve against."""

    entries: tuple[ManifestEntry, ...]
    root: Path

    def resolve(self, entry: ManifestEntry) -> Path:
        return _resolve_path(self.root, entry.payload_path)

    def resolve_reference_tokens(self, entry: ManifestEntry) -> Path | None:
        if entry.reference_tokens_path is None:
            return None
        return _resolve_path(self.root, entry.reference_tokens_path)

    def __iter__(self):
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)


def _resolve_path(root: Path, p: str) -> Path:
    path = Path(p)
    return path if path.is_absolute() else root / path


@dataclass(frozen=True)
class ScoreRecord:
    id: str
    condition: str
    score: float  # cross-entropy, nats per token (lower = less gibberish)
    perplexity: float
    token_count: int
    clamped_steps: int = 0


@dataclass(frozen=True)
class SkippedRecord:
    id: str
    reason: str


@dataclass(frozen=True)
class ConditionSummary:
    condition: str
    mean: float
    stddev: float
    count: int


@dataclass(frozen=True)
class ScoreReport:
    records: tuple[ScoreRecord, ...]
    summaries: tuple[ConditionSummary, ...]
    skipped: tuple[SkippedRecord, ...] = ()
    meta: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        for rec in self.records:
            expected = math.exp(rec.score)
            if abs(rec.perplexity - expected) > 1e-9 * max(abs(expected), 1e-300):
                raise ValidationError(
                    f"record {rec.id!r}: perplexity {rec.perplexity!r} != exp(score)"
                )
        total = sum(s.count for s in self.summaries)
        if total != len(self.records):
            raise ValidationError(
                f"summary counts sum to {total}, expected {len(self.records)}"
            )


def summarize_records(records: Sequence[ScoreRecord]) -> tuple[ConditionSummary, ...]:
    """Per-condition mean/stddev/count, conditions in first-appearance order.

    Population standard deviation, so single-record conditions report 0.
    """
    order: list[str] = []
    groups: dict[str, list[float]] = {}
    for rec in records:
        if rec.condition not in groups:
            order.append(rec.condition)
            groups[rec.condition] = []
        groups[rec.condition].append(rec.score)
    out = []
    for cond in order:
        vals = np.asarray(groups[cond], dtype=np.float64)
        out.append(
            ConditionSummary(
                condition=cond,
                mean=float(vals.mean()),
                stddev=float(vals.std()),
                count=int(vals.size),
            )
        )
    return tuple(out)


# ---------------------------------------------------------------------------
# binary I/O helpers


def _read_exact(f: BinaryIO, n: int, what: str) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise CorruptionError(f"truncated file: expected {n} bytes of {what}, got {len(data)}")
    return data


def _check_magic(f: BinaryIO, expected: bytes) -> None:
    magic = _read_exact(f, 4, "magic")
    if magic != expected:
        found = _MAGIC_KINDS.get(magic)
        detail = f"{found} file" if found else f"unknown magic {magic!r}"
        raise FormatError(
            f"expected {_MAGIC_KINDS[expected]} magic {expected.decode('ascii')}, found {detail}"
        )
    (version,) = struct.unpack("<I", _read_exact(f, 4, "version"))
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {version}")


def _check_eof(f: BinaryIO) -> None:
    if f.read(1):
        raise CorruptionError("trailing bytes after payload")


def probe_kind(path: str | Path) -> str:
    """Identify a file by its magic bytes."""
    with open(path, "rb") as f:
        magic = f.read(4)
    kind = _MAGIC_KINDS.get(magic)
    if kind is None:
        raise FormatError(f"unknown magic {magic!r} in {path}")
    return kind


def write_features(matrix: FeatureMatrix, destination: str | Path) -> None:
    with open(destination, "wb") as f:
        f.write(MAGIC_FEATURES)
        f.write(struct.pack("<IQI", FORMAT_VERSION, matrix.frame_count, matrix.dim))
        f.write(np.ascontiguousarray(matrix.values, dtype="<f4").tobytes())


def read_features(source: str | Path) -> FeatureMatrix:
    with open(source, "rb") as f:
        _check_magic(f, MAGIC_FEATURES)
        frame_count, dim = struct.unpack("<QI", _read_exact(f, 12, "header"))
        if dim < 1:
            raise ValidationError("feature dim must be positive")
        raw = _read_exact(f, frame_count * dim * 4, "feature payload")
        _check_eof(f)
    values = np.frombuffer(raw, dtype="<f4").reshape(frame_count, dim)
    return FeatureMatrix(values=values)


def write_tokens(sequence: TokenSequence, destination: str | Path) -> None:
    with open(destination, "wb") as f:
        f.write(MAGIC_TOKENS)
        f.write(
            struct.pack(
                "<IQIB",
                FORMAT_VERSION,
                len(sequence),
                sequence.vocab_size,
                1 if sequence.dedup_flag else 0,
            )
        )
        f.write(sequence.tokens.astype("<u4").tobytes())


def read_tokens(source: str | Path) -> TokenSequence:
    with open(source, "rb") as f:
        _check_magic(f, MAGIC_TOKENS)
        length, vocab, dedup = struct.unpack("<QIB", _read_exact(f, 13, "header"))
        raw = _read_exact(f, length * 4, "token payload")
        _check_eof(f)
    tokens = np.frombuffer(raw, dtype="<u4").astype(np.int64)
    return TokenSequence(tokens=tokens, vocab_size=vocab, dedup_flag=bool(dedup))


def write_logits(record: LogitsRecord, destination: str | Path) -> None:
    with open(destination, "wb") as f:
        f.write(MAGIC_LOGITS)
        f.write(
            struct.pack(
                "<IQIB",
                FORMAT_VERSION,
                record.step_count,
                record.vocab_size,
                1 if record.normalized_flag else 0,
            )
        )
        f.write(np.ascontiguousarray(record.log_probs, dtype="<f4").tobytes())
        f.write(record.observed.astype("<u4").tobytes())


def read_logits(source: str | Path) -> LogitsRecord:
    with open(source, "rb") as f:
        _check_magic(f, MAGIC_LOGITS)
        steps, vocab, normalized = struct.unpack("<QIB", _read_exact(f, 13, "header"))
        if vocab < 1:
            raise ValidationError("vocab_size must be positive")
        raw = _read_exact(f, steps * vocab * 4, "log-prob payload")
        raw_obs = _read_exact(f, steps * 4, "observed tokens")
        _check_eof(f)
    log_probs = np.frombuffer(raw, dtype="<f4").reshape(steps, vocab)
    observed = np.frombuffer(raw_obs, dtype="<u4").astype(np.int64)
    return LogitsRecord(log_probs=log_probs, observed=observed, normalized_flag=bool(normalized))


# ---------------------------------------------------------------------------
# manifest text schema


def read_manifest(source: str | Path) -> Manifest:
    """Parse a JSON-Lines manifest; one entry object per line.

    Payload files are not probed here: missing files and kind/magic
    mismatches surface when an entry is first used. Unknown keys are
    ignored so manifests can carry extra metadata (frame rate, SSL layer).
    """
    source = Path(source)
    entries: list[ManifestEntry] = []
    seen: set[str] = set()
    with open(source, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{source}:{lineno}: invalid JSON: {exc}") from exc
            if not isinstance(obj, dict):
                raise ValidationError(f"{source}:{lineno}: entry must be an object")
            try:
                entry = ManifestEntry(
                    id=str(obj["id"]),
                    condition=str(obj.get("condition", "default")),
                    payload_path=str(obj["payload_path"]),
                    payload_kind=str(obj["payload_kind"]),
                    reference_metric=(
                        None if obj.get("reference_metric") is None else float(obj["reference_metric"])
                    ),
                    reference_tokens_path=(
                        None
                        if obj.get("reference_tokens_path") is None
                        else str(obj["reference_tokens_path"])
                    ),
                )
            except KeyError as exc:
                raise ValidationError(f"{source}:{lineno}: missing field {exc}") from exc
            if entry.id in seen:
                raise ValidationError(f"{source}:{lineno}: duplicate id {entry.id!r}")
            seen.add(entry.id)
            entries.append(entry)
    return Manifest(entries=tuple(entries), root=source.parent)


def write_manifest(entries: Iterable[ManifestEntry], destination: str | Path) -> None:
    with open(destination, "w", encoding="utf-8") as f:
        for entry in entries:
            obj: dict[str, object] = {
                "id": entry.id,
                "condition": entry.condition,
                "payload_path": entry.payload_path,
                "payload_kind": entry.payload_kind,
            }
            if entry.reference_metric is not None:
                obj["reference_metric"] = entry.reference_metric
            if entry.reference_tokens_path is not None:
                obj["reference_tokens_path"] = entry.reference_tokens_path
            f.write(json.dumps(obj, separators=(",", ":")) + "\n")


def check_payload_kind(manifest: Manifest, entry: ManifestEntry) -> Path:
    """Resolve an entry's payload and verify the declared kind against the magic."""
    path = manifest.resolve(entry)
    kind = probe_kind(path)
    if kind != entry.payload_kind:
        raise ValidationError(
            f"entry {entry.id!r}: payload_kind {entry.payload_kind!r} but file is {kind!r}"
        )
    return path


# ---------------------------------------------------------------------------
# score report schema

_LN2 = math.log(2.0)
REPORT_SCHEMA = "gibscore-report"
SCORE_POLARITY = "lower_is_better"


def write_report(
    report: ScoreReport, destination: str | Path, table_destination: str | Path | None = None
) -> None:
    """Emit the JSONL machine schema, plus an optional flat TSV table.

    Scores are nats/token; a bits/token column is included for convenience.
    The meta line records the score polarity so downstream analysis knows
    lower values mean less gibberish.
    """
    with open(destination, "w", encoding="utf-8") as f:
        meta: dict[str, object] = {
            "kind": "meta",
            "schema": REPORT_SCHEMA,
            "version": 1,
            "score_polarity": SCORE_POLARITY,
        }
        meta.update(report.meta)
        f.write(json.dumps(meta, separators=(",", ":")) + "\n")
        for rec in report.records:
            f.write(
                json.dumps(
                    {
                        "kind": "record",
                        "id": rec.id,
                        "condition": rec.condition,
                        "score": rec.score,
                        "bits_per_token": rec.score / _LN2,
                        "perplexity": rec.perplexity,
                        "token_count": rec.token_count,
                        "clamped_steps": rec.clamped_steps,
                    },
                    separators=(",", ":"),
                )
                + "\n"
            )
        for skip in report.skipped:
            f.write(
                json.dumps(
                    {"kind": "skip", "id": skip.id, "reason": skip.reason},
                    separators=(",", ":"),
                )
                + "\n"
            )
        for s in report.summaries:
            f.write(
                json.dumps(
                    {
                        "kind": "summary",
                        "condition": s.condition,
                        "mean": s.mean,
                        "stddev": s.stddev,
                        "count": s.count,
                    },
                    separators=(",", ":"),
                )
                + "\n"
            )
    if table_destination is not None:
        with open(table_destination, "w", encoding="utf-8") as f:
            f.write("id\tcondition\tscore\tbits_per_token\tperplexity\ttoken_count\n")
            for rec in report.records:
                f.write(
                    f"{rec.id}\t{rec.condition}\t{rec.score!r}\t{rec.score / _LN2!r}"
                    f"\t{rec.perplexity!r}\t{rec.token_count}\n"
                )


def read_report(source: str | Path) -> ScoreReport:
    records: list[ScoreRecord] = []
    skipped: list[SkippedRecord] = []
    summaries: list[ConditionSummary] = []
    meta: dict[str, object] = {}
    with open(source, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{source}:{lineno}: invalid JSON: {exc}") from exc
            kind = obj.get("kind")
            if kind == "meta":
                if obj.get("schema") != REPORT_SCHEMA:
                    raise FormatError(f"{source}: not a {REPORT_SCHEMA} file")
                meta = {
                    k: v for k, v in obj.items() if k not in ("kind", "schema", "version")
                }
            elif kind == "record":
                records.append(
                    ScoreRecord(
                        id=str(obj["id"]),
                        condition=str(obj["condition"]),
                        score=float(obj["score"]),
                        perplexity=float(obj["perplexity"]),
                        token_count=int(obj["token_count"]),
                        clamped_steps=int(obj.get("clamped_steps", 0)),
                    )
                )
            elif kind == "skip":
                skipped.append(SkippedRecord(id=str(obj["id"]), reason=str(obj["reason"])))
            elif kind == "summary":
                summaries.append(
                    ConditionSummary(
                        condition=str(obj["condition"]),
                        mean=float(obj["mean"]),
                        stddev=float(obj["stddev"]),
                        count=int(obj["count"]),
                    )
                )
            else:
                raise ValidationError(f"{source}:{lineno}: unknown record kind {kind!r}")
    return ScoreReport(
        records=tuple(records), summaries=tuple(summaries), skipped=tuple(skipped), meta=meta
    )
