"""The three extraction pipelines: features, speech-LM logits, ASR + text LM.

Each takes an ExtractorJob, runs per-file (failures become skip records,
never aborts), and emits payload files plus a manifest in the scoring
engine's formats. Logit-producing jobs also record an internal
cross-entropy per utterance, computed from the exact float32 rows written
to disk, so an external harness can assert dual-path agreement with the
scoring engine.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio import load_audio_16k
from .errors import AudioDecodeError, ExtractError
from .formats import (
    write_features,
    write_logits,
    write_manifest,
    write_transcripts,
    read_tokens,
)
from .jobs import ExtractorJob, SkipRecord
from .lockfile import load_lockfile, require_entry
from .models import resolve_asr_textlm, resolve_feature_encoder, resolve_speechlm


@dataclass
class ExtractResult:
    manifest_path: Path
    written: list[Path] = field(default_factory=list)
    skips: list[SkipRecord] = field(default_factory=list)
    internal_scores: dict[str, float] = field(default_factory=dict)
    transcripts_path: Path | None = None

    def write_job_report(self, job: ExtractorJob, destination: Path) -> None:
        payload = {
            "model_id": job.model_id,
            "layer": job.layer,
            "condition": job.condition,
            "written": [p.name for p in self.written],
            "skipped": [{"id": s.id, "reason": s.reason} for s in self.skips],
            "internal_scores_nats_per_token": self.internal_scores,
        }
        with open(destination, "w", encoding="utf-8") as f:
            json.dump(payload, f, indent=2, sort_keys=True)
            f.write("\n")


def _manifest_entry(job: ExtractorJob, utt_id: str, filename: str, kind: str) -> dict:
    return {
        "id": utt_id,
        "condition": job.condition,
        "payload_path": filename,
        "payload_kind": kind,
    }


def extract_features(job: ExtractorJob, encoder=None) -> ExtractResult:
    """One GIBF per decodable utterance at the requested SSL layer."""
    if encoder is None:
        encoder = resolve_feature_encoder(
            require_entry(load_lockfile(job.lockfile), "hubert_features"), job.device
        )
    job.output_dir.mkdir(parents=True, exist_ok=True)
    result = ExtractResult(manifest_path=job.output_dir / "manifest.jsonl")
    entries = []
    for path in job.inputs:
        utt_id = path.stem
        try:
            wav = load_audio_16k(path)
        except AudioDecodeError as exc:
            result.skips.append(SkipRecord(utt_id, str(exc)))
            continue
        if wav.shape[0] == 0:
            result.skips.append(SkipRecord(utt_id, "zero-length audio"))
            continue
        features = encoder.encode(wav, job.layer)
        if features.shape[0] == 0:
            result.skips.append(SkipRecord(utt_id, "audio shorter than one analysis frame"))
            continue
        out = job.output_dir / f"{utt_id}.gibf"
        write_features(features, out)
        result.written.append(out)
        entries.append(_manifest_entry(job, utt_id, out.name, "features"))
    write_manifest(entries, result.manifest_path)
    return result


def _score_rows(rows32: np.ndarray, tokens: np.ndarray) -> float:
    gathered = rows32.astype(np.float64)[np.arange(tokens.shape[0]), tokens]
    return -float(gathered.mean())


def extract_logits(job: ExtractorJob, speechlm=None) -> ExtractResult:
    """Per-step log-probs over the model's unit vocabulary, one GIBL per file.

    Inputs may be audio (tokenized by the model's own quantizer) or GIBT
    unit-token files produced elsewhere.
    """
    if speechlm is None:
        speechlm = resolve_speechlm(
            require_entry(load_lockfile(job.lockfile), "speechlm_logits"), job.device
        )
    job.output_dir.mkdir(parents=True, exist_ok=True)
    result = ExtractResult(manifest_path=job.output_dir / "manifest.jsonl")
    entries = []
    for path in job.inputs:
        utt_id = path.stem
        try:
            if path.suffix == ".gibt":
                tokens, vocab = read_tokens(path)
                if vocab != speechlm.vocab_size:
                    result.skips.append(
                        SkipRecord(utt_id, f"token vocab {vocab} != model vocab {speechlm.vocab_size}")
                    )
                    continue
            else:
                tokens = speechlm.tokenize(load_audio_16k(path))
        except (AudioDecodeError, ExtractError, ValueError) as exc:
            result.skips.append(SkipRecord(utt_id, str(exc)))
            continue
        if tokens.shape[0] == 0:
            result.skips.append(SkipRecord(utt_id, "no unit tokens"))
            continue
        rows = speechlm.step_log_probs(tokens).astype(np.float32)
        out = job.output_dir / f"{utt_id}.gibl"
        write_logits(rows, tokens, out, normalized=True)
        result.written.append(out)
        result.internal_scores[utt_id] = _score_rows(rows, tokens)
        entries.append(_manifest_entry(job, utt_id, out.name, "logits"))
    write_manifest(entries, result.manifest_path)
    return result


def asr_textlm_score(job: ExtractorJob, asr=None, text_lm=None) -> ExtractResult:
    """Transcribe audio, then dump text-token log-probs scoreable downstream.

    Emits transcripts.txt (one `id<TAB>text` line per utterance, including
    empty transcripts, which are flagged as skips and not scored) plus one
    GIBL over text-token ids per non-empty transcript.
    """
    if asr is None or text_lm is None:
        entry = require_entry(load_lockfile(job.lockfile), "asr_textlm")
        asr, text_lm = resolve_asr_textlm(entry, job.device)
    job.output_dir.mkdir(parents=True, exist_ok=True)
    result = ExtractResult(
        manifest_path=job.output_dir / "manifest.jsonl",
        transcripts_path=job.output_dir / "transcripts.txt",
    )
    entries = []
    transcripts: dict[str, str] = {}
    for path in job.inputs:
        utt_id = path.stem
        try:
            wav = load_audio_16k(path)
        except AudioDecodeError as exc:
            result.skips.append(SkipRecord(utt_id, str(exc)))
            continue
        text = asr.transcribe(wav)
        transcripts[utt_id] = text
        if not text.strip():
            result.skips.append(SkipRecord(utt_id, "empty transcript"))
            continue
        ids = text_lm.encode_text(text)
        if ids.shape[0] == 0:
            result.skips.append(SkipRecord(utt_id, "transcript tokenized to nothing"))
            continue
        rows = text_lm.step_log_probs(ids).astype(np.float32)
        out = job.output_dir / f"{utt_id}.gibl"
        write_logits(rows, ids, out, normalized=True)
        result.written.append(out)
        result.internal_scores[utt_id] = _score_rows(rows, ids)
        entries.append(_manifest_entry(job, utt_id, out.name, "logits"))
    write_transcripts(transcripts, result.transcripts_path)
    write_manifest(entries, result.manifest_path)
    return result


def perplexity_of(nats_per_token: float) -> float:
    return math.exp(nats_per_token)
