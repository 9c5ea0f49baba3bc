"""Secondary acceptance: every emitted file passes the scoring engine's
validators, and the engine's external scores agree with the extractor's
internal cross-entropy within 1e-4 nats/token on a 10-file smoke set.
Runs entirely on the deterministic toy provider; the same checks against
real pinned checkpoints live in test_pretrained.py (opt-in)."""

import pytest

from gibextract.extract import asr_textlm_score, extract_features, extract_logits
from gibextract.jobs import ExtractorJob
from conftest import read_report_scores, run_gibscore


@pytest.fixture(scope="module")
def smoke_wavs(wav_dir):
    return tuple(sorted(wav_dir.glob("utt*.wav")))


def test_every_emitted_file_passes_engine_check(smoke_wavs, toy_lockfile, tmp_path, gibscore_bin):
    feature_job = ExtractorJob(
        model_id="hubert_features",
        inputs=smoke_wavs,
        output_dir=tmp_path / "features",
        layer=1,
        lockfile=toy_lockfile,
    )
    logits_job = ExtractorJob(
        model_id="speechlm_logits",
        inputs=smoke_wavs,
        output_dir=tmp_path / "logits",
        lockfile=toy_lockfile,
    )
    feature_result = extract_features(feature_job)
    logits_result = extract_logits(logits_job)
    assert len(feature_result.written) == 10
    assert len(logits_result.written) == 10
    targets = [str(p) for p in feature_result.written + logits_result.written]
    targets += [str(feature_result.manifest_path), str(logits_result.manifest_path)]
    proc = run_gibscore(gibscore_bin, "check", *targets)
    assert proc.returncode == 0, proc.stderr
    assert proc.stdout.count("OK") == len(targets)


def test_dual_path_speechlm_scores_agree(smoke_wavs, toy_lockfile, tmp_path, gibscore_bin):
    job = ExtractorJob(
        model_id="speechlm_logits",
        inputs=smoke_wavs,
        output_dir=tmp_path,
        lockfile=toy_lockfile,
    )
    result = extract_logits(job)
    assert len(result.internal_scores) == 10
    proc = run_gibscore(
        gibscore_bin,
        "score",
        "--external",
        "--manifest",
        str(result.manifest_path),
        "--out",
        str(tmp_path / "report"),
    )
    assert proc.returncode == 0, proc.stderr
    engine_scores = read_report_scores(tmp_path / "report.jsonl")
    assert set(engine_scores) == set(result.internal_scores)
    for utt_id, internal in result.internal_scores.items():
        assert abs(engine_scores[utt_id] - internal) < 1e-4, utt_id


def test_dual_path_textlm_scores_agree(smoke_wavs, toy_lockfile, tmp_path, gibscore_bin):
    job = ExtractorJob(
        model_id="asr_textlm",
        inputs=smoke_wavs,
        output_dir=tmp_path,
        lockfile=toy_lockfile,
    )
    result = asr_textlm_score(job)
    assert result.internal_scores  # at least the loud files transcribe
    proc = run_gibscore(
        gibscore_bin,
        "score",
        "--external",
        "--manifest",
        str(result.manifest_path),
        "--out",
        str(tmp_path / "report"),
    )
    assert proc.returncode == 0, proc.stderr
    engine_scores = read_report_scores(tmp_path / "report.jsonl")
    for utt_id, internal in result.internal_scores.items():
        assert abs(engine_scores[utt_id] - internal) < 1e-4, utt_id


def test_transcripts_round_trip_through_engine_error_rate(
    smoke_wavs, toy_lockfile, tmp_path, gibscore_bin
):
    job = ExtractorJob(
        model_id="asr_textlm",
        inputs=smoke_wavs,
        output_dir=tmp_path,
        lockfile=toy_lockfile,
    )
    result = asr_textlm_score(job)
    proc = run_gibscore(
        gibscore_bin,
        "error-rate",
        "--ref-manifest",
        str(result.transcripts_path),
        "--hyp-manifest",
        str(result.transcripts_path),
        "--unit",
        "word",
        "--out",
        str(tmp_path / "wer.jsonl"),
    )
    assert proc.returncode == 0, proc.stderr
    assert "0.0000" in proc.stdout  # identical ref/hyp -> zero error rate
