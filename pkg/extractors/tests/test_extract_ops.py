import json
import math

import numpy as np
import pytest

from gibextract.audio import load_audio_16k
from gibextract.errors import AudioDecodeError, LockfileError
from gibextract.extract import asr_textlm_score, extract_features, extract_logits
from gibextract.formats import read_features, read_logits
from gibextract.jobs import ExtractorJob
from gibextract.lockfile import load_lockfile
from gibextract.toy import ToyFeatureEncoder


class TestAudio:
    def test_int16_mono_passthrough(self, wav_dir):
        wav = load_audio_16k(wav_dir / "utt00.wav")
        assert wav.shape == (16000,)
        assert np.abs(wav).max() <= 1.0

    def test_stereo_8k_resampled_to_mono_16k(self, wav_dir):
        wav = load_audio_16k(wav_dir / "stereo8k.wav")
        assert wav.ndim == 1
        assert wav.shape[0] == 16000  # 8000 samples upsampled x2

    def test_undecodable_raises(self, wav_dir):
        with pytest.raises(AudioDecodeError):
            load_audio_16k(wav_dir / "not-audio.wav")


class TestJobValidation:
    def test_layer_required_for_features(self, wav_dir, toy_lockfile):
        with pytest.raises(ValueError, match="layer"):
            ExtractorJob(
                model_id="hubert_features",
                inputs=(wav_dir / "utt00.wav",),
                output_dir=wav_dir,
                lockfile=toy_lockfile,
            )

    def test_layer_rejected_elsewhere(self, wav_dir, toy_lockfile):
        with pytest.raises(ValueError):
            ExtractorJob(
                model_id="speechlm_logits",
                inputs=(wav_dir / "utt00.wav",),
                output_dir=wav_dir,
                layer=3,
                lockfile=toy_lockfile,
            )

    def test_unknown_model_id(self, wav_dir):
        with pytest.raises(ValueError):
            ExtractorJob(
                model_id="quantum", inputs=(wav_dir / "utt00.wav",), output_dir=wav_dir
            )


class TestLockfile:
    def test_toy_lockfile_loads(self, toy_lockfile):
        lock = load_lockfile(toy_lockfile)
        assert lock["hubert_features"]["provider"] == "toy"

    def test_missing_file(self, tmp_path):
        with pytest.raises(LockfileError):
            load_lockfile(tmp_path / "nope.lock")

    def test_bad_provider(self, tmp_path):
        path = tmp_path / "bad.lock"
        path.write_text(json.dumps({"hubert_features": {"provider": "carrier-pigeon"}}))
        with pytest.raises(LockfileError):
            load_lockfile(path)

    def test_transformers_entry_needs_revision(self, tmp_path):
        path = tmp_path / "bad.lock"
        path.write_text(
            json.dumps({"hubert_features": {"provider": "transformers", "model_id": "x"}})
        )
        with pytest.raises(LockfileError):
            load_lockfile(path)

    def test_shipped_lockfile_is_valid(self):
        from pathlib import Path

        shipped = Path(__file__).resolve().parents[1] / "checkpoints.lock"
        lock = load_lockfile(shipped)
        assert lock["asr_textlm"]["text_lm"]["provider"] == "transformers"


class TestExtractFeatures:
    def _job(self, wav_dir, toy_lockfile, out, inputs, layer=1):
        return ExtractorJob(
            model_id="hubert_features",
            inputs=tuple(inputs),
            output_dir=out,
            layer=layer,
            condition="clean",
            lockfile=toy_lockfile,
        )

    def test_stride_arithmetic_one_second(self, wav_dir, toy_lockfile, tmp_path):
        job = self._job(wav_dir, toy_lockfile, tmp_path, [wav_dir / "utt00.wav"])
        result = extract_features(job)
        assert not result.skips
        features = read_features(result.written[0])
        encoder = ToyFeatureEncoder()
        expected = 16000 / encoder.stride  # 1 s through a 20 ms-stride model
        assert abs(features.shape[0] - expected) <= 1
        assert features.shape[1] == encoder.dim

    def test_zero_length_audio_is_skipped(self, wav_dir, toy_lockfile, tmp_path):
        job = self._job(wav_dir, toy_lockfile, tmp_path, [wav_dir / "empty.wav"])
        result = extract_features(job)
        assert not result.written
        assert result.skips[0].reason == "zero-length audio"

    def test_undecodable_audio_is_skipped_with_reason(self, wav_dir, toy_lockfile, tmp_path):
        job = self._job(
            wav_dir, toy_lockfile, tmp_path, [wav_dir / "not-audio.wav", wav_dir / "utt01.wav"]
        )
        result = extract_features(job)
        assert len(result.written) == 1
        assert "not-audio" in result.skips[0].id

    def test_same_file_twice_identical_bytes(self, wav_dir, toy_lockfile, tmp_path):
        a_dir, b_dir = tmp_path / "a", tmp_path / "b"
        for out in (a_dir, b_dir):
            extract_features(self._job(wav_dir, toy_lockfile, out, [wav_dir / "utt02.wav"]))
        assert (a_dir / "utt02.gibf").read_bytes() == (b_dir / "utt02.gibf").read_bytes()

    def test_layers_differ(self, wav_dir, toy_lockfile, tmp_path):
        r0 = extract_features(
            self._job(wav_dir, toy_lockfile, tmp_path / "l0", [wav_dir / "utt03.wav"], layer=0)
        )
        r1 = extract_features(
            self._job(wav_dir, toy_lockfile, tmp_path / "l1", [wav_dir / "utt03.wav"], layer=1)
        )
        a = read_features(r0.written[0])
        b = read_features(r1.written[0])
        assert a.shape == b.shape and not np.array_equal(a, b)

    def test_manifest_written_with_condition(self, wav_dir, toy_lockfile, tmp_path):
        job = self._job(wav_dir, toy_lockfile, tmp_path, [wav_dir / "utt04.wav"])
        result = extract_features(job)
        entry = json.loads(result.manifest_path.read_text().splitlines()[0])
        assert entry == {
            "id": "utt04",
            "condition": "clean",
            "payload_path": "utt04.gibf",
            "payload_kind": "features",
        }


class TestExtractLogits:
    def test_rows_normalized_and_tokens_in_range(self, wav_dir, toy_lockfile, tmp_path):
        job = ExtractorJob(
            model_id="speechlm_logits",
            inputs=(wav_dir / "utt00.wav", wav_dir / "utt01.wav"),
            output_dir=tmp_path,
            lockfile=toy_lockfile,
        )
        result = extract_logits(job)
        assert len(result.written) == 2
        for path in result.written:
            rows, observed, normalized = read_logits(path)
            assert normalized
            sums = np.exp(rows.astype(np.float64)).sum(axis=1)
            assert np.abs(sums - 1.0).max() < 1e-4
            assert observed.max() < rows.shape[1]

    def test_gibt_inputs_accepted(self, toy_lockfile, tmp_path):
        from gibextract.formats import write_tokens
        from gibextract.toy import ToySpeechLM

        tokens = np.array([3, 1, 4, 1, 5], dtype=np.int64)
        write_tokens(tokens, ToySpeechLM.vocab_size, tmp_path / "pre.gibt")
        job = ExtractorJob(
            model_id="speechlm_logits",
            inputs=(tmp_path / "pre.gibt",),
            output_dir=tmp_path / "out",
            lockfile=toy_lockfile,
        )
        result = extract_logits(job)
        rows, observed, _ = read_logits(result.written[0])
        assert observed.tolist() == tokens.tolist()

    def test_internal_score_is_finite_positive(self, wav_dir, toy_lockfile, tmp_path):
        job = ExtractorJob(
            model_id="speechlm_logits",
            inputs=(wav_dir / "utt05.wav",),
            output_dir=tmp_path,
            lockfile=toy_lockfile,
        )
        result = extract_logits(job)
        score = result.internal_scores["utt05"]
        assert math.isfinite(score) and score > 0


class TestAsrTextLm:
    def test_silent_audio_empty_transcript_skip(self, wav_dir, toy_lockfile, tmp_path):
        job = ExtractorJob(
            model_id="asr_textlm",
            inputs=(wav_dir / "silence.wav", wav_dir / "utt06.wav"),
            output_dir=tmp_path,
            lockfile=toy_lockfile,
        )
        result = asr_textlm_score(job)
        assert [s.id for s in result.skips] == ["silence"]
        assert result.skips[0].reason == "empty transcript"
        lines = dict(
            line.split("\t", 1) if "\t" in line else (line, "")
            for line in result.transcripts_path.read_text().splitlines()
        )
        assert lines["silence"] == ""
        assert lines["utt06"].strip()
        assert len(result.written) == 1  # only the non-empty transcript scored

    def test_job_report_records_skips_and_scores(self, wav_dir, toy_lockfile, tmp_path):
        job = ExtractorJob(
            model_id="asr_textlm",
            inputs=(wav_dir / "silence.wav", wav_dir / "utt07.wav"),
            output_dir=tmp_path,
            lockfile=toy_lockfile,
        )
        result = asr_textlm_score(job)
        result.write_job_report(job, tmp_path / "job-report.json")
        report = json.loads((tmp_path / "job-report.json").read_text())
        assert report["model_id"] == "asr_textlm"
        assert report["skipped"][0]["id"] == "silence"
        assert "utt07" in report["internal_scores_nats_per_token"]
