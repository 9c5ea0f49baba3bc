import numpy as np
import pytest

from gibextract.formats import (
    read_features,
    read_logits,
    read_tokens,
    write_features,
    write_logits,
    write_manifest,
    write_tokens,
)
from conftest import run_gibscore


def test_feature_round_trip(tmp_path):
    values = np.random.default_rng(0).normal(size=(17, 5)).astype(np.float32)
    write_features(values, tmp_path / "a.gibf")
    assert np.array_equal(read_features(tmp_path / "a.gibf"), values)


def test_token_round_trip(tmp_path):
    tokens = np.array([4, 0, 9, 9, 2], dtype=np.int64)
    write_tokens(tokens, 10, tmp_path / "a.gibt")
    back, vocab = read_tokens(tmp_path / "a.gibt")
    assert back.tolist() == tokens.tolist() and vocab == 10


def test_logits_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    raw = rng.normal(size=(6, 4)).astype(np.float64)
    rows = (raw - np.log(np.exp(raw).sum(axis=1, keepdims=True))).astype(np.float32)
    observed = rng.integers(0, 4, size=6)
    write_logits(rows, observed, tmp_path / "a.gibl", normalized=True)
    rows_back, observed_back, normalized = read_logits(tmp_path / "a.gibl")
    assert np.array_equal(rows_back, rows)
    assert observed_back.tolist() == observed.tolist()
    assert normalized


def test_atomic_write_leaves_no_temp(tmp_path):
    write_features(np.zeros((2, 2), dtype=np.float32), tmp_path / "a.gibf")
    assert [p.name for p in tmp_path.iterdir()] == ["a.gibf"]


def test_nonfinite_features_rejected(tmp_path):
    with pytest.raises(ValueError):
        write_features(np.array([[np.nan]], dtype=np.float32), tmp_path / "a.gibf")


def test_out_of_range_tokens_rejected(tmp_path):
    with pytest.raises(ValueError):
        write_tokens(np.array([5]), 5, tmp_path / "a.gibt")


def test_emitted_files_pass_engine_validation(tmp_path, gibscore_bin):
    rng = np.random.default_rng(2)
    write_features(rng.normal(size=(8, 3)).astype(np.float32), tmp_path / "x.gibf")
    write_tokens(rng.integers(0, 7, size=12), 7, tmp_path / "x.gibt")
    raw = rng.normal(size=(5, 6))
    rows = (raw - np.log(np.exp(raw).sum(axis=1, keepdims=True))).astype(np.float32)
    write_logits(rows, rng.integers(0, 6, size=5), tmp_path / "x.gibl", normalized=True)
    write_manifest(
        [
            {"id": "x", "condition": "c", "payload_path": "x.gibl", "payload_kind": "logits"},
        ],
        tmp_path / "manifest.jsonl",
    )
    proc = run_gibscore(
        gibscore_bin,
        "check",
        str(tmp_path / "x.gibf"),
        str(tmp_path / "x.gibt"),
        str(tmp_path / "x.gibl"),
        str(tmp_path / "manifest.jsonl"),
    )
    assert proc.returncode == 0, proc.stderr
    assert proc.stdout.count("OK") == 4
