import json
import shutil
import subprocess

import numpy as np
import pytest
from scipy.io import wavfile


@pytest.fixture(scope="session")
def wav_dir(tmp_path_factory):
    """Deterministic little WAV files: speech-like noise, silence, stereo 8k."""
    root = tmp_path_factory.mktemp("wavs")
    rng = np.random.default_rng(123)
    for idx in range(10):
        # 1 s of band-ish noise with a varying envelope, int16 @ 16 kHz
        t = np.arange(16000) / 16000.0
        envelope = 0.3 + 0.2 * np.sin(2 * np.pi * (1 + idx) * t)
        signal = envelope * rng.normal(0, 0.3, size=16000) + 0.1 * np.sin(
            2 * np.pi * (180 + 15 * idx) * t
        )
        pcm = np.clip(signal, -1, 1)
        wavfile.write(root / f"utt{idx:02d}.wav", 16000, (pcm * 32767).astype(np.int16))
    wavfile.write(root / "silence.wav", 16000, np.zeros(16000, dtype=np.int16))
    wavfile.write(root / "empty.wav", 16000, np.zeros(0, dtype=np.int16))
    stereo = rng.normal(0, 0.2, size=(8000, 2))
    wavfile.write(root / "stereo8k.wav", 8000, (np.clip(stereo, -1, 1) * 32767).astype(np.int16))
    (root / "not-audio.wav").write_bytes(b"this is not audio at all")
    return root


@pytest.fixture(scope="session")
def toy_lockfile(tmp_path_factory):
    path = tmp_path_factory.mktemp("lock") / "checkpoints.lock"
    path.write_text(
        json.dumps(
            {
                "hubert_features": {"provider": "toy"},
                "speechlm_logits": {"provider": "toy"},
                "asr_textlm": {"asr": {"provider": "toy"}, "text_lm": {"provider": "toy"}},
            },
            indent=2,
        )
    )
    return path


@pytest.fixture(scope="session")
def gibscore_bin():
    """The scoring engine's CLI; the only way these tests touch it."""
    path = shutil.which("gibscore")
    if path is None:
        pytest.skip("gibscore CLI not installed; conformance checks need it")
    return path


def run_gibscore(gibscore_bin, *args):
    return subprocess.run(
        [gibscore_bin, *args], capture_output=True, text=True, timeout=120
    )


def read_report_scores(report_path):
    """Parse a gibscore JSONL report into {id: score}."""
    scores = {}
    for line in report_path.read_text().splitlines():
        obj = json.loads(line)
        if obj.get("kind") == "record":
            scores[obj["id"]] = obj["score"]
    return scores
