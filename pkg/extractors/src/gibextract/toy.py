"""Deterministic stand-in models (lockfile provider "toy").

These run the exact extraction pipelines against fixed-seed numpy weights,
so format conformance and dual-path score agreement can be validated
end-to-end in environments where no checkpoint can be downloaded. They are
not meant to produce meaningful scores.
"""

from __future__ import annotations

import numpy as np

_SEED = 0xC0FFEE


def _log_softmax(rows: np.ndarray) -> np.ndarray:
    shifted = rows - rows.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def _frame(wav: np.ndarray, window: int, stride: int) -> np.ndarray:
    if wav.shape[0] < window:
        return np.zeros((0, window))
    count = 1 + (wav.shape[0] - window) // stride
    out = np.empty((count, window))
    for i in range(count):
        out[i] = wav[i * stride : i * stride + window]
    return out


class ToyFeatureEncoder:
    """Two stacked tanh projections over 25 ms windows at a 20 ms stride."""

    stride = 320  # samples per frame at 16 kHz
    window = 400
    dim = 12
    layer_count = 2

    def __init__(self):
        rng = np.random.default_rng(_SEED)
        self._w0 = rng.normal(0.0, 0.05, size=(self.window, self.dim))
        self._w1 = rng.normal(0.0, 0.3, size=(self.dim, self.dim))

    def encode(self, wav: np.ndarray, layer: int) -> np.ndarray:
        if not 0 <= layer < self.layer_count:
            raise ValueError(f"layer must be in [0, {self.layer_count}), got {layer}")
        frames = _frame(wav, self.window, self.stride)
        hidden = np.tanh(frames @ self._w0)
        if layer == 1:
            hidden = np.tanh(hidden @ self._w1)
        return hidden.astype(np.float32)


class ToySpeechLM:
    """Amplitude-quantizing unit tokenizer + a fixed bigram table."""

    vocab_size = 32
    stride = 320

    def __init__(self):
        rng = np.random.default_rng(_SEED + 1)
        # row v = logits for the token following v; last row is BOS context
        self._table = rng.normal(0.0, 1.0, size=(self.vocab_size + 1, self.vocab_size))

    def tokenize(self, wav: np.ndarray) -> np.ndarray:
        frames = _frame(wav, self.stride, self.stride)
        if frames.shape[0] == 0:
            return np.zeros(0, dtype=np.int64)
        level = np.abs(frames).mean(axis=1)
        return np.minimum((level * 64.0).astype(np.int64), self.vocab_size - 1)

    def step_log_probs(self, tokens: np.ndarray) -> np.ndarray:
        contexts = np.empty(tokens.shape[0], dtype=np.int64)
        contexts[0] = self.vocab_size  # BOS
        contexts[1:] = tokens[:-1]
        return _log_softmax(self._table[contexts])


class ToyAsr:
    """Maps coarse per-segment loudness onto a tiny closed vocabulary."""

    words = ("the", "quick", "speech", "sounds", "like", "words", "maybe", "noise")

    def transcribe(self, wav: np.ndarray) -> str:
        if wav.shape[0] == 0:
            return ""
        rms = float(np.sqrt(np.mean(wav**2)))
        if rms < 1e-4:
            return ""
        segments = np.array_split(wav, max(1, min(6, wav.shape[0] // 3200)))
        picks = [
            self.words[int(np.sqrt(np.mean(seg**2)) * 997) % len(self.words)]
            for seg in segments
            if seg.size
        ]
        return " ".join(picks)


class ToyTextLM:
    """Byte-level text model with a fixed bigram table (vocab 256)."""

    vocab_size = 256

    def __init__(self):
        rng = np.random.default_rng(_SEED + 2)
        self._table = rng.normal(0.0, 1.0, size=(self.vocab_size + 1, self.vocab_size))

    def encode_text(self, text: str) -> np.ndarray:
        return np.frombuffer(text.encode("utf-8"), dtype=np.uint8).astype(np.int64)

    def step_log_probs(self, ids: np.ndarray) -> np.ndarray:
        contexts = np.empty(ids.shape[0], dtype=np.int64)
        contexts[0] = self.vocab_size  # BOS
        contexts[1:] = ids[:-1]
        return _log_softmax(self._table[contexts])
