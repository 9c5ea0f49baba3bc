"""Writers for the gibscore interchange contract.

Implemented against the documented byte layouts, deliberately without
importing the scoring engine: the files are the interface. All binary
files are little-endian; a u32 format version 1 follows each 4-byte magic.

    GIBF  frame_count u64, dim u32, then frame_count*dim f32 row-major
    GIBT  length u64, vocab u32, dedup u8, then length u32 tokens
    GIBL  steps u64, vocab u32, normalized u8, then steps*vocab f32
          natural-log probabilities, then steps u32 observed tokens

Every write goes to a temp file in the destination directory followed by
an atomic rename, so concurrent batch jobs never expose partial files.
Minimal readers are included for self-checks and tests.
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

FORMAT_VERSION = 1


def _atomic_write(destination: Path, payload: bytes) -> None:
    destination = Path(destination)
    tmp = destination.with_name(destination.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(payload)
        f.flush()
        os.fsync(f.fileno())
    os.replace(tmp, destination)


def write_features(values: np.ndarray, destination: Path) -> None:
    values = np.ascontiguousarray(values, dtype="<f4")
    if values.ndim != 2:
        raise ValueError(f"features must be 2-D, got {values.shape}")
    if not np.isfinite(values).all():
        raise ValueError("features contain non-finite values")
    header = b"GIBF" + struct.pack("<IQI", FORMAT_VERSION, values.shape[0], values.shape[1])
    _atomic_write(destination, header + values.tobytes())


def write_tokens(tokens: np.ndarray, vocab_size: int, destination: Path, dedup: bool = False) -> None:
    tokens = np.ascontiguousarray(tokens, dtype=np.int64)
    if tokens.size and (tokens.min() < 0 or tokens.max() >= vocab_size):
        raise ValueError("token out of range")
    header = b"GIBT" + struct.pack(
        "<IQIB", FORMAT_VERSION, tokens.shape[0], vocab_size, 1 if dedup else 0
    )
    _atomic_write(destination, header + tokens.astype("<u4").tobytes())


def write_logits(
    log_probs: np.ndarray, observed: np.ndarray, destination: Path, normalized: bool = True
) -> None:
    log_probs = np.ascontiguousarray(log_probs, dtype="<f4")
    observed = np.ascontiguousarray(observed, dtype=np.int64)
    if log_probs.ndim != 2 or log_probs.shape[0] != observed.shape[0]:
        raise ValueError("log_probs and observed must agree on step count")
    if observed.size and (observed.min() < 0 or observed.max() >= log_probs.shape[1]):
        raise ValueError("observed token out of range")
    header = b"GIBL" + struct.pack(
        "<IQIB", FORMAT_VERSION, log_probs.shape[0], log_probs.shape[1], 1 if normalized else 0
    )
    _atomic_write(destination, header + log_probs.tobytes() + observed.astype("<u4").tobytes())


def read_logits(source: Path) -> tuple[np.ndarray, np.ndarray, bool]:
    with open(source, "rb") as f:
        magic = f.read(4)
        if magic != b"GIBL":
            raise ValueError(f"not a GIBL file: magic {magic!r}")
        version, steps, vocab, normalized = struct.unpack("<IQIB", f.read(17))
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported version {version}")
        rows = np.frombuffer(f.read(steps * vocab * 4), dtype="<f4").reshape(steps, vocab)
        observed = np.frombuffer(f.read(steps * 4), dtype="<u4").astype(np.int64)
    return rows, observed, bool(normalized)


def read_tokens(source: Path) -> tuple[np.ndarray, int]:
    with open(source, "rb") as f:
        magic = f.read(4)
        if magic != b"GIBT":
            raise ValueError(f"not a GIBT file: magic {magic!r}")
        version, length, vocab, _dedup = struct.unpack("<IQIB", f.read(17))
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported version {version}")
        tokens = np.frombuffer(f.read(length * 4), dtype="<u4").astype(np.int64)
    return tokens, int(vocab)


def read_features(source: Path) -> np.ndarray:
    with open(source, "rb") as f:
        magic = f.read(4)
        if magic != b"GIBF":
            raise ValueError(f"not a GIBF file: magic {magic!r}")
        version, frames, dim = struct.unpack("<IQI", f.read(16))
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported version {version}")
        return np.frombuffer(f.read(frames * dim * 4), dtype="<f4").reshape(frames, dim)


def write_manifest(entries: Iterable[Mapping[str, object]], destination: Path) -> None:
    lines = []
    for entry in entries:
        lines.append(json.dumps(dict(entry), separators=(",", ":")))
    _atomic_write(Path(destination), ("\n".join(lines) + "\n" if lines else "").encode("utf-8"))


def write_transcripts(transcripts: Mapping[str, str], destination: Path) -> None:
    """One `id<TAB>text` line per utterance, UTF-8."""
    lines = [f"{utt_id}\t{text}" for utt_id, text in transcripts.items()]
    _atomic_write(Path(destination), ("\n".join(lines) + "\n" if lines else "").encode("utf-8"))
