"""Audio loading: WAV decode, downmix to mono, resample to 16 kHz."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

from .errors import AudioDecodeError

TARGET_RATE = 16000

_INT_SCALE = {np.dtype(np.int16): 2**15, np.dtype(np.int32): 2**31}


def load_audio_16k(path: str | Path) -> np.ndarray:
    """Decode a WAV file to float64 mono samples at 16 kHz in [-1, 1]."""
    path = Path(path)
    try:
        rate, data = wavfile.read(path)
    except Exception as exc:
        raise AudioDecodeError(f"{path}: {exc}") from exc
    data = np.asarray(data)
    if data.size == 0:
        return np.zeros(0)
    if data.ndim == 2:
        data = data.mean(axis=1)
    if data.dtype in _INT_SCALE:
        samples = data.astype(np.float64) / _INT_SCALE[data.dtype]
    elif data.dtype == np.uint8:
        samples = (data.astype(np.float64) - 128.0) / 128.0
    else:
        samples = data.astype(np.float64)
    if rate != TARGET_RATE:
        gcd = np.gcd(int(rate), TARGET_RATE)
        samples = resample_poly(samples, TARGET_RATE // gcd, int(rate) // gcd)
    return samples
