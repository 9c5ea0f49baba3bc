"""k-means codebook training, frame quantization, and run-length deduplication.

Training is Lloyd's algorithm with a portable k-means++ initialization
(seeded splitmix64, see gibscore.rng) so a codebook is reproducible from
(corpus order, k, seed) alone. The exact iteration structure, which an
independent implementation must mirror to reproduce inertia values:

  1. assign every frame to its nearest centroid (squared Euclidean,
     ties to the lowest centroid index); inertia = sum of the per-frame
     minimum squared distances, accumulated in frame order;
  2. record the inertia, then replace each non-empty cluster's centroid
     with the mean of its frames (sums accumulated in frame order);
     an empty cluster is repaired by moving its centroid onto the frame
     currently farthest from its assigned centroid (ties to the lowest
     frame index; each repair consumes its frame);
  3. stop when the relative inertia improvement drops below rel_tol,
     i.e. (previous - current) < rel_tol * previous, or after max_iter
     update rounds.

Centroid arithmetic is float64 throughout; only the GIBF files are 32-bit.
Trained codebooks are immutable; quantize is pure and concurrent-safe.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import backend
from .errors import InsufficientDataError, ValidationError
from .interchange import (
    FORMAT_VERSION,
    MAGIC_CODEBOOK,
    FeatureMatrix,
    TokenSequence,
    _check_eof,
    _check_magic,
    _read_exact,
)
from .rng import SplitMix64

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class Codebook:
    """k centroids in dim dimensions; the token vocabulary is [0, k)."""

    centroids: np.ndarray  # (k, dim) float64
    inertia: float
    seed: int
    inertia_history: tuple[float, ...] = field(default=(), compare=False)

    def __post_init__(self):
        centroids = np.ascontiguousarray(self.centroids, dtype=np.float64)
        if centroids.ndim != 2 or centroids.shape[0] < 1 or centroids.shape[1] < 1:
            raise ValidationError(f"centroids must be (k, dim), got shape {centroids.shape}")
        if not np.isfinite(centroids).all():
            raise ValidationError("centroids contain non-finite values")
        if self.inertia < 0:
            raise ValidationError("inertia must be non-negative")
        centroids.setflags(write=False)
        object.__setattr__(self, "centroids", centroids)
        object.__setattr__(self, "seed", self.seed & _MASK64)

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]


def _sequential_sum(values: np.ndarray) -> float:
    # left-to-right accumulation; pinned so other implementations can
    # reproduce inertia bit-exactly
    return float(sum(values.tolist(), 0.0))


def kmeans_plus_plus_init(frames: np.ndarray, k: int, seed: int) -> np.ndarray:
    """k-means++ seeding driven by splitmix64.

    First center: frames[floor(u0 * n)]. Each next center is drawn with
    probability proportional to the squared distance to the nearest chosen
    center: draw u, pick the first index whose running distance total
    exceeds u * total. If all remaining distances are zero (fewer distinct
    frames than k) the pick falls back to index j % n.
    """
    frames = np.ascontiguousarray(frames, dtype=np.float64)
    n = frames.shape[0]
    rng = SplitMix64(seed)
    centers = np.empty((k, frames.shape[1]), dtype=np.float64)
    first = int(rng.next_float() * n)
    centers[0] = frames[first]
    diff = frames - centers[0]
    d2 = np.einsum("nd,nd->n", diff, diff)
    for j in range(1, k):
        total = float(d2.sum())
        if total <= 0.0:
            idx = j % n
        else:
            r = rng.next_float() * total
            idx = int(np.searchsorted(np.cumsum(d2), r, side="right"))
            if idx >= n:
                idx = n - 1
        centers[j] = frames[idx]
        diff = frames - centers[j]
        d2 = np.minimum(d2, np.einsum("nd,nd->n", diff, diff))
    return centers


def _update_centroids(
    frames: np.ndarray, labels: np.ndarray, mind: np.ndarray, old: np.ndarray
) -> np.ndarray:
    k = old.shape[0]
    sums = np.zeros_like(old)
    np.add.at(sums, labels, frames)
    counts = np.bincount(labels, minlength=k)
    new = old.copy()
    nonempty = counts > 0
    new[nonempty] = sums[nonempty] / counts[nonempty, None]
    empties = np.flatnonzero(~nonempty)
    if empties.size:
        available = mind.copy()
        for c in empties:
            far = int(np.argmax(available))
            new[c] = frames[far]
            available[far] = -1.0
    return new


def lloyd(
    frames: np.ndarray, initial: np.ndarray, max_iter: int, rel_tol: float
) -> tuple[np.ndarray, float, list[float]]:
    """Run Lloyd iterations from explicit initial centroids.

    Returns (centroids, final inertia, inertia history). history[0] is the
    inertia of the initial assignment; each following entry comes after one
    update round. The history is non-increasing by construction.
    """
    frames = np.ascontiguousarray(frames, dtype=np.float64)
    centroids = np.ascontiguousarray(initial, dtype=np.float64)
    labels, mind = backend.assign_frames(frames, centroids)
    inertia = _sequential_sum(mind)
    history = [inertia]
    for _ in range(max_iter):
        candidate = _update_centroids(frames, labels, mind, centroids)
        new_labels, new_mind = backend.assign_frames(frames, candidate)
        new_inertia = _sequential_sum(new_mind)
        if new_inertia > inertia:
            # float rounding at convergence; keep the better state
            break
        centroids = candidate
        labels, mind = new_labels, new_mind
        previous, inertia = inertia, new_inertia
        history.append(inertia)
        if inertia == 0.0 or previous - inertia < rel_tol * previous:
            break
    return centroids, inertia, history


def _corpus_frames(corpus) -> np.ndarray:
    """Stack a corpus of FeatureMatrix or raw 2-D float arrays into float64
    frames. Raw arrays keep full double precision (file payloads are 32-bit,
    but centroid math is specified in 64-bit)."""
    parts = []
    for item in corpus:
        values = item.values if isinstance(item, FeatureMatrix) else np.asarray(item)
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 2:
            raise ValidationError(f"corpus frames must be 2-D, got shape {values.shape}")
        if not np.isfinite(values).all():
            raise ValidationError("corpus frames contain non-finite values")
        parts.append(values)
    dims = {p.shape[1] for p in parts}
    if len(dims) != 1:
        raise ValidationError(f"feature dims differ across the corpus: {sorted(dims)}")
    return np.concatenate(parts, axis=0)


def train_codebook(
    corpus: list[FeatureMatrix],
    k: int,
    max_iter: int = 100,
    rel_tol: float = 1e-6,
    seed: int = 0,
) -> Codebook:
    if not corpus:
        raise InsufficientDataError("cannot train a codebook on an empty corpus")
    if k < 1:
        raise ValidationError("k must be positive")
    if max_iter < 1:
        raise ValidationError("max_iter must be positive")
    if rel_tol < 0:
        raise ValidationError("rel_tol must be non-negative")
    frames = _corpus_frames(corpus)
    if frames.shape[0] < k:
        raise InsufficientDataError(
            f"need at least k={k} frames to train, corpus has {frames.shape[0]}"
        )
    initial = kmeans_plus_plus_init(frames, k, seed)
    centroids, inertia, history = lloyd(frames, initial, max_iter, rel_tol)
    return Codebook(
        centroids=centroids,
        inertia=inertia,
        seed=seed,
        inertia_history=tuple(history),
    )


def quantize(codebook: Codebook, features: FeatureMatrix) -> TokenSequence:
    """Map each frame to its nearest centroid index (ties to the lowest index)."""
    if features.dim != codebook.dim:
        raise ValidationError(
            f"feature dim {features.dim} does not match codebook dim {codebook.dim}"
        )
    if features.frame_count == 0:
        return TokenSequence(tokens=np.zeros(0, dtype=np.int64), vocab_size=codebook.k)
    labels, _ = backend.assign_frames(
        np.ascontiguousarray(features.values, dtype=np.float64), codebook.centroids
    )
    return TokenSequence(tokens=labels, vocab_size=codebook.k)


def deduplicate(sequence: TokenSequence) -> TokenSequence:
    """Collapse runs of identical adjacent tokens. Idempotent."""
    tokens = sequence.tokens
    if tokens.size > 1:
        keep = np.concatenate(([True], tokens[1:] != tokens[:-1]))
        tokens = tokens[keep]
    return TokenSequence(tokens=tokens, vocab_size=sequence.vocab_size, dedup_flag=True)


# ---------------------------------------------------------------------------
# GIBC serialization
#   magic "GIBC" | version u32=1 | k u32 | dim u32 | seed u64 | inertia f64
#   | k*dim float64 centroids (row-major)
# The per-iteration inertia history is a training-time record and is not
# persisted.


def write_codebook(codebook: Codebook, destination: str | Path) -> None:
    with open(destination, "wb") as f:
        f.write(MAGIC_CODEBOOK)
        f.write(
            struct.pack(
                "<IIIQd", FORMAT_VERSION, codebook.k, codebook.dim, codebook.seed, codebook.inertia
            )
        )
        f.write(np.ascontiguousarray(codebook.centroids, dtype="<f8").tobytes())


def read_codebook(source: str | Path) -> Codebook:
    with open(source, "rb") as f:
        _check_magic(f, MAGIC_CODEBOOK)
        k, dim, seed, inertia = struct.unpack("<IIQd", _read_exact(f, 24, "header"))
        raw = _read_exact(f, k * dim * 8, "centroid payload")
        _check_eof(f)
    centroids = np.frombuffer(raw, dtype="<f8").reshape(k, dim)
    return Codebook(centroids=centroids, inertia=inertia, seed=seed)
