"""Bundled synthetic fixture: grammar-generated token corpora and features.

A sparse first-order Markov grammar over a small symbol vocabulary stands
in for "real speech" token statistics; token-shuffled counterparts play
the gibberish condition, and symbol-noise injection gives graded
degradations. Feature fixtures embed each symbol as a Gaussian blob around
a per-symbol center (with short repeated runs so deduplication has work to
do), which the tokenizer can re-discover. Everything is derived
deterministically from explicit seeds, so tests and the demo pipeline need
no external models or data.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .interchange import FeatureMatrix, ManifestEntry, TokenSequence, write_features, write_manifest


DEFAULT_VOCAB = 20


def make_grammar(
    vocab_size: int = DEFAULT_VOCAB, branching: int = 3, seed: int = 2024
) -> np.ndarray:
    """Row-stochastic transition matrix with `branching` successors per symbol.

    Successor weights fall off geometrically, so transitions are
    concentrated and shuffled sequences land on near-zero-probability pairs.
    """
    rng = np.random.default_rng(seed)
    weights = 0.45 ** np.arange(branching)
    weights /= weights.sum()
    transitions = np.zeros((vocab_size, vocab_size))
    for s in range(vocab_size):
        successors = rng.choice(vocab_size, size=branching, replace=False)
        transitions[s, successors] = weights
    return transitions


def sample_corpus(
    transitions: np.ndarray,
    count: int,
    length_range: tuple[int, int] = (16, 48),
    seed: int = 0,
) -> list[TokenSequence]:
    rng = np.random.default_rng(seed)
    vocab_size = transitions.shape[0]
    corpus = []
    for _ in range(count):
        length = int(rng.integers(length_range[0], length_range[1] + 1))
        seq = np.empty(length, dtype=np.int64)
        seq[0] = rng.integers(vocab_size)
        for t in range(1, length):
            seq[t] = rng.choice(vocab_size, p=transitions[seq[t - 1]])
        corpus.append(TokenSequence(tokens=seq, vocab_size=vocab_size))
    return corpus


def shuffle_sequence(sequence: TokenSequence, rng: np.random.Generator) -> TokenSequence:
    """Token-shuffled counterpart: same symbols, order destroyed."""
    return TokenSequence(
        tokens=rng.permutation(sequence.tokens), vocab_size=sequence.vocab_size
    )


def inject_symbol_noise(
    sequence: TokenSequence, rate: float, rng: np.random.Generator
) -> TokenSequence:
    """Replace each token with a uniformly drawn different symbol w.p. `rate`."""
    tokens = sequence.tokens.copy()
    v = sequence.vocab_size
    hit = rng.random(tokens.shape[0]) < rate
    for idx in np.flatnonzero(hit):
        offset = int(rng.integers(1, v))
        tokens[idx] = (tokens[idx] + offset) % v
    return TokenSequence(tokens=tokens, vocab_size=v)


def symbol_centers(vocab_size: int, dim: int = 4, spread: float = 10.0, seed: int = 7) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.normal(0.0, spread, size=(vocab_size, dim))


def features_for_sequence(
    sequence: TokenSequence,
    centers: np.ndarray,
    rng: np.random.Generator,
    noise_std: float = 0.5,
    max_run: int = 3,
) -> FeatureMatrix:
    """Embed tokens as noisy frames around per-symbol centers.

    Each token expands to 1..max_run frames, mimicking the repeated frames
    that run-length deduplication collapses.
    """
    rows = []
    for token in sequence.tokens:
        run = int(rng.integers(1, max_run + 1))
        center = centers[int(token)]
        rows.append(center + rng.normal(0.0, noise_std, size=(run, centers.shape[1])))
    values = np.concatenate(rows, axis=0) if rows else np.zeros((0, centers.shape[1]))
    return FeatureMatrix(values=values.astype(np.float32))


def write_feature_fixture(
    out_dir: str | Path,
    *,
    vocab_size: int = DEFAULT_VOCAB,
    dim: int = 4,
    train_count: int = 60,
    eval_count: int = 30,
    seed: int = 11,
) -> tuple[Path, Path]:
    """Write a small GIBF corpus + manifests for the demo pipeline.

    Train split: in-grammar utterances, condition "clean". Eval split: half
    in-grammar ("clean", reference 0.0) and half token-shuffled
    ("gibberish", reference 1.0). Returns (train manifest, eval manifest).
    """
    out_dir = Path(out_dir)
    (out_dir / "features").mkdir(parents=True, exist_ok=True)
    transitions = make_grammar(vocab_size, seed=seed)
    centers = symbol_centers(vocab_size, dim=dim, seed=seed + 1)
    rng = np.random.default_rng(seed + 2)

    train = sample_corpus(transitions, train_count, seed=seed + 3)
    eval_clean = sample_corpus(transitions, eval_count, seed=seed + 4)

    train_entries = []
    for idx, seq in enumerate(train):
        name = f"train-{idx:04d}"
        write_features(
            features_for_sequence(seq, centers, rng), out_dir / "features" / f"{name}.gibf"
        )
        train_entries.append(
            ManifestEntry(
                id=name,
                condition="clean",
                payload_path=f"features/{name}.gibf",
                payload_kind="features",
            )
        )
    train_manifest = out_dir / "train-features.jsonl"
    write_manifest(train_entries, train_manifest)

    eval_entries = []
    for idx, seq in enumerate(eval_clean):
        gibberish = idx % 2 == 1
        shown = shuffle_sequence(seq, rng) if gibberish else seq
        name = f"eval-{idx:04d}"
        write_features(
            features_for_sequence(shown, centers, rng), out_dir / "features" / f"{name}.gibf"
        )
        eval_entries.append(
            ManifestEntry(
                id=name,
                condition="gibberish" if gibberish else "clean",
                payload_path=f"features/{name}.gibf",
                payload_kind="features",
                reference_metric=1.0 if gibberish else 0.0,
            )
        )
    eval_manifest = out_dir / "eval-features.jsonl"
    write_manifest(eval_entries, eval_manifest)
    return train_manifest, eval_manifest
