import numpy as np

from gibscore.interchange import read_features, read_manifest
from gibscore.synthdata import (
    inject_symbol_noise,
    make_grammar,
    sample_corpus,
    shuffle_sequence,
    write_feature_fixture,
)


def test_grammar_rows_are_stochastic_and_sparse():
    transitions = make_grammar(20, branching=3, seed=0)
    assert transitions.shape == (20, 20)
    assert np.allclose(transitions.sum(axis=1), 1.0)
    assert ((transitions > 0).sum(axis=1) == 3).all()


def test_sample_corpus_deterministic_and_in_range():
    transitions = make_grammar(10, seed=1)
    a = sample_corpus(transitions, 5, seed=2)
    b = sample_corpus(transitions, 5, seed=2)
    for x, y in zip(a, b):
        assert x.tokens.tolist() == y.tokens.tolist()
        assert x.tokens.max() < 10
        assert 16 <= len(x) <= 48


def test_shuffle_preserves_multiset():
    transitions = make_grammar(8, seed=3)
    seq = sample_corpus(transitions, 1, seed=4)[0]
    shuffled = shuffle_sequence(seq, np.random.default_rng(5))
    assert sorted(shuffled.tokens.tolist()) == sorted(seq.tokens.tolist())


def test_noise_injection_rate_and_change():
    transitions = make_grammar(8, seed=6)
    seq = sample_corpus(transitions, 1, length_range=(200, 200), seed=7)[0]
    noisy = inject_symbol_noise(seq, 0.3, np.random.default_rng(8))
    changed = (noisy.tokens != seq.tokens).mean()
    assert 0.15 < changed < 0.45  # every hit actually changes the symbol
    clean = inject_symbol_noise(seq, 0.0, np.random.default_rng(9))
    assert clean.tokens.tolist() == seq.tokens.tolist()


def test_feature_fixture_layout(tmp_path):
    train_manifest, eval_manifest = write_feature_fixture(
        tmp_path, train_count=6, eval_count=4, seed=10
    )
    train = read_manifest(train_manifest)
    evalm = read_manifest(eval_manifest)
    assert len(train) == 6 and len(evalm) == 4
    assert {e.condition for e in evalm} == {"clean", "gibberish"}
    assert all(e.reference_metric in (0.0, 1.0) for e in evalm)
    first = read_features(train.resolve(train.entries[0]))
    assert first.dim == 4 and first.frame_count > 0
