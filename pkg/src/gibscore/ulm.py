"""Autoregressive unit language models over token sequences.

Three interchangeable backends expose per-step conditional distributions:
an add-k smoothed n-gram, a single-layer LSTM trained from scratch, and a
pass-through wrapper for externally computed log-probabilities. Every
backend prepends a virtual begin-of-sequence symbol, so the first real
token is predicted from BOS context; sequence ends are not scored.

LSTM cell, gate order [input, forget, candidate, output] inside the fused
weight matrix, z_t = [embed(x_t), h_{t-1}]:

    a_t = z_t W + b                       W: (E+H, 4H), b: (4H,)
    i_t = sigmoid(a_t[:, 0H:1H])
    f_t = sigmoid(a_t[:, 1H:2H])
    g_t = tanh   (a_t[:, 2H:3H])
    o_t = sigmoid(a_t[:, 3H:4H])
    c_t = f_t * c_{t-1} + i_t * g_t
    h_t = o_t * tanh(c_t)
    logits_t = h_t W_out + b_out          W_out: (H, V), b_out: (V,)

The embedding table has V+1 rows; row V is the BOS symbol. All model math
is float64; files store float64 as well (only interchange payloads are
32-bit). Training mutates a model exclusively; trained models are
immutable by convention and safe for concurrent scoring.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DivergenceError,
    InsufficientDataError,
    ValidationError,
)
from .interchange import (
    FORMAT_VERSION,
    MAGIC_NGRAM,
    MAGIC_RECURRENT,
    LogitsRecord,
    TokenSequence,
    _check_eof,
    _check_magic,
    _read_exact,
)

BOS = -1  # context padding symbol; never a real token

_BOS_FILE = 0xFFFFFFFF  # BOS encoding inside GIBN context tuples


def _as_tokens(prefix) -> np.ndarray:
    if isinstance(prefix, TokenSequence):
        return prefix.tokens
    return np.asarray(prefix, dtype=np.int64).reshape(-1)


# ---------------------------------------------------------------------------
# add-k n-gram backend


@dataclass
class NGramModel:
    """Add-k smoothed n-gram: p(x|c) = (count(c,x) + k) / (count(c) + k*V).

    Contexts are the n-1 most recent tokens, left-padded with BOS, so an
    unseen context yields the uniform distribution 1/V.
    """

    order: int
    vocab_size: int
    smoothing_k: float
    counts: dict[tuple[int, ...], dict[int, int]] = field(default_factory=dict)
    context_totals: dict[tuple[int, ...], int] = field(default_factory=dict)

    def context(self, tokens: np.ndarray, step: int) -> tuple[int, ...]:
        width = self.order - 1
        if width == 0:
            return ()
        start = max(0, step - width)
        ctx = [int(t) for t in tokens[start:step]]
        return tuple([BOS] * (width - len(ctx)) + ctx)

    def distribution_for_context(self, ctx: tuple[int, ...]) -> np.ndarray:
        v = self.vocab_size
        k = self.smoothing_k
        total = self.context_totals.get(ctx, 0)
        denom = total + k * v
        probs = np.full(v, k / denom, dtype=np.float64)
        for token, count in self.counts.get(ctx, {}).items():
            probs[token] = (count + k) / denom
        return probs

    def step_distributions(self, tokens: np.ndarray) -> np.ndarray:
        tokens = _as_tokens(tokens)
        out = np.empty((tokens.shape[0], self.vocab_size), dtype=np.float64)
        for t in range(tokens.shape[0]):
            out[t] = self.distribution_for_context(self.context(tokens, t))
        return out

    def next_token_distribution(self, prefix, step: int) -> np.ndarray:
        tokens = _as_tokens(prefix)
        if step < 0 or step > tokens.shape[0]:
            raise ValidationError(f"step {step} out of range for prefix of length {tokens.shape[0]}")
        return self.distribution_for_context(self.context(tokens, step))


def train_ngram(corpus: list[TokenSequence], order: int, smoothing_k: float) -> NGramModel:
    if not corpus:
        raise InsufficientDataError("cannot train an n-gram model on an empty corpus")
    if int(order) != order or order < 1:
        raise ValidationError("order must be an integer >= 1")
    if smoothing_k <= 0:
        raise ValidationError("smoothing_k must be positive")
    vocabs = {seq.vocab_size for seq in corpus}
    if len(vocabs) != 1:
        raise ValidationError(f"mixed vocab sizes in corpus: {sorted(vocabs)}")
    model = NGramModel(order=int(order), vocab_size=vocabs.pop(), smoothing_k=float(smoothing_k))
    for seq in corpus:
        tokens = seq.tokens
        for t in range(tokens.shape[0]):
            ctx = model.context(tokens, t)
            token = int(tokens[t])
            bucket = model.counts.setdefault(ctx, {})
            bucket[token] = bucket.get(token, 0) + 1
            model.context_totals[ctx] = model.context_totals.get(ctx, 0) + 1
    return model


# ---------------------------------------------------------------------------
# recurrent backend

PARAM_ORDER = ("embedding", "w_cell", "b_cell", "w_out", "b_out")


@dataclass(frozen=True)
class RecurrentTrainConfig:
    embed_dim: int = 64
    hidden_dim: int = 128
    epochs: int = 5
    batch_size: int = 32
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float = 5.0
    seed: int = 0


@dataclass
class RecurrentModel:
    vocab_size: int
    embed_dim: int
    hidden_dim: int
    params: dict[str, np.ndarray]
    train_losses: list[float] = field(default_factory=list)

    def step_distributions(self, tokens: np.ndarray) -> np.ndarray:
        tokens = _as_tokens(tokens)
        T = tokens.shape[0]
        if T == 0:
            return np.empty((0, self.vocab_size), dtype=np.float64)
        inputs = np.empty(T, dtype=np.int64)
        inputs[0] = self.vocab_size  # BOS row
        inputs[1:] = tokens[:-1]
        h_rows = _forward_hidden(self.params, inputs[None, :])[0]
        logits = h_rows @ self.params["w_out"] + self.params["b_out"]
        return _softmax_rows(logits)

    def next_token_distribution(self, prefix, step: int) -> np.ndarray:
        tokens = _as_tokens(prefix)
        if step < 0 or step > tokens.shape[0]:
            raise ValidationError(f"step {step} out of range for prefix of length {tokens.shape[0]}")
        inputs = np.empty(step + 1, dtype=np.int64)
        inputs[0] = self.vocab_size
        inputs[1:] = tokens[:step]
        h_rows = _forward_hidden(self.params, inputs[None, :])[0]
        logits = h_rows[-1] @ self.params["w_out"] + self.params["b_out"]
        return _softmax_rows(logits[None, :])[0]


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=-1, keepdims=True)


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def init_params(
    vocab_size: int, embed_dim: int, hidden_dim: int, rng: np.random.Generator
) -> dict[str, np.ndarray]:
    """Small-scale init: near-uniform softmax before training.

    Weight scales: embedding 0.1, cell 1/sqrt(E+H), output 0.01. The forget
    gate bias starts at +1 so early gradients flow through time.
    """
    e, h, v = embed_dim, hidden_dim, vocab_size
    params = {
        "embedding": rng.normal(0.0, 0.1, size=(v + 1, e)),
        "w_cell": rng.normal(0.0, 1.0 / np.sqrt(e + h), size=(e + h, 4 * h)),
        "b_cell": np.zeros(4 * h),
        "w_out": rng.normal(0.0, 0.01, size=(h, v)),
        "b_out": np.zeros(v),
    }
    params["b_cell"][h : 2 * h] = 1.0
    return params


def _forward_hidden(params: dict[str, np.ndarray], inputs: np.ndarray) -> np.ndarray:
    """Hidden states for scoring: (B, T, H), no caches kept."""
    b, t_len = inputs.shape
    h_dim = params["w_out"].shape[0]
    emb = params["embedding"][inputs]
    h = np.zeros((b, h_dim))
    c = np.zeros((b, h_dim))
    out = np.empty((b, t_len, h_dim))
    w, bias = params["w_cell"], params["b_cell"]
    for t in range(t_len):
        a = np.concatenate([emb[:, t], h], axis=1) @ w + bias
        i = _sigmoid(a[:, :h_dim])
        f = _sigmoid(a[:, h_dim : 2 * h_dim])
        g = np.tanh(a[:, 2 * h_dim : 3 * h_dim])
        o = _sigmoid(a[:, 3 * h_dim :])
        c = f * c + i * g
        h = o * np.tanh(c)
        out[:, t] = h
    return out


def _loss_and_grads(
    params: dict[str, np.ndarray],
    inputs: np.ndarray,
    targets: np.ndarray,
    mask: np.ndarray,
) -> tuple[float, dict[str, np.ndarray]]:
    """Masked mean cross-entropy per token and its gradients (full BPTT).

    Padding is terminal per row, so masking the loss is sufficient: no real
    step ever depends on a padded state.
    """
    b, t_len = inputs.shape
    h_dim = params["w_out"].shape[0]
    e_dim = params["embedding"].shape[1]
    w, bias = params["w_cell"], params["b_cell"]
    w_out, b_out = params["w_out"], params["b_out"]

    emb = params["embedding"][inputs]  # (B, T, E)
    h_stack = np.zeros((b, t_len + 1, h_dim))
    c_stack = np.zeros((b, t_len + 1, h_dim))
    gates_i = np.empty((b, t_len, h_dim))
    gates_f = np.empty((b, t_len, h_dim))
    gates_g = np.empty((b, t_len, h_dim))
    gates_o = np.empty((b, t_len, h_dim))
    tanh_c = np.empty((b, t_len, h_dim))
    for t in range(t_len):
        a = np.concatenate([emb[:, t], h_stack[:, t]], axis=1) @ w + bias
        i = _sigmoid(a[:, :h_dim])
        f = _sigmoid(a[:, h_dim : 2 * h_dim])
        g = np.tanh(a[:, 2 * h_dim : 3 * h_dim])
        o = _sigmoid(a[:, 3 * h_dim :])
        c = f * c_stack[:, t] + i * g
        tc = np.tanh(c)
        gates_i[:, t], gates_f[:, t], gates_g[:, t], gates_o[:, t] = i, f, g, o
        c_stack[:, t + 1] = c
        tanh_c[:, t] = tc
        h_stack[:, t + 1] = o * tc

    h_all = h_stack[:, 1:]
    logits = h_all @ w_out + b_out
    logp = _log_softmax(logits)
    total_tokens = float(mask.sum())
    rows = np.arange(b)[:, None], np.arange(t_len)[None, :], targets
    loss = float(-(logp[rows] * mask).sum() / total_tokens)

    dlogits = _softmax_rows(logits)
    np.subtract.at(dlogits, rows, 1.0)
    dlogits *= (mask / total_tokens)[:, :, None]

    grads = {name: np.zeros_like(params[name]) for name in PARAM_ORDER}
    grads["w_out"] = h_all.reshape(-1, h_dim).T @ dlogits.reshape(-1, logits.shape[-1])
    grads["b_out"] = dlogits.sum(axis=(0, 1))
    dh_all = dlogits @ w_out.T

    da_all = np.empty((b, t_len, 4 * h_dim))
    demb = np.empty((b, t_len, e_dim))
    dh_next = np.zeros((b, h_dim))
    dc_next = np.zeros((b, h_dim))
    w_x = w[:e_dim]
    w_h = w[e_dim:]
    for t in range(t_len - 1, -1, -1):
        i, f, g, o = gates_i[:, t], gates_f[:, t], gates_g[:, t], gates_o[:, t]
        tc = tanh_c[:, t]
        dh = dh_all[:, t] + dh_next
        do = dh * tc
        dc = dc_next + dh * o * (1.0 - tc * tc)
        df = dc * c_stack[:, t]
        di = dc * g
        dg = dc * i
        dc_next = dc * f
        da = np.concatenate(
            [di * i * (1.0 - i), df * f * (1.0 - f), dg * (1.0 - g * g), do * o * (1.0 - o)],
            axis=1,
        )
        da_all[:, t] = da
        demb[:, t] = da @ w_x.T
        dh_next = da @ w_h.T

    z_all = np.concatenate([emb, h_stack[:, :t_len]], axis=2)
    grads["w_cell"] = z_all.reshape(-1, e_dim + h_dim).T @ da_all.reshape(-1, 4 * h_dim)
    grads["b_cell"] = da_all.sum(axis=(0, 1))
    np.add.at(grads["embedding"], inputs.reshape(-1), demb.reshape(-1, e_dim))
    return loss, grads


def sequence_loss_and_gradients(
    model: RecurrentModel, tokens: np.ndarray
) -> tuple[float, dict[str, np.ndarray]]:
    """Cross-entropy of one sequence and its parameter gradients (for checks)."""
    tokens = _as_tokens(tokens)
    inputs = np.empty((1, tokens.shape[0]), dtype=np.int64)
    inputs[0, 0] = model.vocab_size
    inputs[0, 1:] = tokens[:-1]
    targets = tokens[None, :]
    mask = np.ones_like(targets, dtype=np.float64)
    return _loss_and_grads(model.params, inputs, targets, mask)


def _make_batch(
    sequences: list[np.ndarray], vocab_size: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    b = len(sequences)
    t_len = max(s.shape[0] for s in sequences)
    inputs = np.zeros((b, t_len), dtype=np.int64)
    targets = np.zeros((b, t_len), dtype=np.int64)
    mask = np.zeros((b, t_len), dtype=np.float64)
    for row, seq in enumerate(sequences):
        n = seq.shape[0]
        inputs[row, 0] = vocab_size
        inputs[row, 1:n] = seq[: n - 1]
        targets[row, :n] = seq
        mask[row, :n] = 1.0
    return inputs, targets, mask


def train_recurrent(
    corpus: list[TokenSequence], config: RecurrentTrainConfig = RecurrentTrainConfig()
) -> RecurrentModel:
    """Mini-batch Adam on the per-token cross-entropy; deterministic per seed.

    Gradients are clipped to a global norm of clip_norm before every update,
    and all parameters are checked finite after every update.
    """
    if not corpus:
        raise InsufficientDataError("cannot train a recurrent model on an empty corpus")
    vocabs = {seq.vocab_size for seq in corpus}
    if len(vocabs) != 1:
        raise ValidationError(f"mixed vocab sizes in corpus: {sorted(vocabs)}")
    vocab_size = vocabs.pop()
    sequences = [seq.tokens for seq in corpus if len(seq) > 0]
    if not sequences:
        raise InsufficientDataError("corpus contains only empty sequences")

    rng = np.random.default_rng(config.seed)
    params = init_params(vocab_size, config.embed_dim, config.hidden_dim, rng)
    model = RecurrentModel(
        vocab_size=vocab_size,
        embed_dim=config.embed_dim,
        hidden_dim=config.hidden_dim,
        params=params,
    )
    moments1 = {name: np.zeros_like(params[name]) for name in PARAM_ORDER}
    moments2 = {name: np.zeros_like(params[name]) for name in PARAM_ORDER}
    step = 0
    for epoch in range(config.epochs):
        order = rng.permutation(len(sequences))
        epoch_nats = 0.0
        epoch_tokens = 0
        for start in range(0, len(sequences), config.batch_size):
            batch_idx = order[start : start + config.batch_size]
            batch = [sequences[i] for i in batch_idx]
            inputs, targets, mask = _make_batch(batch, vocab_size)
            loss, grads = _loss_and_grads(params, inputs, targets, mask)
            if not np.isfinite(loss):
                raise DivergenceError(
                    f"non-finite loss at epoch {epoch}, batch {start // config.batch_size}"
                )
            _clip_global_norm(grads, config.clip_norm)
            step += 1
            _adam_update(params, grads, moments1, moments2, step, config)
            for name in PARAM_ORDER:
                if not np.isfinite(params[name]).all():
                    raise DivergenceError(
                        f"non-finite parameter {name!r} at epoch {epoch},"
                        f" batch {start // config.batch_size}"
                    )
            tokens = int(mask.sum())
            epoch_nats += loss * tokens
            epoch_tokens += tokens
        model.train_losses.append(epoch_nats / epoch_tokens)
    return model


def _clip_global_norm(grads: dict[str, np.ndarray], clip_norm: float) -> None:
    total = 0.0
    for name in PARAM_ORDER:
        total += float((grads[name] ** 2).sum())
    norm = np.sqrt(total)
    if norm > clip_norm:
        scale = clip_norm / norm
        for name in PARAM_ORDER:
            grads[name] *= scale


def _adam_update(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    m1: dict[str, np.ndarray],
    m2: dict[str, np.ndarray],
    step: int,
    config: RecurrentTrainConfig,
) -> None:
    bc1 = 1.0 - config.beta1**step
    bc2 = 1.0 - config.beta2**step
    for name in PARAM_ORDER:
        g = grads[name]
        m1[name] = config.beta1 * m1[name] + (1.0 - config.beta1) * g
        m2[name] = config.beta2 * m2[name] + (1.0 - config.beta2) * g * g
        params[name] -= (
            config.learning_rate * (m1[name] / bc1) / (np.sqrt(m2[name] / bc2) + config.eps)
        )


# ---------------------------------------------------------------------------
# external-logits backend


@dataclass(frozen=True)
class ExternalModel:
    """Backend view of a stored logits record.

    Normalized rows are trusted as stored (their row sums are already
    validated to 1e-4); unnormalized rows are log-softmax-normalized here.
    Only the record's own token stream can be scored through it.
    """

    record: LogitsRecord

    @property
    def vocab_size(self) -> int:
        return self.record.vocab_size

    def _row_probs(self, rows: np.ndarray) -> np.ndarray:
        rows = rows.astype(np.float64)
        if self.record.normalized_flag:
            return np.exp(rows)
        return np.exp(_log_softmax(rows))

    def step_distributions(self, tokens: np.ndarray) -> np.ndarray:
        tokens = _as_tokens(tokens)
        if not np.array_equal(tokens, self.record.observed):
            raise ValidationError("external logits only score their own observed token stream")
        return self._row_probs(self.record.log_probs)

    def next_token_distribution(self, prefix, step: int) -> np.ndarray:
        tokens = _as_tokens(prefix)
        if step < 0 or step >= self.record.step_count:
            raise ValidationError(f"step {step} out of range for {self.record.step_count} stored rows")
        if step > tokens.shape[0]:
            raise ValidationError(f"step {step} exceeds prefix length {tokens.shape[0]}")
        return self._row_probs(self.record.log_probs[step : step + 1])[0]


def next_token_distribution(model, prefix, step: int) -> np.ndarray:
    """Conditional distribution over the next token after `step` prefix tokens."""
    return model.next_token_distribution(prefix, step)


# ---------------------------------------------------------------------------
# model serialization
#   GIBN  magic | version u32 | order u32 | vocab u32 | smoothing_k f64
#         | context_count u64 | per context (sorted): width u8,
#           width u32 tokens (BOS = 0xFFFFFFFF), entry_count u32,
#           entry_count * (token u32, count u64) sorted by token
#   GIBR  magic | version u32 | vocab u32 | embed u32 | hidden u32
#         | parameter arrays as f64 in PARAM_ORDER with the documented shapes


def write_ngram(model: NGramModel, destination: str | Path) -> None:
    with open(destination, "wb") as f:
        f.write(MAGIC_NGRAM)
        f.write(
            struct.pack(
                "<IIIdQ",
                FORMAT_VERSION,
                model.order,
                model.vocab_size,
                model.smoothing_k,
                len(model.counts),
            )
        )
        for ctx in sorted(model.counts):
            f.write(struct.pack("<B", len(ctx)))
            for token in ctx:
                f.write(struct.pack("<I", _BOS_FILE if token == BOS else token))
            bucket = model.counts[ctx]
            f.write(struct.pack("<I", len(bucket)))
            for token in sorted(bucket):
                f.write(struct.pack("<IQ", token, bucket[token]))


def read_ngram(source: str | Path) -> NGramModel:
    with open(source, "rb") as f:
        _check_magic(f, MAGIC_NGRAM)
        order, vocab, smoothing_k, n_contexts = struct.unpack(
            "<IIdQ", _read_exact(f, 24, "header")
        )
        model = NGramModel(order=order, vocab_size=vocab, smoothing_k=smoothing_k)
        for _ in range(n_contexts):
            (width,) = struct.unpack("<B", _read_exact(f, 1, "context width"))
            raw = _read_exact(f, 4 * width, "context tokens")
            ctx = tuple(
                BOS if t == _BOS_FILE else int(t)
                for t in struct.unpack(f"<{width}I", raw)
            )
            (n_entries,) = struct.unpack("<I", _read_exact(f, 4, "entry count"))
            bucket: dict[int, int] = {}
            total = 0
            for _ in range(n_entries):
                token, count = struct.unpack("<IQ", _read_exact(f, 12, "count entry"))
                if token >= vocab:
                    raise ValidationError(f"count entry token {token} out of range")
                bucket[int(token)] = int(count)
                total += int(count)
            model.counts[ctx] = bucket
            model.context_totals[ctx] = total
        _check_eof(f)
    return model


def write_recurrent(model: RecurrentModel, destination: str | Path) -> None:
    with open(destination, "wb") as f:
        f.write(MAGIC_RECURRENT)
        f.write(
            struct.pack(
                "<IIII", FORMAT_VERSION, model.vocab_size, model.embed_dim, model.hidden_dim
            )
        )
        for name in PARAM_ORDER:
            f.write(np.ascontiguousarray(model.params[name], dtype="<f8").tobytes())


def read_recurrent(source: str | Path) -> RecurrentModel:
    with open(source, "rb") as f:
        _check_magic(f, MAGIC_RECURRENT)
        vocab, embed, hidden = struct.unpack("<III", _read_exact(f, 12, "header"))
        shapes = {
            "embedding": (vocab + 1, embed),
            "w_cell": (embed + hidden, 4 * hidden),
            "b_cell": (4 * hidden,),
            "w_out": (hidden, vocab),
            "b_out": (vocab,),
        }
        params = {}
        for name in PARAM_ORDER:
            size = int(np.prod(shapes[name]))
            raw = _read_exact(f, size * 8, f"{name} payload")
            params[name] = np.frombuffer(raw, dtype="<f8").reshape(shapes[name]).copy()
        _check_eof(f)
    return RecurrentModel(
        vocab_size=vocab, embed_dim=embed, hidden_dim=hidden, params=params
    )
