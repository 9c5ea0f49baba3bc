"""Model resolution: lockfile entries -> runnable model objects.

The "toy" provider returns the built-in deterministic stand-ins. The
"transformers" provider lazily imports torch/transformers and loads the
pinned checkpoint (model_id + revision); everything runs in eval mode
under no_grad so repeated extraction of the same file is bit-identical.
No training or fine-tuning happens here.
"""

from __future__ import annotations

import numpy as np

from .errors import ModelLoadError
from .toy import ToyAsr, ToyFeatureEncoder, ToySpeechLM, ToyTextLM


def _torch():
    try:
        import torch

        return torch
    except ImportError as exc:
        raise ModelLoadError("the transformers provider needs torch installed") from exc


class HubertFeatureEncoder:
    """SSL encoder exposing hidden states at a selectable layer."""

    def __init__(self, model_id: str, revision: str, device: str = "cpu"):
        torch = _torch()
        try:
            from transformers import AutoModel
        except ImportError as exc:
            raise ModelLoadError("the transformers provider needs transformers installed") from exc
        try:
            self._model = AutoModel.from_pretrained(model_id, revision=revision)
        except Exception as exc:
            raise ModelLoadError(f"cannot load {model_id}@{revision}: {exc}") from exc
        self._model.eval().to(device)
        self._device = device
        # total stride of the convolutional frontend, samples per frame
        self.stride = int(np.prod(self._model.config.conv_stride))
        self.layer_count = self._model.config.num_hidden_layers + 1

    def encode(self, wav: np.ndarray, layer: int) -> np.ndarray:
        torch = _torch()
        if not 0 <= layer < self.layer_count:
            raise ValueError(f"layer must be in [0, {self.layer_count}), got {layer}")
        with torch.no_grad():
            batch = torch.from_numpy(wav[None, :].astype(np.float32)).to(self._device)
            out = self._model(batch, output_hidden_states=True)
        return out.hidden_states[layer][0].cpu().numpy().astype(np.float32)


class CausalUnitScorer:
    """Per-step log-probs from a pinned causal LM over unit token ids.

    Unit tokenization happens upstream (the pinned checkpoints define their
    own quantizers); this scorer accepts the observed unit stream and
    returns log-softmax rows aligned with it, the first row conditioned on
    the model's BOS token.
    """

    def __init__(self, model_id: str, revision: str, device: str = "cpu"):
        torch = _torch()
        try:
            from transformers import AutoModelForCausalLM
        except ImportError as exc:
            raise ModelLoadError("the transformers provider needs transformers installed") from exc
        try:
            self._model = AutoModelForCausalLM.from_pretrained(model_id, revision=revision)
        except Exception as exc:
            raise ModelLoadError(f"cannot load {model_id}@{revision}: {exc}") from exc
        self._model.eval().to(device)
        self._device = device
        config = self._model.config
        self.vocab_size = config.vocab_size
        bos = config.bos_token_id if config.bos_token_id is not None else config.eos_token_id
        if bos is None:
            raise ModelLoadError(f"{model_id}: no BOS/EOS token to condition the first step on")
        self._bos = int(bos)

    def tokenize(self, wav: np.ndarray) -> np.ndarray:
        raise ModelLoadError(
            "this checkpoint has no bundled audio tokenizer; pass unit tokens (.gibt) instead"
        )

    def step_log_probs(self, tokens: np.ndarray) -> np.ndarray:
        torch = _torch()
        with torch.no_grad():
            ids = torch.tensor(
                np.concatenate([[self._bos], tokens[:-1]])[None, :], device=self._device
            )
            logits = self._model(ids).logits[0].float()
            rows = torch.log_softmax(logits, dim=-1).cpu().numpy()
        return rows.astype(np.float64)


class CtcAsr:
    """Greedy CTC transcription from a pinned encoder + processor."""

    def __init__(self, model_id: str, revision: str, device: str = "cpu"):
        torch = _torch()
        try:
            from transformers import AutoModelForCTC, AutoProcessor
        except ImportError as exc:
            raise ModelLoadError("the transformers provider needs transformers installed") from exc
        try:
            self._processor = AutoProcessor.from_pretrained(model_id, revision=revision)
            self._model = AutoModelForCTC.from_pretrained(model_id, revision=revision)
        except Exception as exc:
            raise ModelLoadError(f"cannot load {model_id}@{revision}: {exc}") from exc
        self._model.eval().to(device)
        self._device = device

    def transcribe(self, wav: np.ndarray) -> str:
        torch = _torch()
        if wav.shape[0] == 0:
            return ""
        with torch.no_grad():
            inputs = self._processor(
                wav.astype(np.float32), sampling_rate=16000, return_tensors="pt"
            ).to(self._device)
            logits = self._model(**inputs).logits[0]
            ids = logits.argmax(dim=-1)
        return self._processor.decode(ids).strip()


class TextScorer:
    """Per-token log-probs of text under a pinned causal text LM."""

    def __init__(self, model_id: str, revision: str, device: str = "cpu"):
        torch = _torch()
        try:
            from transformers import AutoModelForCausalLM, AutoTokenizer
        except ImportError as exc:
            raise ModelLoadError("the transformers provider needs transformers installed") from exc
        try:
            self._tokenizer = AutoTokenizer.from_pretrained(model_id, revision=revision)
            self._model = AutoModelForCausalLM.from_pretrained(model_id, revision=revision)
        except Exception as exc:
            raise ModelLoadError(f"cannot load {model_id}@{revision}: {exc}") from exc
        self._model.eval().to(device)
        self._device = device
        self.vocab_size = self._model.config.vocab_size
        bos = self._model.config.bos_token_id
        self._bos = int(bos if bos is not None else self._model.config.eos_token_id)

    def encode_text(self, text: str) -> np.ndarray:
        return np.asarray(self._tokenizer.encode(text), dtype=np.int64)

    def step_log_probs(self, ids: np.ndarray) -> np.ndarray:
        torch = _torch()
        with torch.no_grad():
            batch = torch.tensor(
                np.concatenate([[self._bos], ids[:-1]])[None, :], device=self._device
            )
            logits = self._model(batch).logits[0].float()
            rows = torch.log_softmax(logits, dim=-1).cpu().numpy()
        return rows.astype(np.float64)


def resolve_feature_encoder(entry: dict, device: str = "cpu"):
    if entry["provider"] == "toy":
        return ToyFeatureEncoder()
    return HubertFeatureEncoder(entry["model_id"], entry["revision"], device)


def resolve_speechlm(entry: dict, device: str = "cpu"):
    if entry["provider"] == "toy":
        return ToySpeechLM()
    return CausalUnitScorer(entry["model_id"], entry["revision"], device)


def resolve_asr_textlm(entry: dict, device: str = "cpu"):
    if entry["asr"]["provider"] == "toy":
        asr = ToyAsr()
    else:
        asr = CtcAsr(entry["asr"]["model_id"], entry["asr"]["revision"], device)
    if entry["text_lm"]["provider"] == "toy":
        text_lm = ToyTextLM()
    else:
        text_lm = TextScorer(entry["text_lm"]["model_id"], entry["text_lm"]["revision"], device)
    return asr, text_lm
