"""Extraction job description shared by the library API and the CLI."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

MODEL_IDS = ("hubert_features", "speechlm_logits", "asr_textlm")


@dataclass(frozen=True)
class ExtractorJob:
    model_id: str
    inputs: tuple[Path, ...]
    output_dir: Path
    layer: int | None = None  # required iff model_id == hubert_features
    condition: str = "default"
    device: str = "cpu"
    batch_size: int = 1
    lockfile: Path = field(default=Path("checkpoints.lock"))

    def __post_init__(self):
        if self.model_id not in MODEL_IDS:
            raise ValueError(f"model_id must be one of {MODEL_IDS}, got {self.model_id!r}")
        if self.model_id == "hubert_features" and self.layer is None:
            raise ValueError("feature extraction requires --layer")
        if self.model_id != "hubert_features" and self.layer is not None:
            raise ValueError(f"layer is only meaningful for feature extraction")
        if not self.inputs:
            raise ValueError("no input audio files given")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        object.__setattr__(self, "inputs", tuple(Path(p) for p in self.inputs))
        object.__setattr__(self, "output_dir", Path(self.output_dir))
        object.__setattr__(self, "lockfile", Path(self.lockfile))


@dataclass(frozen=True)
class SkipRecord:
    id: str
    reason: str
