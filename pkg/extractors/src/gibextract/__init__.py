"""Bridges pretrained speech models to the gibscore interchange formats."""

__version__ = "0.1.0"

from .extract import ExtractResult, asr_textlm_score, extract_features, extract_logits
from .jobs import ExtractorJob, SkipRecord
from .lockfile import load_lockfile
