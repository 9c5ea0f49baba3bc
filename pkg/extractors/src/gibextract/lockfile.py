"""Checkpoint lockfile: every pretrained model is pinned by id + revision.

JSON mapping job model_id -> entry. Entries carry a `provider`
("transformers" or "toy"), the upstream `model_id`, a `revision` commit
pin, and optionally `sha256` of the checkpoint payload for drift checks.
The asr_textlm entry nests an `asr` and a `text_lm` sub-entry. The "toy"
provider selects the built-in deterministic stand-in models used to
validate the pipeline and the file formats without downloads.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from .errors import LockfileError

PROVIDERS = ("transformers", "toy")


def _check_entry(name: str, entry: dict) -> None:
    if not isinstance(entry, dict):
        raise LockfileError(f"{name}: entry must be an object")
    provider = entry.get("provider")
    if provider not in PROVIDERS:
        raise LockfileError(f"{name}: provider must be one of {PROVIDERS}, got {provider!r}")
    if provider == "transformers":
        for key in ("model_id", "revision"):
            if not isinstance(entry.get(key), str) or not entry[key]:
                raise LockfileError(f"{name}: transformers entries need a non-empty {key!r}")


def load_lockfile(path: str | Path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise LockfileError(f"lockfile not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise LockfileError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise LockfileError(f"{path}: lockfile must be a JSON object")
    for name, entry in data.items():
        if name == "asr_textlm":
            if not isinstance(entry, dict) or "asr" not in entry or "text_lm" not in entry:
                raise LockfileError(f"{name}: needs nested 'asr' and 'text_lm' entries")
            _check_entry(f"{name}.asr", entry["asr"])
            _check_entry(f"{name}.text_lm", entry["text_lm"])
        else:
            _check_entry(name, entry)
    return data


def require_entry(lock: dict, model_id: str) -> dict:
    if model_id not in lock:
        raise LockfileError(f"lockfile has no entry for {model_id!r}")
    return lock[model_id]


def file_sha256(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()
