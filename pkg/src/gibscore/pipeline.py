"""Reproducible multi-stage pipeline driven by a YAML config.

Stages run in dependency order: codebook -> tokenize -> train-ulm -> score
-> eval. Every run writes a stamp file carrying the config hash and seed;
re-running an identical config reproduces byte-identical artifacts except
for `created_utc` timestamp fields. Flags override config-file values
(CLI precedence: flag > config > built-in default).
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

import yaml

from .errors import StageDependencyError, ValidationError
from .interchange import (
    Manifest,
    ManifestEntry,
    ScoreReport,
    read_manifest,
    read_features,
    read_tokens,
    write_manifest,
    write_report,
    write_tokens,
)
from .scoring import score_corpus
from .stats import condition_report, write_analysis
from .tokenizer import quantize, read_codebook, train_codebook, write_codebook
from .ulm import (
    RecurrentTrainConfig,
    read_ngram,
    read_recurrent,
    train_ngram,
    train_recurrent,
    write_ngram,
    write_recurrent,
)

WORKDIR_ENV = "GIBSCORE_WORKDIR"

STAGE_ORDER = ("codebook", "tokenize", "train-ulm", "score", "eval")


@dataclass(frozen=True)
class TokenizerSettings:
    k: int = 100
    max_iter: int = 100
    tol: float = 1e-6


@dataclass(frozen=True)
class UlmSettings:
    backend: str = "ngram"  # "ngram" | "rnn"
    order: int = 3
    smoothing_k: float = 0.1
    embed_dim: int = 64
    hidden_dim: int = 128
    epochs: int = 5
    batch_size: int = 32
    learning_rate: float = 1e-3


@dataclass(frozen=True)
class ScoringSettings:
    dedup: bool = False


@dataclass(frozen=True)
class StatsSettings:
    bins: int = 30
    bandwidth: float | None = None


@dataclass(frozen=True)
class RunConfig:
    seed: int
    workdir: Path
    train_manifest: Path
    eval_manifest: Path
    output_dir: Path
    tokenizer: TokenizerSettings = field(default_factory=TokenizerSettings)
    ulm: UlmSettings = field(default_factory=UlmSettings)
    scoring: ScoringSettings = field(default_factory=ScoringSettings)
    stats: StatsSettings = field(default_factory=StatsSettings)

    def hash(self) -> str:
        payload = asdict(self)
        for key in ("workdir", "train_manifest", "eval_manifest", "output_dir"):
            payload[key] = str(payload[key])
        canon = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()


_SECTION_TYPES = {
    "tokenizer": TokenizerSettings,
    "ulm": UlmSettings,
    "scoring": ScoringSettings,
    "stats": StatsSettings,
}
_TOP_KEYS = {"seed", "workdir", "train_manifest", "eval_manifest", "output_dir", *_SECTION_TYPES}


def _build_section(name: str, cls, raw: dict):
    defaults = cls()
    allowed = set(asdict(defaults))
    unknown = set(raw) - allowed
    if unknown:
        raise ValidationError(f"config section {name!r}: unknown keys {sorted(unknown)}")
    return replace(defaults, **raw)


def load_run_config(source: str | Path, overrides: dict | None = None) -> RunConfig:
    """Load and validate a YAML run config.

    Relative paths resolve against the config file's directory. The default
    workdir is $GIBSCORE_WORKDIR when set, else the config directory.
    `overrides` maps the same top-level/section keys and wins over the file.
    """
    source = Path(source)
    with open(source, "r", encoding="utf-8") as f:
        raw = yaml.safe_load(f) or {}
    if not isinstance(raw, dict):
        raise ValidationError(f"{source}: config must be a mapping")
    for key, value in (overrides or {}).items():
        if isinstance(value, dict):
            raw.setdefault(key, {})
            if not isinstance(raw[key], dict):
                raise ValidationError(f"config key {key!r} must be a mapping")
            raw[key].update(value)
        else:
            raw[key] = value
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ValidationError(f"{source}: unknown config keys {sorted(unknown)}")

    base = source.parent.resolve()
    workdir_default = os.environ.get(WORKDIR_ENV)
    workdir = Path(raw.get("workdir", workdir_default or base))
    if not workdir.is_absolute():
        workdir = base / workdir

    def path_of(key: str) -> Path:
        if key not in raw:
            raise ValidationError(f"{source}: missing required key {key!r}")
        p = Path(raw[key])
        return p if p.is_absolute() else base / p

    train_manifest = path_of("train_manifest")
    eval_manifest = path_of("eval_manifest")
    missing = [str(p) for p in (train_manifest, eval_manifest) if not p.is_file()]
    if missing:
        raise ValidationError(f"{source}: manifest files not found: {missing}")

    output_dir = Path(raw.get("output_dir", workdir / "outputs"))
    if not output_dir.is_absolute():
        output_dir = base / output_dir

    sections = {}
    for name, cls in _SECTION_TYPES.items():
        section_raw = raw.get(name, {})
        if not isinstance(section_raw, dict):
            raise ValidationError(f"{source}: section {name!r} must be a mapping")
        sections[name] = _build_section(name, cls, section_raw)
    config = RunConfig(
        seed=int(raw.get("seed", 0)),
        workdir=workdir,
        train_manifest=train_manifest,
        eval_manifest=eval_manifest,
        output_dir=output_dir,
        **sections,
    )
    if config.ulm.backend not in ("ngram", "rnn"):
        raise ValidationError(f"ulm backend must be 'ngram' or 'rnn', got {config.ulm.backend!r}")
    return config


@dataclass
class PipelineResult:
    stages_run: list[str]
    artifacts: dict[str, list[Path]]
    skipped: int = 0
    report: ScoreReport | None = None


def _codebook_path(config: RunConfig) -> Path:
    return config.workdir / "codebook.gibc"


def _tokens_manifest_path(config: RunConfig, split: str) -> Path:
    return config.workdir / f"{split}-tokens.jsonl"


def _model_path(config: RunConfig) -> Path:
    suffix = "gibn" if config.ulm.backend == "ngram" else "gibr"
    return config.workdir / f"ulm.{suffix}"


def _report_paths(config: RunConfig) -> tuple[Path, Path]:
    return config.output_dir / "report.jsonl", config.output_dir / "report.tsv"


def _require(path: Path, produced_by: str) -> Path:
    if not path.exists():
        raise StageDependencyError(
            f"missing artifact {path}; run the {produced_by!r} stage first"
        )
    return path


def _stage_codebook(config: RunConfig, result: PipelineResult) -> None:
    manifest = read_manifest(config.train_manifest)
    corpus = [
        read_features(manifest.resolve(e)) for e in manifest if e.payload_kind == "features"
    ]
    if not corpus:
        raise ValidationError("codebook stage: train manifest has no features entries")
    codebook = train_codebook(
        corpus,
        k=config.tokenizer.k,
        max_iter=config.tokenizer.max_iter,
        rel_tol=config.tokenizer.tol,
        seed=config.seed,
    )
    config.workdir.mkdir(parents=True, exist_ok=True)
    out = _codebook_path(config)
    write_codebook(codebook, out)
    result.artifacts["codebook"] = [out]


def tokenize_manifest(
    manifest: Manifest, codebook, out_dir: Path, manifest_out: Path, dedup: bool = False
) -> Manifest:
    """Quantize every features entry into GIBT files and write the derived
    manifest. Token/logits entries pass through with absolute paths."""
    from .tokenizer import deduplicate  # local import keeps module deps one-way

    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for entry in manifest:
        if entry.payload_kind == "features":
            seq = quantize(codebook, read_features(manifest.resolve(entry)))
            if dedup:
                seq = deduplicate(seq)
            token_path = out_dir / f"{entry.id}.gibt"
            write_tokens(seq, token_path)
            entries.append(
                ManifestEntry(
                    id=entry.id,
                    condition=entry.condition,
                    payload_path=str(token_path.resolve()),
                    payload_kind="tokens",
                    reference_metric=entry.reference_metric,
                    reference_tokens_path=entry.reference_tokens_path,
                )
            )
        else:
            entries.append(
                ManifestEntry(
                    id=entry.id,
                    condition=entry.condition,
                    payload_path=str(manifest.resolve(entry).resolve()),
                    payload_kind=entry.payload_kind,
                    reference_metric=entry.reference_metric,
                    reference_tokens_path=entry.reference_tokens_path,
                )
            )
    write_manifest(entries, manifest_out)
    return read_manifest(manifest_out)


def _stage_tokenize(config: RunConfig, result: PipelineResult) -> None:
    codebook = read_codebook(_require(_codebook_path(config), "codebook"))
    outputs = []
    for split, manifest_path in (
        ("train", config.train_manifest),
        ("eval", config.eval_manifest),
    ):
        manifest = read_manifest(manifest_path)
        manifest_out = _tokens_manifest_path(config, split)
        tokenize_manifest(manifest, codebook, config.workdir / "tokens" / split, manifest_out)
        outputs.append(manifest_out)
    result.artifacts["tokenize"] = outputs


def _stage_train_ulm(config: RunConfig, result: PipelineResult) -> None:
    manifest = read_manifest(_require(_tokens_manifest_path(config, "train"), "tokenize"))
    corpus = [read_tokens(manifest.resolve(e)) for e in manifest if e.payload_kind == "tokens"]
    if config.scoring.dedup:
        from .tokenizer import deduplicate

        corpus = [deduplicate(seq) for seq in corpus]
    out = _model_path(config)
    if config.ulm.backend == "ngram":
        model = train_ngram(corpus, order=config.ulm.order, smoothing_k=config.ulm.smoothing_k)
        write_ngram(model, out)
    else:
        model = train_recurrent(
            corpus,
            RecurrentTrainConfig(
                embed_dim=config.ulm.embed_dim,
                hidden_dim=config.ulm.hidden_dim,
                epochs=config.ulm.epochs,
                batch_size=config.ulm.batch_size,
                learning_rate=config.ulm.learning_rate,
                seed=config.seed,
            ),
        )
        write_recurrent(model, out)
    result.artifacts["train-ulm"] = [out]


def _stage_score(config: RunConfig, result: PipelineResult, jobs: int) -> None:
    model_path = _require(_model_path(config), "train-ulm")
    model = read_ngram(model_path) if config.ulm.backend == "ngram" else read_recurrent(model_path)
    manifest = read_manifest(_require(_tokens_manifest_path(config, "eval"), "tokenize"))
    report = score_corpus(
        model,
        manifest,
        dedup=config.scoring.dedup,
        jobs=jobs,
        meta={
            "seed": config.seed,
            "config_hash": config.hash(),
            "created_utc": _utc_now(),
        },
    )
    config.output_dir.mkdir(parents=True, exist_ok=True)
    jsonl, tsv = _report_paths(config)
    write_report(report, jsonl, tsv)
    result.report = report
    result.skipped += len(report.skipped)
    result.artifacts["score"] = [jsonl, tsv]


def _stage_eval(config: RunConfig, result: PipelineResult) -> None:
    from .interchange import read_report

    jsonl, _ = _report_paths(config)
    report = read_report(_require(jsonl, "score"))
    manifest = read_manifest(config.eval_manifest)
    reference = {e.id: e.reference_metric for e in manifest if e.reference_metric is not None}
    analysis = condition_report(
        report,
        reference or None,
        bins=config.stats.bins,
        bandwidth=config.stats.bandwidth,
    )
    result.artifacts["eval"] = write_analysis(analysis, config.output_dir)


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def run_pipeline(config: RunConfig, stages: list[str] | None = None, jobs: int = 1) -> PipelineResult:
    """Execute the requested stages in dependency order.

    A stage whose upstream artifact is missing raises StageDependencyError
    naming the stage to run. Scoring skips are reported, not dropped; the
    CLI treats them as partial failure.
    """
    requested = list(stages) if stages else list(STAGE_ORDER)
    unknown = [s for s in requested if s not in STAGE_ORDER]
    if unknown:
        raise ValidationError(f"unknown stages {unknown}; valid: {list(STAGE_ORDER)}")
    ordered = [s for s in STAGE_ORDER if s in requested]
    result = PipelineResult(stages_run=ordered, artifacts={})
    for stage in ordered:
        if stage == "codebook":
            _stage_codebook(config, result)
        elif stage == "tokenize":
            _stage_tokenize(config, result)
        elif stage == "train-ulm":
            _stage_train_ulm(config, result)
        elif stage == "score":
            _stage_score(config, result, jobs)
        elif stage == "eval":
            _stage_eval(config, result)
    config.output_dir.mkdir(parents=True, exist_ok=True)
    stamp = {
        "config_hash": config.hash(),
        "seed": config.seed,
        "stages": ordered,
        "artifacts": sorted(
            str(p) for paths in result.artifacts.values() for p in paths
        ),
        "created_utc": _utc_now(),
    }
    stamp_path = config.output_dir / "run-stamp.json"
    with open(stamp_path, "w", encoding="utf-8") as f:
        json.dump(stamp, f, indent=2, sort_keys=True)
        f.write("\n")
    result.artifacts.setdefault("stamp", []).append(stamp_path)
    return result
