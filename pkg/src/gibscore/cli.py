"""Command-line entry point.

Exit codes: 0 success; 1 validation error (bad flags, malformed inputs,
violated invariants); 2 runtime/data error (corrupt or missing files,
training divergence, missing pipeline artifacts, partial scoring failure).
"""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click

from . import __version__
from .backend import KERNEL_BACKEND
from .errors import (
    CorruptionError,
    DivergenceError,
    FormatError,
    GibscoreError,
    InsufficientDataError,
    StageDependencyError,
    UndefinedStatisticError,
    ValidationError,
)
from .interchange import (
    probe_kind,
    read_features,
    read_logits,
    read_manifest,
    read_report,
    read_tokens,
    write_report,
)
from .intrusive import align, normalize_words, read_transcripts
from .pipeline import WORKDIR_ENV, load_run_config, run_pipeline, tokenize_manifest
from .scoring import score_corpus
from .stats import condition_report, read_reference_metrics, write_analysis
from .tokenizer import read_codebook, train_codebook, write_codebook
from .ulm import (
    RecurrentTrainConfig,
    read_ngram,
    read_recurrent,
    train_ngram,
    train_recurrent,
    write_ngram,
    write_recurrent,
)

_VALIDATION = (ValidationError, FormatError, InsufficientDataError, UndefinedStatisticError)
_RUNTIME = (CorruptionError, DivergenceError, StageDependencyError)


class _PartialFailure(GibscoreError):
    """Some entries were skipped; artifacts were still written."""


def _default_jobs() -> int:
    return os.cpu_count() or 1


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(__version__, message=f"gibscore %(version)s (kernels: {KERNEL_BACKEND})")
def cli():
    """Score token sequences for gibberishness and validate the scores.

    Data flows through the GIBF/GIBT/GIBL binary formats and JSONL
    manifests; see the README for the exact layouts.
    """


@cli.command("train-codebook")
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--k", default=100, show_default=True, help="Codebook size (token vocabulary).")
@click.option("--max-iter", default=100, show_default=True, help="Maximum Lloyd update rounds.")
@click.option("--tol", default=1e-6, show_default=True, help="Relative inertia improvement to stop at.")
@click.option("--seed", default=0, show_default=True, help="Initialization seed.")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def cmd_train_codebook(manifest_path, k, max_iter, tol, seed, out_path):
    """Train a k-means codebook over the features named in a manifest."""
    manifest = read_manifest(manifest_path)
    corpus = [read_features(manifest.resolve(e)) for e in manifest if e.payload_kind == "features"]
    if not corpus:
        raise ValidationError("manifest has no features entries")
    codebook = train_codebook(corpus, k=k, max_iter=max_iter, rel_tol=tol, seed=seed)
    Path(out_path).parent.mkdir(parents=True, exist_ok=True)
    write_codebook(codebook, out_path)
    click.echo(
        f"trained codebook k={codebook.k} dim={codebook.dim}"
        f" inertia={codebook.inertia:.6g} iterations={len(codebook.inertia_history)} -> {out_path}"
    )


@cli.command("tokenize")
@click.option("--codebook", "codebook_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--dedup/--no-dedup", default=False, show_default=True, help="Collapse adjacent duplicate tokens.")
@click.option("--out-dir", required=True, type=click.Path(file_okay=False))
def cmd_tokenize(codebook_path, manifest_path, dedup, out_dir):
    """Quantize feature files into token files (plus a derived manifest)."""
    codebook = read_codebook(codebook_path)
    manifest = read_manifest(manifest_path)
    out_dir = Path(out_dir)
    derived = tokenize_manifest(manifest, codebook, out_dir, out_dir / "manifest.jsonl", dedup=dedup)
    n_tokens = sum(1 for e in derived if e.payload_kind == "tokens")
    click.echo(f"tokenized {n_tokens} entries -> {out_dir / 'manifest.jsonl'}")


@cli.command("train-ulm")
@click.option("--backend", type=click.Choice(["ngram", "rnn"]), default="ngram", show_default=True)
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--order", default=3, show_default=True, help="n-gram order (ngram backend).")
@click.option("--smoothing-k", default=0.1, show_default=True, help="Add-k smoothing constant.")
@click.option("--epochs", default=5, show_default=True, help="Training epochs (rnn backend).")
@click.option("--embed-dim", default=64, show_default=True)
@click.option("--hidden-dim", default=128, show_default=True)
@click.option("--batch-size", default=32, show_default=True)
@click.option("--learning-rate", default=1e-3, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--dedup/--no-dedup", default=False, show_default=True, help="Deduplicate sequences before training.")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def cmd_train_ulm(
    backend, manifest_path, order, smoothing_k, epochs, embed_dim, hidden_dim,
    batch_size, learning_rate, seed, dedup, out_path,
):
    """Train a unit language model on token files named in a manifest."""
    from .tokenizer import deduplicate

    manifest = read_manifest(manifest_path)
    corpus = [read_tokens(manifest.resolve(e)) for e in manifest if e.payload_kind == "tokens"]
    if not corpus:
        raise ValidationError("manifest has no tokens entries")
    if dedup:
        corpus = [deduplicate(seq) for seq in corpus]
    Path(out_path).parent.mkdir(parents=True, exist_ok=True)
    if backend == "ngram":
        model = train_ngram(corpus, order=order, smoothing_k=smoothing_k)
        write_ngram(model, out_path)
        click.echo(
            f"trained {order}-gram over V={model.vocab_size}"
            f" ({len(model.counts)} contexts) -> {out_path}"
        )
    else:
        config = RecurrentTrainConfig(
            embed_dim=embed_dim,
            hidden_dim=hidden_dim,
            epochs=epochs,
            batch_size=batch_size,
            learning_rate=learning_rate,
            seed=seed,
        )
        model = train_recurrent(corpus, config)
        write_recurrent(model, out_path)
        losses = ", ".join(f"{loss:.4f}" for loss in model.train_losses)
        click.echo(f"trained rnn over V={model.vocab_size} (loss/epoch: {losses}) -> {out_path}")


@cli.command("score")
@click.option("--model", "model_path", type=click.Path(exists=True, dir_okay=False), help="GIBN or GIBR model file.")
@click.option("--external", is_flag=True, help="Score GIBL logits payloads directly.")
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--dedup/--no-dedup", default=False, show_default=True)
@click.option("--codebook", "codebook_path", type=click.Path(exists=True, dir_okay=False), help="Needed for features payloads.")
@click.option("--jobs", default=None, type=int, help="Parallel workers [default: all cores].")
@click.option("--out", "out_prefix", required=True, help="Report prefix; writes PREFIX.jsonl and PREFIX.tsv.")
def cmd_score(model_path, external, manifest_path, dedup, codebook_path, jobs, out_prefix):
    """Score every manifest entry; emit a JSONL report and a TSV table."""
    if external == (model_path is not None):
        raise ValidationError("pass exactly one of --model or --external")
    model = None
    if model_path:
        kind = probe_kind(model_path)
        if kind == "ngram":
            model = read_ngram(model_path)
        elif kind == "recurrent":
            model = read_recurrent(model_path)
        else:
            raise ValidationError(f"--model expects a GIBN or GIBR file, found {kind!r}")
    codebook = read_codebook(codebook_path) if codebook_path else None
    manifest = read_manifest(manifest_path)
    report = score_corpus(
        model,
        manifest,
        dedup=dedup,
        codebook=codebook,
        external=external,
        jobs=jobs or _default_jobs(),
    )
    out = Path(out_prefix)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_report(report, out.with_suffix(".jsonl"), out.with_suffix(".tsv"))
    for s in report.summaries:
        click.echo(
            f"{s.condition}: mean {s.mean:.4f} nats/token (sd {s.stddev:.4f}, n={s.count})"
        )
    if report.skipped:
        for skip in report.skipped:
            click.echo(f"skipped {skip.id}: {skip.reason}", err=True)
        raise _PartialFailure(f"{len(report.skipped)} entries skipped")
    click.echo(f"wrote {out.with_suffix('.jsonl')} and {out.with_suffix('.tsv')}")


@cli.command("error-rate")
@click.option("--ref-manifest", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Transcript file (word/phone) or token-manifest (token).")
@click.option("--hyp-manifest", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--unit", type=click.Choice(["word", "phone", "token"]), default="word", show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def cmd_error_rate(ref_manifest, hyp_manifest, unit, out_path):
    """Pooled and per-utterance edit-distance error rates.

    Word units are normalized (lowercase, [.,!?;:\"] stripped); phone units
    split on whitespace verbatim; token units read GIBT files via manifests.
    """
    if unit == "token":
        ref_map = _token_symbol_map(ref_manifest)
        hyp_map = _token_symbol_map(hyp_manifest)
    else:
        normalize = normalize_words if unit == "word" else str.split
        ref_map = {k: normalize(v) for k, v in read_transcripts(ref_manifest).items()}
        hyp_map = {k: normalize(v) for k, v in read_transcripts(hyp_manifest).items()}

    lines = []
    total_errors = 0
    total_n = 0
    matched = 0
    for utt_id, ref in ref_map.items():
        if utt_id not in hyp_map:
            lines.append({"kind": "skip", "id": utt_id, "reason": "missing hypothesis"})
            continue
        result = align(ref, hyp_map[utt_id])
        matched += 1
        total_errors += result.distance
        total_n += result.reference_length
        lines.append(
            {
                "kind": "pair",
                "id": utt_id,
                "reference_length": result.reference_length,
                "hits": result.hits,
                "substitutions": result.substitutions,
                "deletions": result.deletions,
                "insertions": result.insertions,
                "error_rate": result.error_rate if result.rate_defined else None,
            }
        )
    for utt_id in hyp_map:
        if utt_id not in ref_map:
            lines.append({"kind": "skip", "id": utt_id, "reason": "missing reference"})
    if matched == 0:
        raise ValidationError("no utterance ids shared between reference and hypothesis")
    if total_n == 0:
        raise ValidationError("all matched references are empty; pooled rate undefined")
    pooled = total_errors / total_n
    lines.append(
        {
            "kind": "pooled",
            "error_rate": pooled,
            "total_errors": total_errors,
            "total_reference_length": total_n,
            "pairs": matched,
        }
    )
    Path(out_path).parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", encoding="utf-8") as f:
        for obj in lines:
            f.write(json.dumps(obj, separators=(",", ":")) + "\n")
    click.echo(f"pooled {unit} error rate: {pooled:.4f} ({matched} pairs) -> {out_path}")


def _token_symbol_map(manifest_path: str) -> dict[str, list[int]]:
    manifest = read_manifest(manifest_path)
    out = {}
    for entry in manifest:
        if entry.payload_kind != "tokens":
            raise ValidationError(f"entry {entry.id!r}: token error rate needs tokens payloads")
        out[entry.id] = read_tokens(manifest.resolve(entry)).tokens.tolist()
    return out


@cli.command("eval-correlate")
@click.option("--scores", "scores_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--reference", "reference_path", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Manifest with reference_metric fields, or `id value` text.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
def cmd_eval_correlate(scores_path, reference_path, out_dir):
    """Correlate report scores against per-utterance reference metrics."""
    report = read_report(scores_path)
    reference = read_reference_metrics(reference_path)
    analysis = condition_report(report, reference)
    write_analysis(analysis, out_dir, stem="correlate")
    for corr in analysis.correlations:
        if corr.pcc is not None:
            click.echo(
                f"{corr.scope}: |PCC| {corr.abs_pcc:.3f} |SRCC| {corr.abs_srcc:.3f}"
                f" (signed {corr.pcc:+.3f}/{corr.srcc:+.3f}, n={corr.n})"
            )
        else:
            click.echo(f"{corr.scope}: n={corr.n}, {corr.note}")
    if analysis.unmatched_scores:
        click.echo(f"unmatched score ids: {len(analysis.unmatched_scores)}", err=True)


@cli.command("eval-distributions")
@click.option("--scores", "scores_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--bins", default=30, show_default=True)
@click.option("--bandwidth", default=None, type=float, help="KDE bandwidth [default: Silverman].")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
def cmd_eval_distributions(scores_path, bins, bandwidth, out_dir):
    """Per-condition histograms and kernel density estimates."""
    report = read_report(scores_path)
    analysis = condition_report(report, None, bins=bins, bandwidth=bandwidth)
    written = write_analysis(analysis, out_dir, stem="distributions")
    for dist in analysis.distributions:
        mode = f"{dist.kde.mode:.4f}" if dist.kde else f"n/a ({dist.kde_note})"
        click.echo(f"{dist.condition}: n={dist.count} mean={dist.mean:.4f} kde-mode={mode}")
    click.echo("wrote " + ", ".join(str(p) for p in written))


@cli.command("run")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--stages", default=None, help="Comma-separated subset of codebook,tokenize,train-ulm,score,eval.")
@click.option("--workdir", default=None, type=click.Path(file_okay=False),
              help=f"Override the config workdir (default also honors ${WORKDIR_ENV}).")
@click.option("--seed", default=None, type=int, help="Override the config seed.")
@click.option("--jobs", default=None, type=int, help="Parallel workers [default: all cores].")
def cmd_run(config_path, stages, workdir, seed, jobs):
    """Run the pipeline stages described by a YAML config."""
    overrides = {}
    if workdir is not None:
        overrides["workdir"] = workdir
    if seed is not None:
        overrides["seed"] = seed
    config = load_run_config(config_path, overrides)
    stage_list = [s.strip() for s in stages.split(",") if s.strip()] if stages else None
    result = run_pipeline(config, stage_list, jobs=jobs or _default_jobs())
    for stage in result.stages_run:
        for path in result.artifacts.get(stage, []):
            click.echo(f"{stage}: {path}")
    if result.skipped:
        for skip in result.report.skipped if result.report else []:
            click.echo(f"skipped {skip.id}: {skip.reason}", err=True)
        raise _PartialFailure(f"{result.skipped} entries skipped")


@cli.command("check")
@click.argument("paths", nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False))
def cmd_check(paths):
    """Validate files against the interchange formats (by magic or .jsonl)."""
    readers = {
        "features": read_features,
        "tokens": read_tokens,
        "logits": read_logits,
        "codebook": read_codebook,
        "ngram": read_ngram,
        "recurrent": read_recurrent,
    }
    for path in paths:
        p = Path(path)
        if p.suffix == ".jsonl":
            try:
                report = read_report(p)
                click.echo(f"OK {p} report ({len(report.records)} records)")
                continue
            except (FormatError, ValidationError):
                manifest = read_manifest(p)
                for entry in manifest:
                    target = manifest.resolve(entry)
                    kind = probe_kind(target)
                    if kind != entry.payload_kind:
                        raise ValidationError(
                            f"entry {entry.id!r}: payload_kind {entry.payload_kind!r}"
                            f" but file is {kind!r}"
                        )
                click.echo(f"OK {p} manifest ({len(manifest)} entries)")
                continue
        kind = probe_kind(p)
        obj = readers[kind](p)
        detail = {
            "features": lambda o: f"{o.frame_count}x{o.dim}",
            "tokens": lambda o: f"{len(o)} tokens, V={o.vocab_size}",
            "logits": lambda o: f"{o.step_count} steps, V={o.vocab_size}",
            "codebook": lambda o: f"k={o.k}, dim={o.dim}",
            "ngram": lambda o: f"order={o.order}, V={o.vocab_size}",
            "recurrent": lambda o: f"V={o.vocab_size}, E={o.embed_dim}, H={o.hidden_dim}",
        }[kind](obj)
        click.echo(f"OK {p} {kind} ({detail})")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Abort:
        return 130
    except click.UsageError as exc:
        click.echo(f"error: {exc.format_message()}", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except _PartialFailure as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    except _VALIDATION as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    except (_RUNTIME + (OSError,)) as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    except GibscoreError as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
