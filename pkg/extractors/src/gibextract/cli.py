"""gibextract CLI: run pretrained (or toy stand-in) models over audio and
emit the scoring engine's file formats. Exit codes: 0 success, 1 bad
inputs/lockfile, 2 extraction ran but some files were skipped."""

from __future__ import annotations

import sys
from pathlib import Path

import click

from .errors import ExtractError
from .extract import asr_textlm_score, extract_features, extract_logits
from .jobs import ExtractorJob


def _job(model_id, inputs, out_dir, lockfile, condition, layer, device, batch_size):
    try:
        return ExtractorJob(
            model_id=model_id,
            inputs=tuple(Path(p) for p in inputs),
            output_dir=Path(out_dir),
            layer=layer,
            condition=condition,
            device=device,
            batch_size=batch_size,
            lockfile=Path(lockfile),
        )
    except ValueError as exc:
        raise click.UsageError(str(exc))


def _finish(job, result):
    result.write_job_report(job, job.output_dir / "job-report.json")
    click.echo(f"wrote {len(result.written)} files -> {result.manifest_path}")
    if result.transcripts_path is not None:
        click.echo(f"transcripts -> {result.transcripts_path}")
    for skip in result.skips:
        click.echo(f"skipped {skip.id}: {skip.reason}", err=True)
    return 2 if result.skips else 0


def _common_options(fn):
    fn = click.option("--lockfile", default="checkpoints.lock", show_default=True,
                      type=click.Path(dir_okay=False))(fn)
    fn = click.option("--out-dir", required=True, type=click.Path(file_okay=False))(fn)
    fn = click.option("--condition", default="default", show_default=True,
                      help="Condition label stamped into the manifest.")(fn)
    fn = click.option("--device", default="cpu", show_default=True)(fn)
    fn = click.option("--batch-size", default=1, show_default=True)(fn)
    fn = click.argument("inputs", nargs=-1, required=True,
                        type=click.Path(exists=True, dir_okay=False))(fn)
    return fn


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
def cli():
    """Bridge pretrained models into GIBF/GIBT/GIBL files + manifests."""


@cli.command("extract-features")
@click.option("--layer", required=True, type=int, help="SSL hidden-state layer to dump.")
@_common_options
def cmd_extract_features(layer, lockfile, out_dir, condition, device, batch_size, inputs):
    """Dump SSL features at a chosen layer, one GIBF per utterance."""
    job = _job("hubert_features", inputs, out_dir, lockfile, condition, layer, device, batch_size)
    sys.exit(_finish(job, extract_features(job)))


@cli.command("extract-logits")
@_common_options
def cmd_extract_logits(lockfile, out_dir, condition, device, batch_size, inputs):
    """Dump per-step speech-LM log-probs (GIBL). Inputs: audio or .gibt."""
    job = _job("speechlm_logits", inputs, out_dir, lockfile, condition, None, device, batch_size)
    sys.exit(_finish(job, extract_logits(job)))


@cli.command("asr-textlm")
@_common_options
def cmd_asr_textlm(lockfile, out_dir, condition, device, batch_size, inputs):
    """Transcribe audio and dump text-token log-probs (GIBL + transcripts)."""
    job = _job("asr_textlm", inputs, out_dir, lockfile, condition, None, device, batch_size)
    sys.exit(_finish(job, asr_textlm_score(job)))


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except SystemExit as exc:
        return int(exc.code or 0)
    except click.UsageError as exc:
        click.echo(f"error: {exc.format_message()}", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except ExtractError as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
