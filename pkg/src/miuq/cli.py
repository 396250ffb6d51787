"""Command line interface.

Exit codes: 0 on success, 1 for filesystem and environment problems,
2 for invalid inputs (bad options, malformed files, impossible configs).
"""

from __future__ import annotations

import functools
import json
import os
import sys
import tempfile
from pathlib import Path

import click

from .data_io import (
    generate_synthetic,
    read_epochset,
    read_predictions,
    write_epochset,
    write_predictions,
)
from .errors import MiuqError
from .pipeline import (
    MODEL_NAMES,
    RunConfig,
    config_from_dict,
    evaluate_external,
    format_report_table,
    run_benchmark,
)
from .plots import save_report_plots
from .signal import BandpassSpec, preprocess_epochs

OUT_DIR_ENVVAR = "MIUQ_OUT_DIR"


def _guarded(fn):
    """Map domain errors to exit 2 and environment errors to exit 1."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except MiuqError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(2)
        except BrokenPipeError:
            # reader (e.g. head) went away; die quietly like other CLIs
            try:
                sys.stdout.close()
            except OSError:
                pass
            sys.exit(1)
        except OSError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)

    return wrapper


def _write_json_atomic(data: dict, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(data, indent=2, sort_keys=True) + "\n"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@click.group()
@click.version_option(package_name="miuq", prog_name="miuq")
def main():
    """Calibration-aware benchmarking of covariance-based decoders."""


@main.command()
@click.option("--out", required=True, type=click.Path(path_type=Path), help="Output directory; one subdirectory per subject.")
@click.option("--n-subjects", default=1, show_default=True, type=int)
@click.option("--n-classes", default=2, show_default=True, type=int)
@click.option("--n-channels", default=8, show_default=True, type=int)
@click.option("--epochs-per-class", default=60, show_default=True, type=int)
@click.option("--n-samples", default=500, show_default=True, type=int)
@click.option("--sample-rate", default=250.0, show_default=True, type=float)
@click.option("--separation", default=3.0, show_default=True, type=float, help="Pairwise distance between class covariance prototypes.")
@click.option("--jitter", default=0.1, show_default=True, type=float)
@click.option("--ambiguous-fraction", default=0.0, show_default=True, type=float, help="Fraction of each class drawn midway to the next class.")
@click.option("--seed", default=0, show_default=True, type=int, help="Base seed; subject i uses seed + i.")
@click.option("--dataset-id", default="synthetic", show_default=True)
@click.option("--overwrite", is_flag=True, help="Replace existing subject directories.")
@_guarded
def synth(out, n_subjects, n_classes, n_channels, epochs_per_class, n_samples,
          sample_rate, separation, jitter, ambiguous_fraction, seed, dataset_id,
          overwrite):
    """Generate synthetic epoch sets with known class geometry."""
    if n_subjects < 1:
        raise click.BadParameter("--n-subjects must be at least 1")
    out.mkdir(parents=True, exist_ok=True)
    for i in range(n_subjects):
        subject_id = f"s{i + 1:02d}"
        es = generate_synthetic(
            n_classes=n_classes,
            n_channels=n_channels,
            epochs_per_class=epochs_per_class,
            n_samples=n_samples,
            sample_rate_hz=sample_rate,
            separation=separation,
            jitter=jitter,
            ambiguous_fraction=ambiguous_fraction,
            seed=seed + i,
            dataset_id=dataset_id,
            subject_id=subject_id,
        )
        target = out / subject_id
        write_epochset(es, target, overwrite=overwrite)
        click.echo(f"wrote {target} ({es.n_epochs} epochs, {es.n_channels} channels)")


@main.command()
@click.argument("src", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.argument("dst", type=click.Path(path_type=Path))
@click.option("--low-hz", default=7.5, show_default=True, type=float)
@click.option("--high-hz", default=30.0, show_default=True, type=float)
@click.option("--filter-order", default=4, show_default=True, type=int)
@click.option("--overwrite", is_flag=True)
@_guarded
def preprocess(src, dst, low_hz, high_hz, filter_order, overwrite):
    """Band-pass filter a stored epoch set into a new directory."""
    es = read_epochset(src)
    spec = BandpassSpec(
        sample_rate_hz=es.sample_rate_hz, low_hz=low_hz, high_hz=high_hz,
        order=filter_order,
    )
    filtered = preprocess_epochs(es, spec)
    write_epochset(filtered, dst, overwrite=overwrite)
    click.echo(f"wrote {dst} (band {low_hz}-{high_hz} Hz, order {filter_order})")


def _collect_overrides(**kwargs) -> dict:
    return {key: value for key, value in kwargs.items() if value is not None}


@main.command()
@click.argument("epoch_dirs", nargs=-1, required=True,
                type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option("--models", default=",".join(MODEL_NAMES), show_default=True,
              help="Comma-separated model names.")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="JSON file with run settings; flags override its values.")
@click.option("--out", envvar=OUT_DIR_ENVVAR, default="miuq_out", show_default=True,
              type=click.Path(path_type=Path),
              help=f"Output directory (env {OUT_DIR_ENVVAR}).")
@click.option("--train-frac", default=None, type=float)
@click.option("--seed", default=None, type=int)
@click.option("--shrinkage", default=None, type=float)
@click.option("--n-filters", default=None, type=int)
@click.option("--n-bins", default=None, type=int)
@click.option("--brier-mode", default=None, type=click.Choice(["multiclass_sum", "binary_positive"]))
@click.option("--temperature-objective", default=None, type=click.Choice(["ece", "nll"]))
@click.option("--low-hz", default=None, type=float)
@click.option("--high-hz", default=None, type=float)
@click.option("--filter-order", default=None, type=int)
@click.option("--lda-ridge", default=None, type=float)
@click.option("--skip-errors", is_flag=True,
              help="Keep going when one subject/model pair fails.")
@_guarded
def run(epoch_dirs, models, config_path, out, skip_errors, **overrides):
    """Benchmark models on stored epoch sets, one directory per subject.

    Writes report.json plus one predictions CSV per subject and model,
    and prints a per-dataset summary table.
    """
    settings = {}
    if config_path is not None:
        try:
            with open(config_path) as fh:
                settings = json.load(fh)
        except json.JSONDecodeError as exc:
            click.echo(f"error: config file {config_path} is not valid JSON: {exc}", err=True)
            sys.exit(2)
    settings.update(_collect_overrides(**overrides))
    config = config_from_dict(settings)

    names = [m.strip() for m in models.split(",") if m.strip()]
    sets = [read_epochset(d) for d in epoch_dirs]
    report, results = run_benchmark(sets, names, config, skip_errors=skip_errors)

    for failure in report["failures"]:
        click.echo(
            "warning: skipped {dataset_id}/{subject_id}/{model}: {error}".format(**failure),
            err=True,
        )

    out.mkdir(parents=True, exist_ok=True)
    report_path = out / "report.json"
    _write_json_atomic(report, report_path)
    predictions_dir = out / "predictions"
    predictions_dir.mkdir(exist_ok=True)
    for r in results:
        name = f"{r.dataset_id}_{r.subject_id}_{r.model}.csv"
        write_predictions(r.predictions, predictions_dir / name)

    click.echo(format_report_table(report), nl=False)
    click.echo(f"report: {report_path}")


@main.command("eval-external")
@click.argument("predictions_csv", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--n-bins", default=10, show_default=True, type=int)
@click.option("--brier-mode", default="multiclass_sum", show_default=True,
              type=click.Choice(["multiclass_sum", "binary_positive"]))
@click.option("--out", default=None, type=click.Path(path_type=Path),
              help="Write the JSON result here instead of stdout.")
@_guarded
def eval_external(predictions_csv, n_bins, brier_mode, out):
    """Score an externally produced predictions CSV."""
    pred = read_predictions(predictions_csv)
    config = RunConfig(n_bins=n_bins, brier_mode=brier_mode)
    result = evaluate_external(pred, config)
    if out is None:
        click.echo(json.dumps(result, indent=2, sort_keys=True))
    else:
        _write_json_atomic(result, out)
        click.echo(f"wrote {out}")


@main.command()
@click.argument("report_json", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--out", envvar=OUT_DIR_ENVVAR, default="miuq_plots", show_default=True,
              type=click.Path(path_type=Path),
              help=f"Output directory (env {OUT_DIR_ENVVAR}).")
@_guarded
def plot(report_json, out):
    """Render reliability and rejection figures from a report."""
    try:
        with open(report_json) as fh:
            report = json.load(fh)
    except json.JSONDecodeError as exc:
        click.echo(f"error: {report_json} is not valid JSON: {exc}", err=True)
        sys.exit(2)
    written = save_report_plots(report, out)
    for path in written:
        click.echo(f"wrote {path}")


@main.command()
@click.argument("epoch_dir", type=click.Path(exists=True, file_okay=False, path_type=Path))
@_guarded
def inspect(epoch_dir):
    """Print a stored epoch set's shape, classes, and provenance."""
    es = read_epochset(epoch_dir)
    click.echo(f"dataset:      {es.dataset_id}")
    click.echo(f"subject:      {es.subject_id}")
    click.echo(f"epochs:       {es.n_epochs}")
    click.echo(f"channels:     {es.n_channels} ({', '.join(es.channel_names)})")
    click.echo(f"samples:      {es.n_samples} per epoch")
    click.echo(f"sample rate:  {es.sample_rate_hz} Hz")
    click.echo("classes:")
    for cls in es.class_ids:
        click.echo(f"  {cls}: {es.labels.count(cls)} epochs")
    prov = es.provenance
    if prov:
        click.echo(f"provenance keys: {', '.join(sorted(prov))}")
    else:
        click.echo("provenance keys: (none)")


if __name__ == "__main__":
    main()
