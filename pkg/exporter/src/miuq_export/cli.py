"""Command line interface for dataset exports.

Exit codes: 0 when at least one subject exported (failures are printed
as warnings), 1 for filesystem or download-stack problems, 2 for
invalid requests.
"""

from __future__ import annotations

import functools
import sys
from pathlib import Path

import click

from .datasets import DATASETS
from .errors import ExportError, MissingDependencyError
from .export import ExportSpec, export_spec


def _guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except MissingDependencyError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)
        except ExportError as exc:
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


def _parse_subjects(text: str):
    if text.strip().lower() == "all":
        return None
    try:
        return tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise ExportError(
            f"subjects must be 'all' or a comma-separated list of numbers, got {text!r}"
        ) from None


@click.group()
@click.version_option(package_name="miuq-export", prog_name="miuq-export")
def main():
    """Download public motor-imagery datasets as epoch-set directories."""


@main.command()
@click.option("--dataset", required=True, type=click.Choice(sorted(DATASETS)),
              help="Which dataset to export.")
@click.option("--subjects", default="all", show_default=True,
              help="'all' or a comma-separated list like 1,2,5.")
@click.option("--out", required=True, type=click.Path(path_type=Path),
              help="Directory receiving one epoch-set subdirectory per subject.")
@click.option("--overwrite", is_flag=True, help="Replace existing subject directories.")
@_guarded
def export(dataset, subjects, out, overwrite):
    """Download subjects and write raw cue-locked epochs."""
    spec = ExportSpec(
        dataset=dataset,
        out_dir=out,
        subjects=_parse_subjects(subjects),
        overwrite=overwrite,
    )
    result = export_spec(spec)
    for failure in result.failures:
        click.echo(
            f"warning: subject {failure['subject']} failed: {failure['error']}", err=True
        )
    for path in result.written:
        click.echo(f"wrote {path}")
    click.echo(f"exported {len(result.written)} subject(s), {len(result.failures)} failed")


@main.command()
@_guarded
def datasets():
    """List the supported datasets."""
    width = max(len(k) for k in DATASETS) + 2
    for key in sorted(DATASETS):
        info = DATASETS[key]
        classes = ", ".join(info.classes)
        click.echo(f"{key.ljust(width)}{info.moabb_class.ljust(16)}{classes}")
        click.echo(f"{''.ljust(width)}{info.description}")


if __name__ == "__main__":
    main()
