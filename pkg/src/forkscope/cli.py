"""Command-line interface.

Exit codes: 0 success, 1 completed with skipped repositories, 2 config or
usage error, 3 fatal stage error.
"""

from __future__ import annotations

import logging
import os
import sys

import click

from . import __version__
from .errors import ConfigInvalid, ForkscopeError
from .pipeline import load_config, run_pipeline

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_CONFIG = 2
EXIT_FATAL = 3


@click.group()
@click.version_option(version=__version__, prog_name="forkscope")
@click.option("--config", "config_path", type=click.Path(), required=True,
              help="Pipeline configuration file (YAML).")
@click.option("--output", "output_dir", type=click.Path(), default=None,
              help="Override the configured output directory.")
@click.option("--jobs", type=int, default=None,
              help="Worker pool size for per-repo stages (default: logical CPUs).")
@click.option("--seed", type=int, default=None,
              help="Override the clustering seed.")
@click.option("--log-level", default="warning",
              type=click.Choice(["debug", "info", "warning", "error"]),
              help="Logging verbosity.")
@click.pass_context
def main(ctx: click.Context, config_path: str, output_dir: str | None,
         jobs: int | None, seed: int | None, log_level: str) -> None:
    """Repository forensics: maintenance, similarity, lineage, and
    vulnerability-patch reports from a config-driven pipeline."""
    logging.basicConfig(
        level=getattr(logging, log_level.upper()),
        format="%(levelname)s %(name)s: %(message)s",
    )
    ctx.ensure_object(dict)
    ctx.obj["config_path"] = config_path
    ctx.obj["output_dir"] = output_dir
    ctx.obj["jobs"] = jobs if jobs is not None else (os.cpu_count() or 1)
    ctx.obj["seed"] = seed


def _execute(ctx: click.Context, stages: list[str] | None) -> None:
    opts = ctx.obj
    try:
        config = load_config(opts["config_path"])
        if opts["output_dir"]:
            config.output_dir = opts["output_dir"]
        if opts["seed"] is not None:
            config.seed = opts["seed"]
        manifest = run_pipeline(config, stages=stages, jobs=opts["jobs"])
    except ConfigInvalid as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    except ForkscopeError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_FATAL)
    ran = [s for s in manifest.stages if not s.startswith("_")]
    click.echo(f"completed stages: {', '.join(ran)}")
    if manifest.skipped:
        for entry in manifest.skipped:
            click.echo(
                f"skipped {entry['repo_id']} in {entry['stage']}: {entry['reason']}",
                err=True,
            )
        sys.exit(EXIT_PARTIAL)
    sys.exit(EXIT_OK)


def _stage_command(name: str, help_text: str):
    @main.command(name=name, help=help_text)
    @click.pass_context
    def _cmd(ctx: click.Context) -> None:
        _execute(ctx, [name])

    return _cmd


_stage_command("ingest", "Load repository histories and hosting metadata.")
_stage_command("features", "Compute the 32 maintenance features per repository.")
_stage_command("cluster", "Cluster repositories by maintenance activity (silhouette-selected k).")
_stage_command("select-features", "Identify the key attributes behind the clustering.")
_stage_command("similarity", "Score head-snapshot code similarity for every repo pair.")
_stage_command("lineage", "Infer fork lineage against the configured parent repository.")
_stage_command("vulnscan", "Scan histories against vulnerability signatures.")
_stage_command("crosstab", "Cross-tabulate survivability against clusters, vulns, and similarity.")
_stage_command("stats", "Statistical summaries: patch times, rank tests, correlations.")


@main.command(name="run", help="Run the full pipeline in dependency order.")
@click.pass_context
def run_cmd(ctx: click.Context) -> None:
    _execute(ctx, None)


if __name__ == "__main__":
    main()
