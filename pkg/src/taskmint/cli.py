"""Command-line entry points for the pipeline.

Exit codes: 0 success, 1 usage error, 2 dependency or configuration
error, 3 transport error.
"""

from __future__ import annotations

import logging
import sys

import click

from .config import load_config
from .errors import (
    ConfigError,
    DependencyError,
    EmptyResponse,
    EmptyRun,
    ProviderError,
    StaleRun,
    TaskmintError,
    TransportError,
)
from .pipeline import Pipeline

logger = logging.getLogger(__name__)


@click.group()
@click.option("--config", "config_path", type=click.Path(), default=None, help="JSON config file.")
@click.option("--seed", type=int, default=None, help="Override the run seed.")
@click.option("--force", is_flag=True, help="Re-run steps even when already complete.")
@click.option("--verbose", is_flag=True, help="Log progress to stderr.")
@click.pass_context
def cli(ctx: click.Context, config_path: str | None, seed: int | None, force: bool, verbose: bool) -> None:
    """Convert annotated-dataset metadata into instruction-tuning data."""
    logging.basicConfig(
        level=logging.INFO if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    ctx.ensure_object(dict)
    ctx.obj["config_path"] = config_path
    ctx.obj["force"] = force
    ctx.obj["overrides"] = {} if seed is None else {"seed": seed}


def _pipeline(ctx: click.Context, extra: dict | None = None) -> Pipeline:
    overrides = dict(ctx.obj["overrides"])
    overrides.update(extra or {})
    config = load_config(ctx.obj["config_path"], overrides)
    return Pipeline(config)


def _run(ctx: click.Context, step: str, extra: dict | None = None) -> None:
    pipeline = _pipeline(ctx, extra)
    pipeline.run_step(step, force=ctx.obj["force"])
    click.echo(f"{step}: done (run {pipeline.run_id})")


@cli.command()
@click.option("--out", type=click.Path(), default=None, help="Base directory for run artifacts.")
@click.option("--max-instances", type=int, default=None, help="Instance cap per dataset.")
@click.pass_context
def harvest(ctx: click.Context, out: str | None, max_instances: int | None) -> None:
    """Collect and normalize dataset metadata."""
    extra: dict = {}
    if out is not None:
        extra["run_dir"] = out
    if max_instances is not None:
        extra["harvest.max_instances"] = max_instances
    _run(ctx, "harvest", extra)


@cli.command()
@click.option("--mode", type=click.Choice(["aware", "unaware", "both"]), default=None)
@click.option("--llm-config", type=click.Path(), default=None, help="JSON file merged into the llm section.")
@click.option("--replay-cache", type=click.Path(), default=None, help="Recorded exchanges file.")
@click.pass_context
def generate(ctx: click.Context, mode: str | None, llm_config: str | None, replay_cache: str | None) -> None:
    """Generate candidate tasks with the configured LLM backend."""
    extra: dict = {}
    if mode is not None:
        extra["generation.modes"] = ["aware", "unaware"] if mode == "both" else [mode]
    if llm_config is not None:
        import json

        with open(llm_config, encoding="utf-8") as fp:
            for key, value in json.load(fp).items():
                extra[f"llm.{key}"] = value
    if replay_cache is not None:
        extra["llm.replay_cache"] = replay_cache
    _run(ctx, "generate", extra)


@cli.command()
@click.pass_context
def validate(ctx: click.Context) -> None:
    """Filter, dedup, and label-augment the generated tasks."""
    _run(ctx, "validate")


@cli.command()
@click.option("--cap", type=int, default=None, help="Max instances per task.")
@click.pass_context
def assemble(ctx: click.Context, cap: int | None) -> None:
    """Expand valid tasks over instances into training records."""
    extra = {} if cap is None else {"assembly.instance_cap": cap}
    _run(ctx, "assemble", extra)


@cli.command()
@click.option("--profile", default=None, help="Named sampling profile.")
@click.pass_context
def sample(ctx: click.Context, profile: str | None) -> None:
    """Draw an evaluation subset under a sampling profile."""
    extra = {} if profile is None else {"sampling.profile": profile}
    _run(ctx, "sample", extra)


@cli.command("plan-replay")
@click.option("--strategy", default=None, help="Replay selection strategy.")
@click.option("--replay-count", type=int, default=None)
@click.option(
    "--embeddings-from",
    type=click.Choice(["service", "file", "hash"]),
    default=None,
    help="Where task embeddings come from.",
)
@click.pass_context
def plan_replay(
    ctx: click.Context, strategy: str | None, replay_count: int | None, embeddings_from: str | None
) -> None:
    """Plan continual-learning stages with replay-task selection."""
    extra: dict = {}
    if strategy is not None:
        extra["replay.strategy"] = strategy
    if replay_count is not None:
        extra["replay.replay_count"] = replay_count
    if embeddings_from is not None:
        extra["replay.embeddings.source"] = embeddings_from
    _run(ctx, "plan-replay", extra)


@cli.command()
@click.pass_context
def cost(ctx: click.Context) -> None:
    """Account token spend against the configured price table."""
    _run(ctx, "cost")


@cli.command()
@click.pass_context
def report(ctx: click.Context) -> None:
    """Print a one-line summary of the run's artifacts."""
    pipeline = _pipeline(ctx)
    click.echo(pipeline.report())


def main(argv: list[str] | None = None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False, prog_name="taskmint")
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.ClickException as exc:
        exc.show()
        return 1
    except click.Abort:
        click.echo("aborted", err=True)
        return 1
    except (ConfigError, DependencyError, StaleRun, EmptyRun) as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    except (TransportError, EmptyResponse, ProviderError) as exc:
        click.echo(f"transport error: {exc}", err=True)
        return 3
    except TaskmintError as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
