"""Command-line front end: train, aggregate, plot, validate-config.

Exit codes: 0 on success, 1 for configuration errors, 2 for runtime failures.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click

from .config import ALGORITHMS, ExperimentConfig, load_config
from .experiment import aggregate_runs, run_experiment
from .validation import ConfigError

EXIT_CONFIG_ERROR = 1
EXIT_RUNTIME_ERROR = 2


def _fail(message: str, code: int) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


@click.group()
def main() -> None:
    """Cooperative grid-world Q-learning with relational team rewards."""


@main.command()
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="YAML config file; defaults apply when omitted.")
@click.option("--seeds", default=None, help="Comma-separated seed list, e.g. 0,1,2.")
@click.option("--algorithm", type=click.Choice(ALGORITHMS), default=None)
@click.option("--out", "out_dir", type=click.Path(), default=None, help="Run output directory.")
@click.option("--episodes", type=int, default=None)
@click.option("--workers", type=int, default=None, help="Parallel seed workers.")
def train(config_path, seeds, algorithm, out_dir, episodes, workers) -> None:
    """Train the configured seeds and write one CSV per run."""
    try:
        config = load_config(config_path) if config_path else ExperimentConfig()
        if seeds is not None:
            try:
                config.seeds = [int(s) for s in seeds.split(",") if s.strip() != ""]
            except ValueError:
                raise ConfigError(f"seeds must be a comma-separated integer list, got {seeds!r}")
        if algorithm is not None:
            config.algorithm = algorithm
        if out_dir is not None:
            config.out_dir = out_dir
        if episodes is not None:
            config.episodes = episodes
        if workers is not None:
            config.workers = workers
        from .config import validate_config

        validate_config(config)
    except ConfigError as exc:
        _fail(str(exc), EXIT_CONFIG_ERROR)

    try:
        outcome = run_experiment(config)
    except Exception as exc:  # pragma: no cover - defensive
        _fail(f"training failed: {exc}", EXIT_RUNTIME_ERROR)
    for seed, path in sorted(outcome["completed"].items()):
        click.echo(f"seed {seed}: {path}")
    if outcome["failed"]:
        for seed, err in sorted(outcome["failed"].items()):
            click.echo(f"seed {seed} failed:\n{err}", err=True)
        sys.exit(EXIT_RUNTIME_ERROR)


@main.command()
@click.option("--runs", "runs_dir", type=click.Path(), required=True,
              help="Directory holding run_seed*.csv and manifest.json.")
@click.option("--out", "out_file", type=click.Path(), required=True,
              help="Summary CSV path; curves and meta siblings are written next to it.")
def aggregate(runs_dir, out_file) -> None:
    """Aggregate run CSVs into final-reward statistics and curves."""
    try:
        summary = aggregate_runs(runs_dir, out_file)
    except ConfigError as exc:
        _fail(str(exc), EXIT_CONFIG_ERROR)
    except Exception as exc:
        _fail(f"aggregation failed: {exc}", EXIT_RUNTIME_ERROR)
    click.echo(f"wrote {out_file}")
    for phase, agents in summary["phases"].items():
        for agent, (mean, ci) in agents.items():
            click.echo(f"{phase} agent{agent}: {mean:.2f} +/- {ci:.2f}")


@main.command()
@click.option("--aggregate", "aggregate_file", type=click.Path(), required=True,
              help="Aggregate summary CSV (or its _curves.csv sibling).")
@click.option("--out", "out_dir", type=click.Path(), required=True)
def plot(aggregate_file, out_dir) -> None:
    """Render reward-curve charts from an aggregate."""
    from .plotting import render_charts

    try:
        written = render_charts(aggregate_file, out_dir)
    except (FileNotFoundError, ValueError) as exc:
        _fail(str(exc), EXIT_CONFIG_ERROR)
    except Exception as exc:
        _fail(f"plotting failed: {exc}", EXIT_RUNTIME_ERROR)
    for path in written:
        click.echo(f"wrote {path}")


@main.command("validate-config")
@click.option("--config", "config_path", type=click.Path(), required=True)
def validate_config_cmd(config_path) -> None:
    """Check a config file; prints the resolved settings on success."""
    try:
        config = load_config(config_path)
    except ConfigError as exc:
        _fail(str(exc), EXIT_CONFIG_ERROR)
    click.echo(f"{Path(config_path).name} is valid")
    click.echo(
        f"algorithm={config.algorithm} episodes={config.episodes} "
        f"seeds={config.seeds} agents={config.n_agents}"
    )


if __name__ == "__main__":
    main()
