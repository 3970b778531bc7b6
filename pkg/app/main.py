"""
goodwill-ctrl
-------------
Command-line entry point. Every problem subcommand reads a scenario file,
runs it through the orchestrator and prints a short summary; the full
report lands in report.txt next to the other exports.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Optional

import click
from pydantic import ValidationError

from app import config
from app.errors import GoodwillError
from app.models.schemas import ScenarioConfig
from app.solvers.orchestrator import run
from app.tools.scenario_config import load_config, parse_config, render_config


def _load(path: str, kind: str) -> ScenarioConfig:
    cfg = load_config(path)
    if cfg.problem.kind != kind:
        # re-parse so the per-kind requirements are checked for the new kind
        cfg = cfg.model_copy(update={"problem": cfg.problem.model_copy(update={"kind": kind})})
        cfg = parse_config(render_config(cfg))
    return cfg


def _run_kind(kind: str, config_path: str, out: Optional[str], seed: Optional[int]) -> None:
    try:
        cfg = _load(config_path, kind)
        report = run(cfg, seed=seed, out_dir=Path(out) if out else None)
    except (GoodwillError, ValidationError) as exc:
        raise click.ClickException(str(exc)) from exc

    for key, value in report.values.items():
        click.echo(f"{key} = {value:.12g}")
    click.echo(f"wrote {len(report.files)} files to {report.files[-1].parent}")
    if not report.ok:
        raise click.ClickException("verification checks failed; see report.txt")


@click.group()
@click.option("--log-level", default=config.DEFAULT_LOG_LEVEL, show_default=True, help="Python logging level")
def cli(log_level: str) -> None:
    """Optimal advertising control of the distributed goodwill model."""
    logging.basicConfig(level=log_level.upper(), format="%(levelname)s %(name)s: %(message)s")


def _problem_command(name: str, kind: str, help_text: str) -> None:
    @cli.command(name=name, help=help_text)
    @click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
    @click.option("--out", default=None, help="Output directory (overrides [output] output_dir)")
    @click.option("--seed", type=int, default=None, help="Seed for the random Gateaux directions")
    def command(config_path: str, out: Optional[str], seed: Optional[int]) -> None:
        _run_kind(kind, config_path, out, seed)


_problem_command("simulate", "simulate", "Uncontrolled goodwill evolution.")
_problem_command("mp-quadratic", "mp_quadratic", "Linear reward, capped quadratic cost.")
_problem_command("mp-linear", "mp_linear", "Linear reward, capped linear cost (bang-bang).")
_problem_command("budget", "budget", "Linear reward under an energy budget.")
_problem_command("p1", "p1", "Indefinite linear-quadratic problem.")
_problem_command("p2", "p2", "Tracking a target goodwill profile.")
_problem_command("p2-sweep", "p2_sweep", "Tracking uniform targets for a list of levels.")
_problem_command("verify", "verify", "Cross-check solvers against the independent oracles.")


@cli.command(name="render-config")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
def render_config_command(config_path: str) -> None:
    """Print the scenario with every default made explicit."""
    try:
        click.echo(render_config(load_config(config_path)), nl=False)
    except GoodwillError as exc:
        raise click.ClickException(str(exc)) from exc


if __name__ == "__main__":
    cli()
