import logging
from pathlib import Path
from typing import NoReturn

import typer
import uvicorn

from app.core.config import settings
from app.core.exceptions import SimulationError
from app.core.logging import configure_logging
from app.harness.config import describe_keys, load_config
from app.harness.report import write_reports
from app.harness.schemas import ExperimentConfig
from app.harness.service import run_sweep, simulate
from app.harness.validation import run_validation

logger = logging.getLogger(__name__)

app = typer.Typer(
    help="Joint radar and communication scene sensing: simulate, sweep and validate.",
    no_args_is_help=True,
)

ConfigOption = typer.Option(None, "--config", help="Experiment config file (TOML sections)")
PresetOption = typer.Option(None, "--preset", help="Preset name: paper or quick")
SeedOption = typer.Option(None, "--seed", min=0, help="Master seed")
MethodsOption = typer.Option(
    None, "--methods", help="Comma-separated methods: omp,turbo_cs,sea_separate,sea_joint"
)
WorkersOption = typer.Option(None, "--workers", min=1, help="Worker processes")


def _resolve(
    config: Path | None,
    preset: str | None,
    seed: int | None,
    methods: str | None,
    workers: int | None,
) -> tuple[ExperimentConfig, str | None]:
    if preset is None and config is None:
        preset = settings.DEFAULT_PRESET
    names = [name.strip() for name in methods.split(",") if name.strip()] if methods else None
    resolved = load_config(preset=preset, path=config, seed=seed, methods=names, workers=workers)
    return resolved, preset


def _fail(error: SimulationError) -> NoReturn:
    typer.echo(f"error: {error}", err=True)
    raise typer.Exit(code=2)


@app.callback()
def main() -> None:
    configure_logging()


@app.command("simulate")
def simulate_command(
    config: Path | None = ConfigOption,
    preset: str | None = PresetOption,
    seed: int | None = SeedOption,
    out: Path | None = typer.Option(None, "--out", help="Also write the report to this file"),
    methods: str | None = MethodsOption,
    snr: float = typer.Option(20.0, "--snr", help="SNR of the trial in dB"),
    trial: int = typer.Option(0, "--trial", min=0, help="Trial index"),
) -> None:
    """
    Run one trial and print the full report as JSON.
    """
    try:
        experiment, preset = _resolve(config, preset, seed, methods, None)
        report = simulate(experiment, snr, trial=trial, preset=preset)
    except SimulationError as e:
        _fail(e)
    text = report.model_dump_json(indent=2)
    if out is not None:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text + "\n")
        logger.info(f"Wrote {out}")
    typer.echo(text)


@app.command("sweep")
def sweep_command(
    config: Path | None = ConfigOption,
    preset: str | None = PresetOption,
    seed: int | None = SeedOption,
    out: Path = typer.Option(Path(settings.OUTPUT_DIR), "--out", help="Output directory"),
    methods: str | None = MethodsOption,
    workers: int | None = WorkersOption,
) -> None:
    """
    Monte Carlo SNR sweep; writes CSV tables and, if enabled, SVG curves.
    """
    try:
        experiment, _ = _resolve(config, preset, seed, methods, workers)
        records = run_sweep(experiment)
    except SimulationError as e:
        _fail(e)
    for path in write_reports(records, out, plots=experiment.sweep.plots):
        typer.echo(str(path))


@app.command("validate")
def validate_command(
    config: Path | None = ConfigOption,
    preset: str | None = PresetOption,
    seed: int | None = SeedOption,
) -> None:
    """
    Run the numerical self-checks; exit code 1 if any fails.
    """
    try:
        experiment, _ = _resolve(config, preset, seed, None, None)
    except SimulationError as e:
        _fail(e)
    results = run_validation(experiment, seed=experiment.sweep.seed)
    for result in results:
        typer.echo(f"{'PASS' if result.passed else 'FAIL'}  {result.name}  {result.detail}")
    if not all(result.passed for result in results):
        raise typer.Exit(code=1)


@app.command("keys")
def keys_command() -> None:
    """
    List every config key by section.
    """
    for section, keys in describe_keys().items():
        typer.echo(f"[{section}]")
        for key, description in keys.items():
            typer.echo(f"  {key}: {description}")


@app.command("serve")
def serve_command(
    host: str = typer.Option(settings.HOST, "--host", help="Bind address"),
    port: int = typer.Option(settings.PORT, "--port", help="Bind port"),
) -> None:
    """
    Serve the HTTP API with uvicorn.
    """
    uvicorn.run("app.main:app", host=host, port=port)


if __name__ == "__main__":
    app()
