import logging
import sys
from pathlib import Path
from typing import Optional

import click
import orjson
import typer
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from config import EXIT_OK, EXIT_USAGE, EXIT_VERIFICATION, TOOL_NAME, TOOL_VERSION
from lab_workflow import LabWorkflow
from nlqc.errors import ConfigError, NLQCError, ReportSchemaError
from run_config import load_run_config, report_schema, run_config_schema
from utils import format_seconds, resolve_output_path, write_report

logging.basicConfig(
    level=logging.INFO,
    format="%(message)s",
    datefmt="[%X]",
    handlers=[RichHandler(rich_tracebacks=True, show_path=False)],
)
logger = logging.getLogger(TOOL_NAME)

console = Console(stderr=True)
cli = typer.Typer(name=TOOL_NAME, help="Numerical laboratory for non-local quantum computation.", add_completion=False)
lab_workflow = LabWorkflow()


def render_summary(report, path: Path) -> None:
    table = Table(title=f"{TOOL_NAME} {report['subcommand']}", show_header=False)
    table.add_column("field", style="bold")
    table.add_column("value")
    table.add_row("status", report["status"])
    table.add_row("seed", str(report["seed"]))
    table.add_row("config hash", report["config_hash"])
    table.add_row("wall time", format_seconds(report["wall_time_s"]))
    if report["failure"]:
        table.add_row("failure", report["failure"])
    table.add_row("report", str(path))
    console.print(table)


@cli.command()
def run(
    config: Path = typer.Option(..., "--config", "-c", help="YAML or JSON run configuration"),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Report path (overrides the config)"),
    seed: Optional[int] = typer.Option(None, "--seed", min=0, help="Master seed (overrides the config)"),
    jobs: Optional[int] = typer.Option(None, "--jobs", "-j", min=1, help="Worker threads (overrides the config)"),
):
    """Run one subcommand from a configuration file and write its JSON report."""
    try:
        run_config = load_run_config(config)
        overrides = {k: v for k, v in {"seed": seed, "jobs": jobs}.items() if v is not None}
        if overrides:
            run_config = run_config.model_copy(update=overrides)
        report = lab_workflow.execute(run_config)
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        raise typer.Exit(EXIT_USAGE)
    except NLQCError as e:
        logger.error(f"{type(e).__name__}: {e}")
        raise typer.Exit(EXIT_USAGE)

    path = resolve_output_path(str(out) if out else run_config.output, run_config.subcommand, run_config.seed)
    try:
        write_report(path, report)
    except ReportSchemaError as e:
        logger.error(f"Report does not match the published schema: {e}")
        raise typer.Exit(EXIT_VERIFICATION)
    render_summary(report, path)
    if report["exit_code"] != EXIT_OK:
        raise typer.Exit(report["exit_code"])


@cli.command()
def schema(
    report: bool = typer.Option(False, "--report", help="Print the run report schema instead"),
):
    """Print the JSON Schema every run configuration (or, with --report, every report) is validated against."""
    document = report_schema() if report else run_config_schema()
    typer.echo(orjson.dumps(document, option=orjson.OPT_INDENT_2).decode())


@cli.command()
def version():
    """Print the tool version."""
    typer.echo(f"{TOOL_NAME} {TOOL_VERSION}")


def main():
    # click reports usage errors with status 2; the lab reserves 2 for failed verifications
    try:
        code = cli(standalone_mode=False)
    except click.ClickException as e:
        e.show()
        sys.exit(EXIT_USAGE)
    except click.exceptions.Abort:
        sys.exit(EXIT_USAGE)
    sys.exit(code or EXIT_OK)


if __name__ == "__main__":
    main()
