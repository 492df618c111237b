"""
Mirror Squeezing Simulator - Main Entry Point
Run with: python main.py <command> or uv run main.py <command>
"""
import argparse
import json
import sys
from pathlib import Path

from dotenv import load_dotenv
from rich import box
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from src.exceptions import ConfigSchemaError, SqueezingSimError, UnknownExperimentError
from src.runner.ExperimentRunner import configure_logging, derived_report, jsonable, run
from src.runner.RunConfig import load_run_config
from src.tools.ExperimentTools import EXPERIMENTS

# Load environment variables
load_dotenv()

# Initialize Rich console
console = Console()

BANNER = r"""
[magenta] ___  __ _ _  _ ___ ___ _____ _ __  __ [/magenta]
[purple]/ __|/ _` | || | __| __|_  / | '  \/ _|[/purple]
[blue]\__ \ (_| | || | _|| _| / /| | || \__ \[/blue]
[cyan]|___/\__, |\_,_|___|___/___|_|_||_|___/[/cyan]
[green]        |_|   mirror squeezing simulator[/green]
"""

EXIT_OK, EXIT_NOT_CONVERGED, EXIT_CONFIG = 0, 1, 2


def display_intro(title: str, body: str):
    """Display the banner and a short description of the command."""
    console.print(f"[bold green]{BANNER}[/bold green]")
    console.print(
        Panel.fit(
            body,
            title=f"[yellow]{title}[/yellow]",
            border_style="bright_yellow",
            box=box.DOUBLE_EDGE,
            padding=(1, 4),
        )
    )


def parse_truncation(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError("truncation is a comma list such as 4,10,4 or 14,8") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="main.py",
        description="Stationary mirror squeezing: mean-field, master-equation and covariance-matrix experiments",
    )
    parser.add_argument("--log-level", default=None, help="override SQZ_LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run the experiment described by a TOML/JSON config")
    run_p.add_argument("config", type=Path)
    run_p.add_argument("--out", type=Path, default=None, help="output directory")
    run_p.add_argument("--threads", type=int, default=None, help="worker threads for grid experiments")
    run_p.add_argument("--truncation", type=parse_truncation, default=None, help="Fock levels, e.g. 4,10,4")
    run_p.add_argument("--t-final", type=float, default=None, help="integration horizon (1/omega_m)")
    run_p.add_argument("--dt", type=float, default=None, help="fixed RK4 step (1/omega_m)")

    derive_p = sub.add_parser("derive", help="print derived parameters and their provenance as JSON")
    derive_p.add_argument("config", type=Path)
    derive_p.add_argument("--out", type=Path, default=None, help="also write the JSON report to this file")

    sub.add_parser("list-experiments", help="list registered experiment ids")
    return parser


def show_summary(summary: dict, title: str):
    table = Table(title=title, box=box.ROUNDED, header_style="bold magenta")
    table.add_column("quantity", style="cyan")
    table.add_column("value", style="white")
    for key, value in jsonable(summary).items():
        table.add_row(key, json.dumps(value) if isinstance(value, (dict, list)) else str(value))
    console.print(table)


def cmd_list() -> int:
    table = Table(title="Experiments", box=box.ROUNDED, header_style="bold magenta")
    table.add_column("id", style="bold cyan")
    table.add_column("description")
    for spec in EXPERIMENTS.values():
        table.add_row(spec.id, spec.description)
    console.print(table)
    return EXIT_OK


def cmd_run(args) -> int:
    config = load_run_config(args.config).with_cli_overrides(
        output_dir=args.out, threads=args.threads, truncation=args.truncation,
        t_final=args.t_final, dt=args.dt,
    )
    display_intro(config.experiment, f"[cyan]{EXPERIMENTS[config.experiment].description}[/cyan]"
                  if config.experiment in EXPERIMENTS else f"[cyan]{config.experiment}[/cyan]")
    with console.status(f"[bold magenta]Running {config.experiment}...[/bold magenta]", spinner="dots"):
        result = run(config)

    show_summary(result.summary, f"{result.experiment} summary")
    files = "\n".join(str(f) for f in [*result.files, result.manifest])
    style = "green" if result.converged else "red"
    console.print(
        Panel(
            f"{files}\n\n[dim]wall time {result.wall_time:.1f} s[/dim]",
            title=f"[bold {style}]{'converged' if result.converged else 'NOT converged'}[/bold {style}]",
            border_style=style,
            box=box.ROUNDED,
        )
    )
    if not result.converged:
        show_summary(result.diagnostics, "diagnostics")
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_derive(args) -> int:
    config = load_run_config(args.config)
    with console.status("[bold magenta]Solving the mean field...[/bold magenta]", spinner="dots"):
        report = derived_report(config)
    text = json.dumps(report, indent=2)
    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(text, encoding="utf-8")
    console.print_json(text)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        if args.command == "list-experiments":
            return cmd_list()
        if args.command == "derive":
            return cmd_derive(args)
        return cmd_run(args)
    except (ConfigSchemaError, UnknownExperimentError) as e:
        console.print(f"[bold red]Config error:[/bold red] {e}")
        return EXIT_CONFIG
    except SqueezingSimError as e:
        console.print(f"[bold red]Error:[/bold red] {e}")
        console.print("[bold yellow]⚠️ The run did not complete; see the log above for details.[/bold yellow]")
        return EXIT_NOT_CONVERGED
    except KeyboardInterrupt:
        console.print("\n[bold yellow]⚙️ Exiting...[/bold yellow]")
        return EXIT_NOT_CONVERGED


if __name__ == "__main__":
    sys.exit(main())
