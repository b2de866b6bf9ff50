"""Command-line front door: ``mungo check|run|verify|corpus|lts``.

Exit statuses:

- ``check``: 0 accepted, 1 rejected by the type checker, 2 parse failure
- ``run``: 0 terminal, 1 stuck or out of budget, 2 parse failure
- ``verify``: 0 accepted and sound, 1 rejected or a violation, 2 parse failure
- ``corpus``: 0 when every case passes, 1 otherwise
- ``lts``: 0 on success, 1 for an unknown class, 2 parse failure
- 130 when interrupted
"""

from __future__ import annotations

import json
import logging
import sys
from collections.abc import Sequence
from pathlib import Path
from typing import TYPE_CHECKING

from rich.console import Console
from rich.markup import escape
from rich.panel import Panel
from rich.table import Table
from rich.theme import Theme

from mungo.config import DEFAULT_CORPUS_DIR, SOURCE_ENCODING, HarnessConfig
from mungo.errors import Diagnostic, DiagnosticError
from mungo.harness import check_path, run_corpus_sync, verify
from mungo.interpreter import RunOutcome, RunStatus, run
from mungo.monitor import check_error
from mungo.parser import parse_file
from mungo.printer import format_usage, format_value
from mungo.usages import to_dot, usage_graph

if TYPE_CHECKING:
    import argparse

    from mungo.syntax import Program

logger = logging.getLogger(__name__)

custom_theme = Theme(
    {
        "info": "cyan",
        "success": "bold green",
        "warning": "bold yellow",
        "error": "bold red",
        "step": "bold blue",
    }
)

console = Console(theme=custom_theme)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_PARSE = 2
EXIT_INTERRUPTED = 130


def setup_logging(verbose: bool = False, log_file: Path | None = None) -> None:
    """Configure logging; records go to stderr so stdout carries reports only.

    Args:
        verbose: If True, set to DEBUG level, otherwise WARNING
        log_file: Optional file that receives a copy of every record
    """
    level = logging.DEBUG if verbose else logging.WARNING
    handlers: list[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if log_file is not None:
        handlers.append(logging.FileHandler(log_file, encoding=SOURCE_ENCODING))
    logging.basicConfig(
        level=level,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        handlers=handlers,
        force=True,
    )


def print_diagnostics(diagnostics: Sequence[Diagnostic], default_file: str) -> None:
    for d in diagnostics:
        console.print(escape(d.format(default_file)), style="error", highlight=False)


def _load(path: Path) -> Program | None:
    try:
        return parse_file(path)
    except DiagnosticError as e:
        print_diagnostics(e.diagnostics, str(path))
        return None


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------


def cmd_check(args: argparse.Namespace) -> int:
    report = check_path(args.file)
    if args.json:
        records = [d.to_record(str(args.file)) for d in report.diagnostics]
        print(json.dumps(records, indent=2, ensure_ascii=False))
    elif report.accepted:
        console.print(f"[success]✓ {escape(str(args.file))}: well typed[/success]")
    else:
        print_diagnostics(report.diagnostics, str(args.file))
    if report.parse_failed:
        return EXIT_PARSE
    return EXIT_OK if report.accepted else EXIT_FAILED


def _write_trace(outcome: RunOutcome, target: str) -> None:
    lines = "\n".join(entry.line() for entry in outcome.trace)
    if target == "-":
        for entry in outcome.trace:
            console.print(escape(entry.line()), style="step", highlight=False)
    else:
        Path(target).write_text(lines + "\n" if lines else "", encoding=SOURCE_ENCODING)
        logger.info("trace written to %s", target)


def _print_outcome(outcome: RunOutcome) -> None:
    match outcome.status:
        case RunStatus.TERMINAL:
            value = format_value(outcome.value) if outcome.value is not None else "?"
            console.print(f"[success]Terminal[/success] after {outcome.steps} steps: {value}")
            if outcome.protocols_completed:
                console.print("[success]✓ all protocols completed[/success]")
            else:
                console.print("[warning]⚠ some protocols were left incomplete[/warning]")
        case RunStatus.STUCK:
            assert outcome.stuck is not None
            console.print(
                f"[error]Stuck[/error] after {outcome.steps} steps: "
                f"{outcome.stuck.reason} ({escape(outcome.stuck.detail)})"
            )
            fault = check_error(outcome.final)
            if fault is not None:
                console.print(escape(fault.report(outcome.steps)), style="error")
        case RunStatus.BUDGET:
            console.print(f"[warning]Budget[/warning] exhausted after {outcome.steps} steps")


def cmd_run(args: argparse.Namespace, config: HarnessConfig) -> int:
    program = _load(args.file)
    if program is None:
        return EXIT_PARSE
    outcome = run(program, config.max_steps, trace=args.trace is not None)
    if args.trace is not None:
        _write_trace(outcome, args.trace)
    _print_outcome(outcome)
    return EXIT_OK if outcome.status is RunStatus.TERMINAL else EXIT_FAILED


def _coverage_table(outcome: RunOutcome) -> Table:
    table = Table(title="Rules fired", show_header=True, header_style="bold magenta")
    table.add_column("Rule", style="cyan")
    table.add_column("Count", justify="right", style="green")
    for rule, count in sorted(outcome.rule_counts.items()):
        table.add_row(rule, str(count))
    return table


def cmd_verify(args: argparse.Namespace, config: HarnessConfig) -> int:
    program = _load(args.file)
    if program is None:
        return EXIT_PARSE
    report = verify(program, config)
    if not report.accepted:
        print_diagnostics(report.diagnostics, str(args.file))
        console.print("[error]✗ rejected by the type checker; not run[/error]")
        return EXIT_FAILED
    for violation in report.violations:
        console.print(escape(str(violation)), style="error", highlight=False)
    if report.outcome is not None:
        _print_outcome(report.outcome)
        if args.verbose:
            console.print(_coverage_table(report.outcome))
    if report.ok:
        checks = "monitor, well-formedness, linearity"
        if config.wtc_every_step:
            checks += ", configuration typing"
        console.print(
            Panel(
                f"[bold]Steps:[/bold] {report.outcome.steps if report.outcome else 0}\n"
                f"[bold]Checked every step:[/bold] {checks}",
                title="[bold green]Verified[/bold green]",
                border_style="green",
            )
        )
        return EXIT_OK
    return EXIT_FAILED


def cmd_corpus(args: argparse.Namespace, config: HarnessConfig) -> int:
    directory: Path = args.directory
    if not directory.is_dir():
        console.print(f"[error]✗ not a directory: {escape(str(directory))}[/error]")
        return EXIT_FAILED
    results = run_corpus_sync(directory, config, show_progress=not args.no_progress)

    table = Table(title="Corpus", show_header=True, header_style="bold magenta")
    table.add_column("Case", style="cyan")
    table.add_column("Expected")
    table.add_column("Actual")
    table.add_column("Status", justify="center")
    for r in results:
        status = "[green]✓[/green]" if r.passed else "[red]✗[/red]"
        table.add_row(r.name, escape(r.expected), escape(r.actual), status)
    if results:
        console.print(table)
    for r in results:
        if not r.passed:
            for line in r.details:
                console.print(f"  {escape(r.name)}: {escape(line)}", style="error")

    passed = sum(r.passed for r in results)
    style = "success" if passed == len(results) else "error"
    console.print(f"[{style}]{len(results)} cases, {passed} passed[/{style}]")
    return EXIT_OK if passed == len(results) else EXIT_FAILED


def cmd_lts(args: argparse.Namespace) -> int:
    program = _load(args.file)
    if program is None:
        return EXIT_PARSE
    decl = program.class_map.get(args.class_name)
    if decl is None:
        console.print(f"[error]✗ no class named {escape(args.class_name)}[/error]")
        return EXIT_FAILED
    graph = usage_graph(decl.usage)
    if args.dot:
        print(to_dot(graph, decl.name), end="")
        return EXIT_OK
    table = Table(
        title=f"Usage of {decl.name}: {escape(format_usage(decl.usage))}",
        show_header=True,
        header_style="bold magenta",
    )
    table.add_column("From", style="cyan")
    table.add_column("Transition", style="green")
    table.add_column("To", style="cyan")
    for src, dst, data in graph.edges(data=True):
        table.add_row(
            escape(str(graph.nodes[src]["label"])),
            escape(str(data["label"])),
            escape(str(graph.nodes[dst]["label"])),
        )
    console.print(table)
    return EXIT_OK


# --------------------------------------------------------------------------
# Entry point
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    import argparse

    parser = argparse.ArgumentParser(
        prog="mungo",
        description="Typestate checker and interpreter for Mungo programs",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  %(prog)s check corpus/filereader.mungo
  %(prog)s run --trace - corpus/filereader.mungo
  %(prog)s verify --wtc-every-step corpus/id_generic.mungo
  %(prog)s corpus corpus/
  %(prog)s lts corpus/filereader.mungo --class File --dot
        """,
    )
    parser.add_argument(
        "--verbose", action="store_true", help="Enable verbose debug logging"
    )
    parser.add_argument(
        "--no-color", action="store_true", help="Disable colored output"
    )
    parser.add_argument("--log-file", type=Path, help="Also write log records to this file")
    sub = parser.add_subparsers(dest="command", required=True)

    check = sub.add_parser("check", help="Parse and type check a program")
    check.add_argument("file", type=Path)
    check.add_argument(
        "--json", action="store_true", help="Print diagnostics as JSON records"
    )

    run_cmd = sub.add_parser("run", help="Execute a program without checking it")
    run_cmd.add_argument("file", type=Path)
    run_cmd.add_argument("--max-steps", type=int, help="Reduction budget")
    run_cmd.add_argument(
        "--trace",
        nargs="?",
        const="-",
        metavar="FILE",
        help="Write one line per step to FILE, or to stdout when FILE is omitted",
    )

    verify_cmd = sub.add_parser("verify", help="Check, then run under per-step audits")
    verify_cmd.add_argument("file", type=Path)
    verify_cmd.add_argument("--max-steps", type=int, help="Reduction budget")
    verify_cmd.add_argument(
        "--wtc-every-step",
        action="store_true",
        help="Also type check every configuration reached",
    )

    corpus = sub.add_parser("corpus", help="Run every case of a corpus directory")
    corpus.add_argument("directory", type=Path, nargs="?", default=DEFAULT_CORPUS_DIR)
    corpus.add_argument("--workers", type=int, help="Cases run concurrently")
    corpus.add_argument("--seed", type=int, help="Seed for the scheduling order")
    corpus.add_argument(
        "--wtc-every-step",
        action="store_true",
        help="Type check every configuration of accepted cases",
    )
    corpus.add_argument(
        "--no-progress", action="store_true", help="Hide the progress bar"
    )

    lts = sub.add_parser("lts", help="Show the transition system of a class usage")
    lts.add_argument("file", type=Path)
    lts.add_argument("--class", dest="class_name", required=True, help="Class name")
    lts.add_argument("--dot", action="store_true", help="Print Graphviz DOT")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    """Main entry point for the ``mungo`` command.

    Returns:
        Exit code (see the module docstring)
    """
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.no_color:
        console.no_color = True

    setup_logging(args.verbose, args.log_file)

    try:
        config = HarnessConfig.from_env(
            max_steps=getattr(args, "max_steps", None),
            wtc_every_step=getattr(args, "wtc_every_step", None),
            workers=getattr(args, "workers", None),
            seed=getattr(args, "seed", None),
        )
        match args.command:
            case "check":
                return cmd_check(args)
            case "run":
                return cmd_run(args, config)
            case "verify":
                return cmd_verify(args, config)
            case "corpus":
                return cmd_corpus(args, config)
            case "lts":
                return cmd_lts(args)
        parser.error(f"unknown command {args.command}")  # pragma: no cover

    except KeyboardInterrupt:
        console.print("\n[warning]✗ Interrupted by user[/warning]")
        return EXIT_INTERRUPTED

    except Exception as e:
        logger.error("Failed: %s", e, exc_info=args.verbose)
        console.print(
            Panel(f"[red]Error: {escape(str(e))}[/red]", title="✗ Failed", border_style="red")
        )
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
