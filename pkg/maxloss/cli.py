import logging
import sys
from pathlib import Path
from typing import List, Optional

import click
import typer
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

try:  # newer typer vendors its own click; its exceptions are not click's
    from typer._click import exceptions as _click_exceptions
except ImportError:
    from click import exceptions as _click_exceptions

from .bench import SCALING_COLUMNS, RunSpec, parse_grid, run_scaling, run_solve
from .core import MaxLossError
from .manager import SolverSettings, get_config_value, load_config, set_config_value, show_config
from .storage import RecordStore, write_summary, write_table
from .verify import all_passed, run_suites

app = typer.Typer(help="maxloss - minimise the maximum of N convex losses and benchmark the solvers")
console = Console()
err_console = Console(stderr=True)

logger = logging.getLogger("maxloss")


def _setup_logging(verbose: bool):
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=err_console, show_path=False)],
        force=True,
    )


def _fail(message: str) -> typer.Exit:
    console.print(f"[red]{message}[/red]")
    return typer.Exit(1)


@app.callback()
def main_callback(verbose: bool = typer.Option(False, "--verbose", "-v", help="Debug logging")):
    """Solvers for min-max convex problems"""
    _setup_logging(verbose)


def _settings(broo_budget_cap: Optional[int], max_outer: Optional[int]) -> SolverSettings:
    return SolverSettings.from_config(load_config(), broo_budget_cap=broo_budget_cap, max_outer=max_outer)


def _base_spec(
    instance: str, method: str, eps: float, seed: int, n: int, t: int, ell: float,
    d_cap: Optional[int], csv_path: Optional[Path], radius: Optional[float], budget: int,
    broo_budget_cap: Optional[int], max_outer: Optional[int],
) -> RunSpec:
    if d_cap is None:
        d_cap = get_config_value("d_cap")
    return RunSpec(
        instance=instance, method=method, eps=eps, seed=seed, N=n, T=t, ell=ell, d_cap=d_cap,
        csv_path=csv_path, radius=radius, budget=budget, settings=_settings(broo_budget_cap, max_outer),
    )


@app.command()
def solve(
    instance: str = typer.Option("hard", "--instance", help="hard, linear-csv or duplicated"),
    method: str = typer.Option("broo-sgd", "--method", help="broo-sgd, broo-katyusha, broo-exact, subgradient, agd-softmax"),
    eps: float = typer.Option(0.05, "--eps", help="Target accuracy on F_max"),
    seed: int = typer.Option(0, "--seed", help="Seed for every random choice"),
    n: int = typer.Option(32, "--N", help="Number of components"),
    t: int = typer.Option(6, "--T", help="Chain length of the hard instance"),
    ell: float = typer.Option(1.0, "--ell", help="Link smoothness"),
    d_cap: Optional[int] = typer.Option(None, "--d-cap", help="Cap on the hard instance dimension"),
    csv_path: Optional[Path] = typer.Option(None, "--csv", help="Linear instance file (first row d,N)"),
    radius: Optional[float] = typer.Option(None, "--radius", help="Distance bound R"),
    budget: int = typer.Option(10_000, "--budget", help="Iteration budget of the baselines"),
    broo_budget_cap: Optional[int] = typer.Option(None, "--broo-budget-cap", help="Cap on inner oracle steps"),
    max_outer: Optional[int] = typer.Option(None, "--max-outer", help="Cap on outer iterations"),
    out: Optional[Path] = typer.Option(None, "--out", help="Append the record to this file"),
    fmt: Optional[str] = typer.Option(None, "--format", help="csv or json (default from the file suffix)"),
):
    """Run one solver on one instance and record its query complexity"""
    try:
        spec = _base_spec(
            instance, method, eps, seed, n, t, ell, d_cap, csv_path, radius, budget, broo_budget_cap, max_outer
        )
        record, code = run_solve(spec)
        if out is not None:
            store = RecordStore(out, fmt)
            store.append(record.as_row() if store.fmt == "csv" else record.as_dict())
    except MaxLossError as e:
        raise _fail(str(e))

    table = Table(title=f"{record.method} on {instance}")
    table.add_column("field")
    table.add_column("value", justify="right")
    for key, value in record.as_dict().items():
        table.add_row(key, f"{value:.6g}" if isinstance(value, float) else str(value))
    console.print(table)
    if code == 0:
        console.print(f"[green]gap {record.final_gap:.3g} <= eps {eps:g}[/green]")
    else:
        console.print(f"[yellow]gap {record.final_gap:.3g} above eps {eps:g} ({record.termination_reason})[/yellow]")
    if out is not None:
        console.print(f"[dim]Record appended to {out}[/dim]")
    raise typer.Exit(code)


@app.command()
def scaling(
    sweep: str = typer.Option(..., "--sweep", help="r, eps or N"),
    grid: str = typer.Option(..., "--grid", help="a,b,c or start:stop:count"),
    instance: str = typer.Option("hard", "--instance"),
    method: str = typer.Option("broo-sgd", "--method"),
    eps: float = typer.Option(0.05, "--eps"),
    seed: int = typer.Option(0, "--seed"),
    n: int = typer.Option(32, "--N"),
    t: int = typer.Option(6, "--T"),
    ell: float = typer.Option(1.0, "--ell"),
    d_cap: Optional[int] = typer.Option(None, "--d-cap"),
    broo_budget_cap: Optional[int] = typer.Option(None, "--broo-budget-cap"),
    max_outer: Optional[int] = typer.Option(None, "--max-outer"),
    out: Path = typer.Option(Path("scaling.csv"), "--out", help="Per-point CSV"),
    summary: Path = typer.Option(Path("scaling_fit.json"), "--summary", help="Fit summary JSON"),
):
    """Sweep one parameter and fit the log-log slope of the cost"""
    try:
        base = _base_spec(
            instance, method, eps, seed, n, t, ell, d_cap, None, None, 10_000, broo_budget_cap, max_outer
        )
        rows, fit = run_scaling(sweep, parse_grid(grid), base)
        write_table(out, SCALING_COLUMNS, rows)
        write_summary(summary, fit.as_dict())
    except MaxLossError as e:
        raise _fail(str(e))

    table = Table(title=f"{sweep} sweep")
    table.add_column(sweep, justify="right")
    table.add_column("outer iters", justify="right")
    table.add_column("full passes", justify="right")
    for row in rows:
        table.add_row(f"{row['value']:.4g}", str(row["outer_iters"]), f"{row['full_passes']:.1f}")
    console.print(table)
    console.print(f"[green]slope {fit.slope:.3f}, R^2 {fit.r_squared:.3f}[/green]")
    console.print(f"[dim]Points in {out}, fit in {summary}[/dim]")


@app.command()
def verify(
    suite: str = typer.Option("all", "--suite", help="softmax, instances, broo, accel or all"),
    trials: int = typer.Option(5, "--trials"),
    seed: int = typer.Option(0, "--seed"),
    inject_fault: bool = typer.Option(False, "--inject-fault", hidden=True),
):
    """Run the invariant suites at desk scale"""
    try:
        results = run_suites(suite, trials, seed, inject_fault=inject_fault)
    except MaxLossError as e:
        raise _fail(str(e))

    table = Table(title="verification")
    table.add_column("suite")
    table.add_column("check")
    table.add_column("kind")
    table.add_column("result")
    table.add_column("detail")
    for res in results:
        mark = "[green]pass[/green]" if res.passed else ("[red]FAIL[/red]" if res.hard else "[yellow]below[/yellow]")
        detail = res.detail
        if res.pass_fraction is not None:
            detail += f" (threshold {res.threshold:.2f})"
        table.add_row(res.suite, res.name, "hard" if res.hard else "stat", mark, detail)
    console.print(table)

    hard_ok = all_passed([res for res in results if res.hard])
    if not hard_ok:
        console.print("[red]Hard invariant violated[/red]")
        raise typer.Exit(1)
    if not all_passed(results):
        console.print("[yellow]Some statistical checks are below threshold[/yellow]")


@app.command()
def config(
    action: str = typer.Argument(..., help="Action: show, set, get"),
    key: str = typer.Argument(None, help="Config key (for set/get)"),
    value: str = typer.Argument(None, help="Value (for set)"),
):
    """Manage solver configuration"""
    if action == "show":
        console.print_json(show_config())
    elif action == "set":
        if not key or value is None:
            raise _fail("You must provide key and value to set.")
        try:
            set_config_value(key, value)
        except MaxLossError as e:
            raise _fail(str(e))
        console.print(f"[green]Set {key} to {value}[/green]")
    elif action == "get":
        if not key:
            raise _fail("You must provide key to get.")
        if key not in load_config():
            raise _fail(f"Unknown config key: {key}")
        console.print(f"[green]{key} = {get_config_value(key)}[/green]")
    else:
        raise _fail("Unknown config action. Use show, set, or get.")


def main(argv: Optional[List[str]] = None) -> int:
    """Run the CLI and return its exit code; usage errors map to 1"""
    try:
        rv = app(args=argv, prog_name="maxloss", standalone_mode=False)
    except _click_exceptions.ClickException as e:
        e.show()
        return 1
    except _click_exceptions.Abort:
        err_console.print("Aborted")
        return 1
    return rv if isinstance(rv, int) else 0


def run():
    sys.exit(main())


if __name__ == "__main__":
    run()
