"""Command-line interface for subtori."""

from __future__ import annotations

import contextlib
import json
import logging
import sys
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path
from typing import TYPE_CHECKING, Any, NoReturn

import click
import numpy as np
from rich.console import Console
from rich.logging import RichHandler
from rich.panel import Panel
from rich.table import Table

from subtori import __version__, series_io
from subtori.conditions import ConditionReport, condition_report, matches_expectations
from subtori.config import MODES, RunConfig, load_config
from subtori.divisors import chart_extension_sweep, fit_measure_scaling, surviving_set_sweep
from subtori.engine import (
    IterationResult,
    StepTolerances,
    TransformChain,
    frequency_drift,
    run_iteration,
    telescoped_bounds,
)
from subtori.errors import ConfigError, ResonanceExit, SubtoriError
from subtori.model import classify_spectrum
from subtori.reports import (
    step_lines,
    to_json,
    write_divisor_log,
    write_step_reports,
    write_sweep,
    write_sweep_summary,
    write_telescoped,
    write_trajectory,
)
from subtori.scenarios import BUILTIN_SCENARIOS, dumps_scenario, initial_model, resolve_scenario
from subtori.verifier import verify_torus

if TYPE_CHECKING:
    from collections.abc import Callable, Iterator

    from numpy.typing import NDArray

    from subtori.divisors import StepBudget
    from subtori.model import ModelHamiltonian
    from subtori.scenarios import Scenario

console = Console()
err_console = Console(stderr=True)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_RESONANCE = 2
EXIT_INPUT = 3

CHAIN_FILE = "chain.txt"
CHAIN_META = "chain.json"
STEPS_FILE = "steps.jsonl"


class _Group(click.Group):
    """Click group whose usage errors exit with the input-error code."""

    def parse_args(self, ctx: click.Context, args: list[str]) -> list[str]:
        try:
            return super().parse_args(ctx, args)
        except click.UsageError as e:
            e.exit_code = EXIT_INPUT
            raise

    def invoke(self, ctx: click.Context) -> Any:
        try:
            return super().invoke(ctx)
        except click.UsageError as e:
            e.exit_code = EXIT_INPUT
            raise


def _configure_logging(verbose: bool) -> None:
    handler = RichHandler(console=err_console, show_path=False)
    handler.setFormatter(logging.Formatter("%(message)s", datefmt="[%X]"))
    logger = logging.getLogger("subtori")
    logger.handlers[:] = [handler]
    logger.setLevel(logging.DEBUG if verbose else logging.WARNING)


@click.group(cls=_Group)
@click.version_option(version=__version__, prog_name="subtori")
@click.option("-v", "--verbose", is_flag=True, default=False, help="Log debug details to stderr")
def main(verbose: bool) -> None:
    """🍩 subtori - persistence of lower-dimensional tori on parameter sub-manifolds."""
    _configure_logging(verbose)


# ---------------------------------------------------------------------------
# Shared options
# ---------------------------------------------------------------------------


def run_options(func: Callable[..., Any]) -> Callable[..., Any]:
    """Options shared by ``check``, ``sweep``, ``iterate``, ``verify`` and ``run``."""
    options = [
        click.option(
            "-c",
            "--config",
            "config_path",
            type=click.Path(exists=True, dir_okay=False, path_type=Path),
            help="Path to TOML config file",
        ),
        click.option("--scenario", default=None, help="Builtin scenario name or scenario file"),
        click.option(
            "--lambda",
            "lam",
            multiple=True,
            help="Parameter point, comma separated when the chart has several (repeatable)",
        ),
        click.option("--grid", type=int, default=None, help="Chart grid points per axis"),
        click.option(
            "--gamma",
            "gammas",
            type=float,
            multiple=True,
            help="Diophantine constant (repeat for a sweep ladder)",
        ),
        click.option("--tau", type=float, default=None, help="Diophantine exponent"),
        click.option("--eps0", type=float, default=None, help="Initial perturbation size"),
        click.option("--steps", type=int, default=None, help="Number of KAM steps"),
        click.option("--dy", type=int, default=None, help="Generator degree D_y"),
        click.option("--lie-tol", type=float, default=None, help="Lie series tolerance"),
        click.option("--slack", type=float, default=None, help="Slack constant C_slack"),
        click.option("--seed", type=int, default=None, help="Perturbation seed"),
        click.option(
            "--out",
            type=click.Path(file_okay=False, path_type=Path),
            default=None,
            help="Output directory for reports and CSV files",
        ),
        click.option("--workers", type=int, default=None, help="Worker processes for sweeps"),
        click.option("--k-scan-cap", type=int, default=None, help="Cap on scan cutoffs"),
        click.option(
            "--hypothesis-mode",
            type=click.Choice(["measured", "literal", "record"]),
            default=None,
            help="Which reading of H1-H4 gates a step",
        ),
        click.option("--json", "as_json", is_flag=True, help="Output as JSON"),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def _parse_point(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(part) for part in text.split(","))
    except ValueError as e:
        msg = f"invalid parameter point {text!r}: expected comma separated numbers"
        raise ConfigError(msg) from e


def _prepare(mode: str | None, options: dict[str, Any]) -> tuple[RunConfig, Scenario]:
    config_path = options.pop("config_path", None)
    options.pop("as_json", None)
    lam = [_parse_point(text) for text in options.pop("lam", ())]
    config = load_config(
        config_path,
        mode=mode,
        lam=lam,
        gammas=list(options.pop("gammas", ())),
        D_y=options.pop("dy", None),
        C_slack=options.pop("slack", None),
        **options,
    )
    scenario = resolve_scenario(config.scenario)
    if config.grid is not None:
        scenario = replace(scenario, chart=replace(scenario.chart, grid=config.grid))
    config = config.with_scenario_defaults(scenario)
    config.validate(scenario.dims, scenario.rank_deficient)
    return config, scenario


def _points(config: RunConfig, scenario: Scenario) -> list[NDArray[np.float64]]:
    if config.lam:
        return [np.asarray(point, dtype=float) for point in config.lam]
    return [scenario.default_lam()]


def _output_dir(config: RunConfig) -> Path | None:
    if config.out is None:
        return None
    config.out.mkdir(parents=True, exist_ok=True)
    return config.out


@contextlib.contextmanager
def _status(message: str, quiet: bool) -> Iterator[None]:
    if quiet:
        yield
        return
    with console.status(message):
        yield


def _fail(error: BaseException, code: int) -> NoReturn:
    err_console.print(f"[red]🔧 Error:[/red] {error}")
    sys.exit(code)


def _execute(mode: str | None, options: dict[str, Any]) -> None:
    as_json = bool(options.get("as_json"))
    try:
        config, scenario = _prepare(mode, options)
        code = RUNNERS[config.mode](config, scenario, as_json)
    except SubtoriError as e:
        _fail(e, e.exit_code)
    except ValueError as e:
        _fail(e, EXIT_INPUT)
    except Exception as e:
        _fail(e, EXIT_FAILED)
    else:
        sys.exit(code)


# ---------------------------------------------------------------------------
# check
# ---------------------------------------------------------------------------


def _condition_table(report: ConditionReport) -> Table:
    table = Table(show_header=True, header_style="bold")
    table.add_column("Condition", style="cyan")
    table.add_column("Verdict", justify="center")
    table.add_column("Value", justify="right")
    table.add_column("Threshold", justify="right")
    table.add_column("Detail", style="dim")
    for check in report.checks:
        verdict = "[green]✓ pass[/green]" if check.passed else "[red]✗ fail[/red]"
        table.add_row(
            check.name, verdict, f"{check.value:.4g}", f"{check.threshold:.1e}", check.detail
        )
    return table


def _run_check(config: RunConfig, scenario: Scenario, as_json: bool) -> int:
    reports: list[ConditionReport] = []
    with _status(f"[bold blue]Checking {scenario.name}...", as_json):
        for lam in _points(config, scenario):
            reports.append(condition_report(scenario, lam))
    mismatches = {
        str(list(r.lam)): matches_expectations(r, scenario.expectations)
        for r in reports
        if scenario.expectations is not None
    }
    summary = {
        "scenario": scenario.name,
        "passed": all(r.passed for r in reports),
        "reports": [r.to_dict() for r in reports],
        "expectation_mismatches": mismatches,
    }
    out = _output_dir(config)
    if out is not None:
        (out / "check.json").write_text(to_json(summary, indent=2) + "\n")

    if as_json:
        click.echo(to_json(summary, indent=2))
    else:
        for report in reports:
            title = f"[bold]🍩 {scenario.name} at lam={list(report.lam)}[/bold]"
            border = "green" if report.passed else "red"
            console.print(Panel(_condition_table(report), title=title, border_style=border))
            console.print(
                f"  minor {report.minor} (d={report.d}), spectrum [bold]{report.spectrum_class}"
                "[/bold]"
            )
        for lam, diffs in mismatches.items():
            for diff in diffs:
                console.print(f"[yellow]🔧 Expectation mismatch at lam={lam}:[/yellow] {diff}")
    return EXIT_OK if summary["passed"] else EXIT_FAILED


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------


def _run_sweep(config: RunConfig, scenario: Scenario, as_json: bool) -> int:
    if config.tau is None:
        msg = f"sweep needs tau; set it in the config or the scenario {scenario.name}"
        raise ConfigError(msg)
    gammas = sorted(config.gammas, reverse=True)
    results = []
    extended: list[float | None] = []
    with _status(f"[bold blue]Sweeping {scenario.name}...", as_json):
        for gamma in gammas:
            results.append(
                surviving_set_sweep(
                    scenario.chart,
                    scenario.nf_map,
                    gamma,
                    config.tau,
                    config.sweep_K,
                    workers=config.workers,
                )
            )
            if scenario.chart.n0 < scenario.dims.n:
                extension = chart_extension_sweep(
                    scenario.chart,
                    scenario.nf_map,
                    gamma,
                    config.tau,
                    config.sweep_K,
                    workers=config.workers,
                )
                extended.append(extension.mean_fraction)
            else:
                extended.append(None)
    fractions = [r.excluded_fraction for r in results]
    fit = fit_measure_scaling(gammas, fractions, scenario.dims.n)

    out = _output_dir(config)
    if out is not None:
        write_sweep(results, out / "sweep.csv")
        write_sweep_summary(results, fit, out / "sweep_summary.csv")

    summary = {
        "scenario": scenario.name,
        "tau": config.tau,
        "K": config.sweep_K,
        "rungs": [
            {"gamma": g, "excluded_fraction": f, "extended_fraction": e}
            for g, f, e in zip(gammas, fractions, extended, strict=True)
        ],
        "fit": {"exponent": fit.exponent, "slope": fit.slope, "C": fit.C, "monotone": fit.monotone},
    }
    if as_json:
        click.echo(to_json(summary, indent=2))
    else:
        table = Table(title=f"Excluded fraction on [bold]{scenario.name}[/bold]")
        table.add_column("gamma", style="cyan", justify="right")
        table.add_column("excluded", justify="right")
        table.add_column("extended chart", justify="right")
        for g, f, e in zip(gammas, fractions, extended, strict=True):
            table.add_row(f"{g:.1e}", f"{f:.5f}", "-" if e is None else f"{e:.5f}")
        console.print(table)
        console.print(
            f"  fit: fraction <= {fit.C:.3g} * gamma^{fit.exponent:g}, "
            f"log-log slope {fit.slope:.3g}, monotone {'yes' if fit.monotone else 'no'}"
        )
    return EXIT_OK


# ---------------------------------------------------------------------------
# iterate
# ---------------------------------------------------------------------------


def _tolerances(config: RunConfig) -> StepTolerances:
    return StepTolerances(
        D_y=config.D_y,
        lie_tol=config.lie_tol,
        C_slack=config.C_slack,
        hypothesis_mode=config.hypothesis_mode,
        series_k_cap=config.series_k_cap,
        series_degree_cap=config.series_degree_cap,
        k_scan_cap=config.k_scan_cap,
    )


def _build_model(
    config: RunConfig, scenario: Scenario, lam: NDArray[np.float64]
) -> tuple[ModelHamiltonian, StepBudget]:
    return initial_model(
        scenario,
        lam,
        eps0=config.eps0,
        gamma0=config.gammas[0],
        tau=config.tau,
        r0=config.r0,
        s0=config.s0,
        seed=config.seed,
        amplitude_mode=config.amplitude_mode,
    )


def _chain_metadata(
    config: RunConfig,
    lam: NDArray[np.float64],
    model: ModelHamiltonian,
    result: IterationResult,
) -> dict[str, Any]:
    return {
        "scenario": config.scenario,
        "lam": lam.tolist(),
        "eps0": config.eps0,
        "gamma0": config.gammas[0],
        "tau": config.tau,
        "r0": config.r0,
        "s0": model.weights.s,
        "seed": config.seed,
        "amplitude_mode": config.amplitude_mode,
        "omega0": model.N.omega.tolist(),
        "minor": list(model.N.minor_indices),
        "steps": result.steps,
        "stop_reason": result.stop_reason,
        "metadata": {"created": datetime.now(timezone.utc).isoformat(), "version": __version__},
    }


def _step_table(result: IterationResult) -> Table:
    table = Table(title="KAM steps")
    table.add_column("step", style="cyan", justify="right")
    table.add_column("eps", justify="right")
    table.add_column("measured", justify="right")
    table.add_column("next", justify="right")
    for name in ("H1", "H2", "H3", "H4"):
        table.add_column(name, justify="center")
    table.add_column("lock", justify="right")
    table.add_column("contracts", justify="center")
    for report in result.reports:
        marks = [
            "[green]✓[/green]" if check.measured_passed else "[red]✗[/red]"
            for check in report.hypotheses.values()
        ]
        table.add_row(
            str(report.step),
            f"{report.budget.eps:.2e}",
            f"{report.eps_measured:.2e}",
            f"{report.eps_measured_plus:.2e}",
            *marks,
            f"{report.freq_lock:.1e}",
            "[green]✓[/green]" if report.contraction_ok else "[red]✗[/red]",
        )
    return table


def _run_iterate(config: RunConfig, scenario: Scenario, as_json: bool) -> int:
    if config.eps0 is None:
        msg = f"iterate needs eps0; set it in the config or the scenario {scenario.name}"
        raise ConfigError(msg)
    if config.eps0 > config.eps_ceiling:
        msg = f"eps0={config.eps0} exceeds the configured ceiling {config.eps_ceiling}"
        raise ConfigError(msg)
    lam = _points(config, scenario)[0]
    model, budget = _build_model(config, scenario, lam)
    code = EXIT_OK
    with _status(f"[bold blue]Iterating {scenario.name}...", as_json):
        try:
            result = run_iteration(model, budget, config.steps, tols=_tolerances(config), lam=lam)
        except ResonanceExit as e:
            err_console.print(f"[red]🔧 Resonance exit:[/red] {e}")
            result = e.partial
            code = EXIT_RESONANCE
    if code == EXIT_OK and result.stop_reason == "hypothesis" and result.steps < config.min_steps:
        code = EXIT_FAILED

    out = _output_dir(config)
    if out is not None:
        write_step_reports(result.reports, out / STEPS_FILE)
        result.chain.dump(out / CHAIN_FILE)
        meta = _chain_metadata(config, lam, model, result)
        (out / CHAIN_META).write_text(to_json(meta, indent=2) + "\n")
        write_telescoped(
            telescoped_bounds(result.reports, scenario.dims, config.C_slack), out / "telescoped.csv"
        )
        for report, link in zip(result.reports, result.chain, strict=True):
            write_divisor_log(link.divisor_log, out / f"divisors_step{report.step}.csv")

    drift = frequency_drift(result.reports, model.N.omega, model.N.minor_indices)
    if as_json:
        for line in step_lines(result.reports):
            click.echo(line)
    else:
        console.print(_step_table(result))
        lines = [
            f"stop reason: [bold]{result.stop_reason}[/bold] after {result.steps} steps",
            f"locked components {list(model.N.minor_indices)}: max drift {drift:.2e}",
        ]
        if result.failure is not None:
            lines.append(f"[red]{result.failure}[/red]")
        console.print(Panel("\n".join(lines), title="[bold]🍩 Iteration[/bold]"))
    return code


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------


def _run_verify(config: RunConfig, scenario: Scenario, as_json: bool) -> int:
    base = config.out or Path()
    chain_path = base / CHAIN_FILE
    if not chain_path.is_file():
        msg = f"missing chain file {chain_path}; run 'subtori iterate --out {base}' first"
        raise ConfigError(msg)
    chain = TransformChain.load(chain_path)
    meta_path = base / CHAIN_META
    meta: dict[str, Any] = json.loads(meta_path.read_text()) if meta_path.is_file() else {}
    if meta.get("scenario", config.scenario) != config.scenario:
        scenario = resolve_scenario(meta["scenario"])
    run = replace(
        config,
        eps0=meta.get("eps0", config.eps0),
        gammas=[meta.get("gamma0", config.gammas[0])],
        tau=meta.get("tau", config.tau),
        r0=meta.get("r0", config.r0),
        s0=meta.get("s0", config.s0),
        seed=meta.get("seed", config.seed),
        amplitude_mode=meta.get("amplitude_mode", config.amplitude_mode),
    )
    lam = np.asarray(meta["lam"], dtype=float) if "lam" in meta else _points(config, scenario)[0]
    model, _ = _build_model(run, scenario, lam)
    hyperbolic = classify_spectrum(model.N.spectrum) in ("hyperbolic", "mixed")
    T = config.verify_T_hyp if hyperbolic else config.verify_T  # noqa: N806

    with _status(f"[bold blue]Integrating {config.verify_seeds} trajectories...", as_json):
        report = verify_torus(
            chain,
            model.hamiltonian,
            omega=model.N.omega,
            minor=model.N.minor_indices,
            seeds=config.verify_seeds,
            T=T,
            tol=config.verify_tol,
            deviation_budget=config.deviation_budget,
            seed=run.seed or 0,
        )
    summary = {"scenario": scenario.name, "lam": lam.tolist(), "links": len(chain)}
    summary |= report.to_dict()

    out = _output_dir(config)
    if out is not None:
        (out / "verify.json").write_text(to_json(summary, indent=2) + "\n")
        for i, sample in enumerate(report.samples):
            write_trajectory(sample, out / f"trajectory_{i}.csv")

    if as_json:
        click.echo(to_json(summary, indent=2))
    else:
        table = Table(show_header=False, box=None, padding=(0, 1))
        table.add_column("Key", style="dim")
        table.add_column("Value", style="bold")
        table.add_row("Links", str(len(chain)))
        table.add_row("Horizon", f"{T:g}")
        table.add_row("Max deviation", f"{report.max_deviation:.3e} (budget {report.deviation_budget:.1e})")
        table.add_row("Rotation", np.array2string(report.rotation, precision=10))
        table.add_row("Lock error", f"{report.lock_error:.3e}")
        table.add_row("Energy drift", f"{report.energy_drift:.3e}")
        border = "green" if report.passed else "red"
        console.print(Panel(table, title="[bold]🍩 Torus verification[/bold]", border_style=border))
    return EXIT_OK if report.passed else EXIT_FAILED


RUNNERS: dict[str, Callable[[RunConfig, Scenario, bool], int]] = {
    "check": _run_check,
    "sweep": _run_sweep,
    "iterate": _run_iterate,
    "verify": _run_verify,
}


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


@main.command()
@run_options
def check(**options: Any) -> None:
    """🍩 Check the non-degeneracy conditions of a scenario.

    Exits 0 when every required condition holds, 1 otherwise.
    """
    _execute("check", options)


@main.command()
@run_options
def sweep(**options: Any) -> None:
    """🍩 Measure the resonant part of the chart over a gamma ladder.

    \b
    Example:
        subtori sweep --scenario example-4.1-line --gamma 1e-2 --gamma 1e-3 --out ./sweep
    """
    _execute("sweep", options)


@main.command()
@run_options
def iterate(**options: Any) -> None:
    """🍩 Run KAM steps at one parameter point.

    Writes step reports, the transform chain and divisor logs under --out.
    Exits 2 when the parameter leaves the non-resonant set.
    """
    _execute("iterate", options)


@main.command()
@run_options
def verify(**options: Any) -> None:
    """🍩 Integrate the torus found by a previous 'iterate' run.

    Reads chain.txt and chain.json from --out (default: current directory).
    """
    _execute("verify", options)


@main.command()
@click.option(
    "--mode",
    type=click.Choice(MODES),
    default=None,
    help="What to run (default: the config file's mode, else check)",
)
@run_options
def run(mode: str | None, **options: Any) -> None:
    """🍩 Run any mode with one shared option set."""
    _execute(mode, options)


@main.command()
@click.option("--json", "as_json", is_flag=True, help="Output as JSON")
def scenarios(as_json: bool) -> None:
    """🍩 List the builtin scenarios."""
    try:
        builtins = {name: build() for name, build in BUILTIN_SCENARIOS.items()}
        if as_json:
            click.echo(
                to_json(
                    {
                        name: {
                            "n": s.dims.n,
                            "m": s.dims.m,
                            "hamiltonian": s.hamiltonian,
                            "chart": list(s.chart.map.texts),
                            "spectrum": s.spectrum_class,
                            "description": s.description,
                        }
                        for name, s in builtins.items()
                    },
                    indent=2,
                )
            )
            return
        table = Table(title="Builtin scenarios")
        table.add_column("Name", style="cyan")
        table.add_column("n", justify="right")
        table.add_column("m", justify="right")
        table.add_column("Chart y(lam)")
        table.add_column("Spectrum", style="green")
        table.add_column("Notes", style="dim")
        for name, s in builtins.items():
            table.add_row(
                name,
                str(s.dims.n),
                str(s.dims.m),
                ", ".join(s.chart.map.texts),
                s.spectrum_class or "-",
                s.description,
            )
        console.print(table)
    except Exception as e:
        _fail(e, EXIT_FAILED)


@main.command()
@click.argument("name", type=click.Choice(list(BUILTIN_SCENARIOS)))
@click.option(
    "-o",
    "--output",
    type=click.Path(dir_okay=False, path_type=Path),
    help="Scenario file to write (default: stdout)",
)
def export(name: str, output: Path | None) -> None:
    """🍩 Write a builtin scenario as a scenario file.

    NAME: Builtin scenario name
    """
    try:
        text = dumps_scenario(BUILTIN_SCENARIOS[name]())
        if output is None:
            click.echo(text, nl=False)
        else:
            output.write_text(text)
            console.print(f"[green]🍩 Wrote:[/green] [bold]{output}[/bold]")
    except Exception as e:
        _fail(e, EXIT_FAILED)


@main.command("dump-series")
@run_options
def dump_series(**options: Any) -> None:
    """🍩 Write the initial perturbation of a run in the series text format.

    Prints to stdout unless --out is given.
    """
    options.pop("as_json", None)
    try:
        config, scenario = _prepare(None, options)
        model, _ = _build_model(config, scenario, _points(config, scenario)[0])
        text = series_io.dumps(model.P)
        out = _output_dir(config)
        if out is None:
            click.echo(text, nl=False)
        else:
            path = out / "perturbation.txt"
            path.write_text(text)
            console.print(f"[green]🍩 Wrote {len(model.P)} terms:[/green] [bold]{path}[/bold]")
    except SubtoriError as e:
        _fail(e, e.exit_code)
    except ValueError as e:
        _fail(e, EXIT_INPUT)
