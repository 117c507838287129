"""Command-line entry point.

    cowboys run --config run.cfg --strategy cowboys --out results/
    cowboys diag annulus --dim 128 --n 5000
    cowboys diag boxshell --dim 128 --delta 1 --n 100000
    cowboys validate all --seed 3
    cowboys report --run results/

Exit codes: 0 success, 1 runtime failure (including failed validation
suites), 2 bad configuration or usage.
"""

from __future__ import annotations

import dataclasses
import os
import sys

import click

from .config import ConfigError, ENV_SEED, build_run_config, config_echo, load_config_file
from .core import CowboysError, derive_stream
from .diagnostics import annulus_report, box_shell_overlap
from .optimizer import run_strategy
from .traceio import append_diagnostics_csv, write_run_outputs
from .validate import SUITES, run_suites

DIAG_STREAM_ID = 99


def _fail(message: str, code: int):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


@click.group()
def main():
    """Structured-space Bayesian optimisation toolkit."""


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(), help="Run config file.")
@click.option(
    "--strategy",
    required=True,
    type=click.Choice(["cowboys", "lsbo", "random"]),
    help="Optimisation strategy.",
)
@click.option("--out", "out_dir", required=True, type=click.Path(), help="Output directory.")
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--delta", type=float, default=None, help="Box half-width for lsbo.")
@click.option("--workers", type=int, default=None, help="Cap on concurrent chains.")
@click.option("--plot", is_flag=True, help="Also render figures into the output directory.")
def run(config_path, strategy, out_dir, seed, delta, workers, plot):
    """Run one optimisation and write trace.csv / evaluations.jsonl / summary.txt."""
    try:
        values = load_config_file(config_path)
        config = build_run_config(values, seed_override=seed)
        if workers is not None:
            if workers < 1:
                raise ConfigError("workers must be >= 1")
            config = dataclasses.replace(config, workers=workers)
        if strategy == "lsbo" and delta is None and config.lsbo_delta is None:
            raise ConfigError("lsbo needs --delta or lsbo.delta in the config")
    except ConfigError as exc:
        _fail(str(exc), 2)

    try:
        record = run_strategy(strategy, config, delta=delta)
        write_run_outputs(record, out_dir, config_lines=config_echo(values, config))
    except CowboysError as exc:
        _fail(str(exc), 1)
    click.echo(f"wrote {os.path.join(out_dir, 'trace.csv')} (best = {record.best!r})")
    for flag in record.flags:
        click.echo(f"flag: {flag}")
    if plot:
        from .report import render_run_figures

        for path in render_run_figures(out_dir):
            click.echo(f"wrote {path}")


def _diag_seed(seed):
    if seed is not None:
        return seed
    env = os.environ.get(ENV_SEED)
    return int(env) if env is not None else 0


@main.group()
def diag():
    """Latent-geometry diagnostics."""


@diag.command()
@click.option("--dim", required=True, type=int)
@click.option("--n", required=True, type=int)
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_csv", type=click.Path(), default=None, help="Append to a diagnostics CSV.")
@click.option("--plot", "plot_path", type=click.Path(), default=None, help="Write a radial histogram PNG.")
def annulus(dim, n, seed, out_csv, plot_path):
    """Radial statistics of prior samples (mass concentrates at sqrt(d))."""
    if dim < 1 or n < 1:
        _fail("--dim and --n must be >= 1", 2)
    seed = _diag_seed(seed)
    stats = annulus_report(dim, n, derive_stream(seed, DIAG_STREAM_ID))
    frac = stats.prior_shell_fraction()
    click.echo(
        f"annulus d={dim} n={n}: mean radius {stats.mean_radius:.4f}, "
        f"sd {stats.sd_radius:.4f}, shell fraction {frac:.4f} "
        f"(sqrt(d)={dim**0.5:.4f})"
    )
    if out_csv:
        append_diagnostics_csv(
            out_csv,
            {
                "kind": "annulus",
                "dim": dim,
                "n": n,
                "seed": seed,
                "mean_radius": stats.mean_radius,
                "sd_radius": stats.sd_radius,
                "shell_fraction": frac,
            },
        )
    if plot_path:
        from .report import render_radial_histogram

        click.echo(f"wrote {render_radial_histogram(stats, plot_path)}")


@diag.command()
@click.option("--dim", required=True, type=int)
@click.option("--delta", required=True, type=float)
@click.option("--n", required=True, type=int)
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_csv", type=click.Path(), default=None)
def boxshell(dim, delta, n, seed, out_csv):
    """Overlap between a [-delta, delta]^d box and the prior's shell."""
    if dim < 1 or n < 1 or delta <= 0:
        _fail("--dim, --n must be >= 1 and --delta > 0", 2)
    seed = _diag_seed(seed)
    frac = box_shell_overlap(dim, delta, n, derive_stream(seed, DIAG_STREAM_ID))
    click.echo(f"boxshell d={dim} delta={delta} n={n}: shell overlap {frac:.5f}")
    if out_csv:
        append_diagnostics_csv(
            out_csv,
            {"kind": "boxshell", "dim": dim, "n": n, "delta": delta, "seed": seed, "overlap": frac},
        )


@main.command()
@click.argument("suite", type=click.Choice([*SUITES, "all"]))
@click.option("--seed", type=int, default=0)
def validate(suite, seed):
    """Run oracle validation suites and report pass/fail per check."""
    names = list(SUITES) if suite == "all" else [suite]
    results = run_suites(names, seed=seed)
    for result in results:
        click.echo(result.line())
    if not all(r.passed for r in results):
        failed = ", ".join(r.name for r in results if not r.passed)
        _fail(f"validation failed: {failed}", 1)


@main.command()
@click.option("--run", "run_dir", required=True, type=click.Path(), help="Run output directory.")
@click.option("--out", "out_dir", type=click.Path(), default=None, help="Figure directory (default: the run directory).")
def report(run_dir, out_dir):
    """Render figures from a run's trace files."""
    if not os.path.exists(os.path.join(run_dir, "trace.csv")):
        _fail(f"no trace.csv under {run_dir}", 2)
    from .report import render_run_figures

    try:
        for path in render_run_figures(run_dir, out_dir):
            click.echo(f"wrote {path}")
    except (OSError, ValueError) as exc:
        _fail(str(exc), 1)


if __name__ == "__main__":
    main()
