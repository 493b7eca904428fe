"""``verify`` command line: run single experiments, suites, or list the registry."""
from __future__ import annotations

import sys

import click

from .harness import (
    ENV_OUT_DIR, REGISTRY, ConfigError, bundled_suites, load_config, read_json, resolve_out_dir,
    run_experiment, run_suite, write_report,
)

EXIT_FAIL = 1
EXIT_CONFIG = 2


def _common(fn):
    fn = click.option("--threads", type=click.IntRange(min=1), default=1, show_default=True,
                      help="Quadrature worker threads per experiment.")(fn)
    fn = click.option("--out", "out", type=click.Path(file_okay=False), default=None,
                      help=f"Output directory (default: ${ENV_OUT_DIR} or ./verify-out).")(fn)
    fn = click.option("--seed", type=int, default=None, help="Override the configured random seed.")(fn)
    fn = click.option("--tolerance-scale", type=click.FloatRange(min=0, min_open=True), default=1.0,
                      show_default=True, help="Multiply every pass/fail tolerance.")(fn)
    return fn


@click.group()
@click.version_option(package_name="artifact")
def main():
    """Numerical verification of the indefinite-signature Cauchy integral formulas."""


@main.command()
@click.argument("config", type=click.Path(dir_okay=False))
@_common
def run(config, threads, out, seed, tolerance_scale):
    """Run one experiment from a JSON CONFIG file."""
    try:
        cfg = load_config(read_json(config), config)
    except ConfigError as e:
        click.echo(str(e), err=True)
        sys.exit(EXIT_CONFIG)
    report = run_experiment(cfg, threads, tolerance_scale, seed)
    jp, _ = write_report(report, resolve_out_dir(out, cfg))
    for c in report.checks:
        click.echo(f"{'PASS' if c.passed else 'FAIL'}  {cfg.run_name}/{c.label}  "
                   f"deviation={c.deviation:.3g}  tolerance={c.tolerance:.3g}")
    if report.error:
        click.echo(f"ERROR {report.error}", err=True)
    click.echo(f"{'PASS' if report.passed else 'FAIL'}  {cfg.run_name}  {report.wall_time:.2f} s  -> {jp}")
    sys.exit(0 if report.passed else EXIT_FAIL)


@main.command()
@click.argument("suite")
@_common
@click.option("--jobs", type=click.IntRange(min=1), default=1, show_default=True,
              help="Experiments to run in parallel.")
def suite(suite, threads, out, seed, tolerance_scale, jobs):
    """Run every experiment in SUITE (a JSON file or a bundled suite name)."""
    def progress(r):
        click.echo(f"{'PASS' if r.passed else 'FAIL'}  {r.config.run_name}  {r.wall_time:.2f} s", err=True)

    try:
        res = run_suite(suite, out, threads, jobs, tolerance_scale, seed, progress)
    except ConfigError as e:
        click.echo(str(e), err=True)
        sys.exit(EXIT_CONFIG)
    click.echo(res.summary_table())
    click.echo(f"reports in {res.out_dir}")
    sys.exit(res.exit_code)


@main.command("list")
def list_():
    """List registered experiments and bundled suites."""
    width = max(len(k) for k in REGISTRY)
    for name in sorted(REGISTRY):
        click.echo(f"{name:{width}}  {REGISTRY[name].summary}")
    click.echo("")
    click.echo("bundled suites: " + ", ".join(bundled_suites()))


if __name__ == "__main__":
    main()
