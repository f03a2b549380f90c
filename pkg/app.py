"""
Command-line entry point of the cluster-expansion verification lab.
"""

import logging
import sys
from functools import wraps

import click

from src.errors import VerifierError
from src.settings import settings
from src.verifier.config import load_config
from src.verifier.reports import FORMATS, write_report
from src.verifier.runner import FAIL, VerificationRunner

logging.basicConfig(
    level=getattr(logging, settings.log_level, logging.INFO),
    format='%(asctime)s %(name)s %(levelname)s %(message)s',
    stream=sys.stderr,
)
logger = logging.getLogger(__name__)

EXIT_FAIL = 1
EXIT_ERROR = 2


def run_options(f):
    """Flags shared by every subcommand; each overrides the config file."""
    options = [
        click.option('--config', 'config_path', type=click.Path(exists=True, dir_okay=False),
                     help='Flat JSON run configuration.'),
        click.option('--out', 'output', type=click.Path(dir_okay=False), help='Report path (default stdout).'),
        click.option('--format', 'fmt', type=click.Choice(FORMATS), help='Report format.'),
        click.option('--seed', type=int, help='Seed of every randomized grid.'),
        click.option('--precision', type=int, help='mpmath working precision in bits.'),
        click.option('--term-cap', type=int, help='Largest admissible enumeration.'),
    ]
    for option in reversed(options):
        f = option(f)
    return f


def verification(kind):
    """Load the config, run one suite, emit its report and map the outcome to an exit code."""
    def decorator(f):
        @run_options
        @wraps(f)
        def command(config_path, output, fmt, seed, precision, term_cap):
            try:
                config = load_config(config_path, output=output, format=fmt, seed=seed,
                                     precision=precision, term_cap=term_cap)
                runner = VerificationRunner(config)
                report = f(runner)
                text = write_report(report, config.output, config.format)
            except (VerifierError, OSError) as e:
                logger.error(f"{kind} failed: {e}")
                click.echo(f"error: {type(e).__name__}: {e}", err=True)
                sys.exit(EXIT_ERROR)

            if not config.output:
                click.echo(text, nl=False)
            click.echo(f"{kind}: {report['status']}", err=True)
            if report['status'] == FAIL:
                sys.exit(EXIT_FAIL)
        return command
    return decorator


@click.group()
def cli():
    """Numerical verification of the convergence proof for the cluster expansion."""


@cli.command('verify-partition')
@verification('verify-partition')
def verify_partition(runner):
    """Check that the chunk dissection sums to Z exactly."""
    return runner.run_verify_partition()


@cli.command('limit-scan')
@verification('limit-scan')
def limit_scan(runner):
    """Extrapolate (ln Z)/N over the N grid and check the T-split ordering."""
    return runner.run_limit_scan()


@cli.command('contour-suite')
@verification('contour-suite')
def contour_suite(runner):
    """Contour identity, deformation and stationary-point checks."""
    return runner.run_contour_suite()


@cli.command('bound-suite')
@verification('bound-suite')
def bound_suite(runner):
    """Instantiate every inequality family on its randomized grid."""
    return runner.run_bound_suite()


@cli.command('all')
@verification('all')
def run_all(runner):
    """Every suite in one report."""
    return runner.run_all()


if __name__ == '__main__':
    cli()
