import logging

import click

from dotenv import load_dotenv
from rich.console import Console
from rich.logging import RichHandler

from targetedmsm.cli.controllers.estimation import bayes, diagnose, estimate
from targetedmsm.cli.controllers.simulation import simulate


@click.group()
@click.option("--verbose", is_flag=True, help="debug logging")
def cli(verbose: bool) -> None:
    """targeted estimation of marginal structural model coefficients"""
    load_dotenv()

    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(message)s",
        handlers=[RichHandler(console=Console(stderr=True), show_path=False)],
        force=True,
    )


cli.add_command(estimate)
cli.add_command(bayes)
cli.add_command(diagnose)
cli.add_command(simulate)
