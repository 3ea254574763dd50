import typing as T

import click

from targetedmsm.cli.services.config import settle
from targetedmsm.cli.services.data import load_csv
from targetedmsm.cli.services.pipeline import estimate as estimated, sample
from targetedmsm.cli.views.errors import reported
from targetedmsm.cli.views.report import fit_report, render, with_posterior
from targetedmsm.cli.views.tables import write_diagnostic, write_draws


def shared(command: T.Callable) -> T.Callable:
    options = [
        click.option("--input", "input_path", type=click.Path(dir_okay=False), help="headed CSV of covariates, A and Y"),
        click.option("--config", "config_path", type=click.Path(dir_okay=False), help="RunConfig JSON"),
        click.option("--family", type=click.Choice(["binary", "continuous"]), default=None),
        click.option("--model", type=click.Choice(["linear", "ate"]), default=None),
        click.option("--treatment", default=None, help="treatment column, A by default"),
        click.option("--outcome", default=None, help="outcome column, Y by default"),
        click.option("--modifier", "modifiers", multiple=True, help="effect modifier column, repeatable"),
        click.option("--out", type=click.Path(dir_okay=False), default=None, help="report destination, stdout by default"),
    ]
    for option in reversed(options):
        command = option(command)
    return command


def chained(command: T.Callable) -> T.Callable:
    options = [
        click.option("--seed", type=int, default=None),
        click.option("--iters", type=int, default=None),
        click.option("--burn-in", "burn_in", type=int, default=None),
    ]
    for option in reversed(options):
        command = option(command)
    return command


def _emit(text: str, out: T.Optional[str]) -> None:
    if out is None:
        click.echo(text)
        return

    with open(out, "w", encoding="utf-8") as f:
        f.write(text + "\n")


def _settled(command: str, config_path, input_path, modifiers, **flags):
    return settle(
        config_path,
        command,
        input=input_path,
        modifiers=modifiers or None,
        **flags,
    )


@click.command()
@shared
@reported
def estimate(config_path, input_path, family, model, treatment, outcome, modifiers, out):
    """frequentist targeted estimate with wald intervals"""
    config = _settled(
        "estimate", config_path, input_path, modifiers,
        family=family, model=model, treatment=treatment, outcome=outcome, out=out,
    )

    data, cols = load_csv(config.input, config)
    found = estimated(data, cols, config)

    report = fit_report("estimate", found.fit, config.family, config.model, [cols.covariates[j] for j in cols.v_cols])
    _emit(render(report), config.out)


@click.command()
@shared
@chained
@click.option("--draws", "draws_path", type=click.Path(dir_okay=False), default=None, help="posterior draws CSV")
@reported
def bayes(config_path, input_path, family, model, treatment, outcome, modifiers, out, seed, iters, burn_in, draws_path):
    """targeted posterior by random walk metropolis over the fluctuation"""
    config = _settled(
        "bayes", config_path, input_path, modifiers,
        family=family, model=model, treatment=treatment, outcome=outcome, out=out, draws=draws_path,
        **{"mcmc.seed": seed, "mcmc.iters": iters, "mcmc.burn_in": burn_in},
    )

    data, cols = load_csv(config.input, config)
    found = estimated(data, cols, config)
    posterior = sample(data, found, config)

    if config.draws is not None:
        write_draws(config.draws, posterior.draws)

    report = fit_report("bayes", found.fit, config.family, config.model, [cols.covariates[j] for j in cols.v_cols])
    report = with_posterior(report, posterior.draws, posterior.summary, posterior.diagnostic)
    _emit(render(report), config.out)


@click.command()
@shared
@chained
@reported
def diagnose(config_path, input_path, family, model, treatment, outcome, modifiers, out, seed, iters, burn_in):
    """(t, eps, beta) table for plotting beta against eps, plus the saturation flag"""
    config = _settled(
        "diagnose", config_path, input_path, modifiers,
        family=family, model=model, treatment=treatment, outcome=outcome, out=out,
        **{"mcmc.seed": seed, "mcmc.iters": iters, "mcmc.burn_in": burn_in},
    )

    data, cols = load_csv(config.input, config)
    posterior = sample(data, estimated(data, cols, config), config)

    if config.out is not None:
        write_diagnostic(config.out, posterior.diagnostic)

    click.echo(
        render(
            {
                "saturated": posterior.diagnostic.saturated,
                "plateaus": list(posterior.diagnostic.plateaus),
                "acceptance_ratio": posterior.draws.acceptance_ratio,
                "tau": posterior.draws.tau,
            }
        )
    )
