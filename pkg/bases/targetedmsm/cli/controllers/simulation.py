import os.path

import click

from targetedmsm.sim.dgp import true_beta_oracle
from targetedmsm.sim.harness import SCENARIOS, Method, run_scenario

from targetedmsm.cli.services.config import FULL_REPS, settle
from targetedmsm.cli.views.errors import reported
from targetedmsm.cli.views.report import render, simulation_report
from targetedmsm.cli.views.tables import add_simulation, start_simulation


@click.command()
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None)
@click.option("--scenario", "scenarios", type=click.Choice(sorted(SCENARIOS.keys())), multiple=True)
@click.option("--n", "sizes", type=int, multiple=True, help="sample size, repeatable")
@click.option("--reps", type=int, default=None)
@click.option("--full", is_flag=True, help=f"{FULL_REPS} replications per cell")
@click.option("--method", type=click.Choice([m.name for m in Method]), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--iters", type=int, default=None, help="chain length for the bayesian arm")
@click.option("--burn-in", "burn_in", type=int, default=None)
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="results CSV, JSON is written beside it")
@reported
def simulate(config_path, scenarios, sizes, reps, full, method, seed, iters, burn_in, out):
    """coverage and bias of the estimators over simulated replications"""
    config = settle(
        config_path,
        "simulate",
        scenarios=scenarios or None,
        sizes=sizes or None,
        reps=FULL_REPS if full else reps,
        method=method,
        out=out,
        **{"mcmc.seed": seed, "mcmc.iters": iters, "mcmc.burn_in": burn_in},
    )

    beta0, _ = true_beta_oracle()
    results = []

    if config.out is not None:
        start_simulation(config.out)

    for scenario in config.scenarios:
        for n in config.sizes:
            result = run_scenario(
                SCENARIOS[scenario],
                n,
                config.reps,
                Method[config.method],
                seed=config.seed,
                mcmc=config.chain(),
                beta0=beta0,
            )
            results.append(result)

            if config.out is not None:
                add_simulation(config.out, result)

    text = render(simulation_report(results, config.seed))

    if config.out is None:
        click.echo(text)
        return

    with open(os.path.splitext(config.out)[0] + ".json", "w", encoding="utf-8") as f:
        f.write(text + "\n")
