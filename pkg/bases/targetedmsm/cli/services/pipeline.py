import logging
import typing as T

from targetedmsm.bayes.likelihood import TargetedPosterior, targeted_likelihood
from targetedmsm.bayes.sampler import PosteriorDraws, metropolis_hastings, tune_tau
from targetedmsm.bayes.summaries import Diagnostic, PosteriorSummary, diagnostic_export, posterior_summaries
from targetedmsm.msm.data import Dataset
from targetedmsm.msm.models import MsmSpec, builtin
from targetedmsm.nuisance.fit import NuisanceFit, make_nuisance
from targetedmsm.tmle.engine import TargetedFit, target
from targetedmsm.util.errors import ConfigError

from targetedmsm.cli.services.config import RunConfig
from targetedmsm.cli.services.data import Columns


class Estimate(T.NamedTuple):
    spec: MsmSpec
    nuisance: NuisanceFit
    fit: TargetedFit


class Posterior(T.NamedTuple):
    draws: PosteriorDraws
    summary: PosteriorSummary
    diagnostic: Diagnostic


def estimate(data: Dataset, cols: Columns, config: RunConfig) -> Estimate:
    spec = builtin(config.model, len(cols.v_cols))
    nuisance = make_nuisance(data, cols.g_cols, cols.q_cols, g_bound=config.tmle.g_bound)

    fit = target(
        data,
        spec,
        nuisance,
        stop_tol=config.tmle.stop_tol,
        max_iter=config.tmle.max_iter,
        level=config.level,
    )
    return Estimate(spec=spec, nuisance=nuisance, fit=fit)


def sample(data: Dataset, found: Estimate, config: RunConfig) -> Posterior:
    p = found.spec.p
    if config.prior_mean and len(config.prior_mean) != p:
        raise ConfigError(f"prior has {len(config.prior_mean)} coordinates, the model has {p}", p=p)

    mcmc = config.chain()
    posterior = TargetedPosterior(
        lik=targeted_likelihood(found.fit, data, found.spec, found.nuisance), prior=mcmc.prior(p)
    )

    tau = tune_tau(posterior, mcmc.tau_min, mcmc.tau_max, mcmc.K, seed=config.seed)
    draws = metropolis_hastings(posterior, tau, mcmc.iters, seed=config.seed)
    logging.info(f"sampled {mcmc.iters} draws with tau = {tau:.4g}, acceptance {draws.acceptance_ratio:.3f}")

    return Posterior(
        draws=draws,
        summary=posterior_summaries(draws, config.level, mcmc.burn_in),
        diagnostic=diagnostic_export(draws),
    )
