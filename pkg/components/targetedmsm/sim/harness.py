import logging
import os
import typing as T

import numpy as np

from enum import Enum
from joblib import Parallel, delayed
from pyrsistent import PClass, PMap, PVector, field, pmap, pvector

from targetedmsm.bayes.likelihood import GaussianPrior, TargetedPosterior, targeted_likelihood
from targetedmsm.bayes.sampler import TAU_MAX, TAU_MIN, TUNE_STEPS, metropolis_hastings, tune_tau
from targetedmsm.bayes.summaries import posterior_summaries
from targetedmsm.msm.models import linear_squared_error
from targetedmsm.nuisance.fit import make_nuisance
from targetedmsm.sim.dgp import V_COLS, generate_dataset, true_beta_oracle
from targetedmsm.tmle.engine import TargetedFit, target
from targetedmsm.util.errors import REPORTED, HarnessError, NonConvergenceError, error_code

threads: int = int(os.getenv("TARGETED_MSM_THREADS", 1))

FAILURE_SHARE: float = 0.05
SAMPLE_SIZES: T.Tuple[int, ...] = (50, 100, 250, 500, 750, 1000)


class Method(Enum):
    frequentist = 1
    bayesian = 2
    both = 3

    def runs(self, estimator: "Method") -> bool:
        return self is Method.both or self is estimator


class Scenario(PClass):
    id: str = field(type=str, mandatory=True)
    g_cols: PVector[int] = field(type=PVector, mandatory=True)
    q_cols: PVector[int] = field(type=PVector, mandatory=True)


_ALL = pvector([0, 1, 2, 3])
_SHORT = pvector([0, 3])

# (a) both correct, (b) outcome misspecified, (c) propensity misspecified, (d) both
SCENARIOS: PMap = pmap(
    {
        "a": Scenario(id="a", g_cols=_ALL, q_cols=_ALL),
        "b": Scenario(id="b", g_cols=_ALL, q_cols=_SHORT),
        "c": Scenario(id="c", g_cols=_SHORT, q_cols=_ALL),
        "d": Scenario(id="d", g_cols=_SHORT, q_cols=_SHORT),
    }
)


class McmcConfig(PClass):
    iters: int = field(type=int, initial=5000, invariant=lambda k: (k >= 1, "iters must be positive"))
    burn_in: T.Optional[int] = field(type=(int, type(None)), initial=None)
    tau_min: float = field(type=float, initial=TAU_MIN)
    tau_max: float = field(type=float, initial=TAU_MAX)
    K: int = field(type=int, initial=TUNE_STEPS)
    prior_mean: T.Optional[np.ndarray] = field(type=(np.ndarray, type(None)), initial=None)
    prior_var: T.Optional[np.ndarray] = field(type=(np.ndarray, type(None)), initial=None)

    def prior(self, p: int) -> GaussianPrior:
        mean = self.prior_mean if self.prior_mean is not None else np.zeros(p)
        var = self.prior_var if self.prior_var is not None else np.ones(p)
        return GaussianPrior(mean=mean, var=var)


class Replicate(T.NamedTuple):
    rep: int
    failed: bool
    error: T.Optional[str] = None

    # per estimator: point estimate and (lo, hi) rows
    beta: T.Optional[np.ndarray] = None
    ci: T.Optional[np.ndarray] = None
    median: T.Optional[np.ndarray] = None
    interval: T.Optional[np.ndarray] = None


class EstimatorSummary(PClass):
    estimator: str = field(type=str, mandatory=True)
    reps: int = field(type=int, mandatory=True)

    coverage: np.ndarray = field(type=np.ndarray, mandatory=True)
    coverage_se: np.ndarray = field(type=np.ndarray, mandatory=True)

    # mean |β̂ - β₀|
    bias: np.ndarray = field(type=np.ndarray, mandatory=True)
    bias_se: np.ndarray = field(type=np.ndarray, mandatory=True)
    signed_bias: np.ndarray = field(type=np.ndarray, mandatory=True)


class SimResult(PClass):
    scenario: str = field(type=str, mandatory=True)
    n: int = field(type=int, mandatory=True)
    reps: int = field(type=int, mandatory=True)
    failures: int = field(type=int, initial=0)
    beta0: np.ndarray = field(type=np.ndarray, mandatory=True)
    estimators: PVector[EstimatorSummary] = field(type=PVector, initial=pvector())

    def estimator(self, name: str) -> EstimatorSummary:
        return next(filter(lambda e: e.estimator == name, self.estimators))


def _seed(stream: np.random.SeedSequence) -> int:
    return int(stream.generate_state(1)[0])


def _targeted(data, spec, nuisance) -> TargetedFit:
    try:
        return target(data, spec, nuisance)
    except NonConvergenceError as e:
        # close enough to solving the influence function equation
        if e.fit is not None and e.fit.eif_mean_norm < 1.0 / data.n:
            return e.fit
        raise


def replicate(
    scenario: Scenario,
    n: int,
    stream: np.random.SeedSequence,
    method: Method,
    mcmc: McmcConfig,
    rep: int = 0,
) -> Replicate:
    """one simulated dataset through nuisance fitting, targeting and
       optionally the posterior; estimator errors come back as a failed record
    """
    data_stream, chain_stream = stream.spawn(2)
    spec = linear_squared_error(len(V_COLS))

    try:
        data = generate_dataset(n, _seed(data_stream))
        nuisance = make_nuisance(data, list(scenario.g_cols), list(scenario.q_cols))
        fit = _targeted(data, spec, nuisance)

        out = Replicate(rep=rep, failed=False, beta=fit.beta_star, ci=fit.ci)

        if method.runs(Method.bayesian):
            chain = _seed(chain_stream)
            posterior = TargetedPosterior(
                lik=targeted_likelihood(fit, data, spec, nuisance), prior=mcmc.prior(spec.p)
            )
            tau = tune_tau(posterior, mcmc.tau_min, mcmc.tau_max, mcmc.K, seed=chain)
            draws = metropolis_hastings(posterior, tau, mcmc.iters, seed=chain)
            summary = posterior_summaries(draws, fit.level, mcmc.burn_in)
            out = out._replace(median=summary.median, interval=summary.interval)

        return out

    except REPORTED as e:
        code = error_code(e)
        logging.warning(f"scenario {scenario.id}, n = {n}, replication {rep} failed: {code}: {e}")
        return Replicate(rep=rep, failed=True, error=code)


def summarize(estimator: str, points: np.ndarray, intervals: np.ndarray, beta0: np.ndarray) -> EstimatorSummary:
    reps = points.shape[0]
    covered = (intervals[:, :, 0] <= beta0) & (beta0 <= intervals[:, :, 1])
    coverage = covered.mean(axis=0)
    error = points - beta0

    return EstimatorSummary(
        estimator=estimator,
        reps=reps,
        coverage=coverage,
        coverage_se=np.sqrt(coverage * (1.0 - coverage) / reps),
        bias=np.abs(error).mean(axis=0),
        bias_se=points.std(axis=0, ddof=1) / np.sqrt(reps) if reps > 1 else np.zeros(points.shape[1]),
        signed_bias=error.mean(axis=0),
    )


def run_scenario(
    scenario: Scenario,
    n: int,
    reps: int,
    method: Method = Method.frequentist,
    seed: int = 0,
    mcmc: T.Optional[McmcConfig] = None,
    beta0: T.Optional[np.ndarray] = None,
    n_jobs: T.Optional[int] = None,
) -> SimResult:
    """replicates a scenario at one sample size and aggregates coverage and bias

    @param seed master seed, each replication gets its own spawned stream
    @param beta0 the truth to score against, the brute force oracle by default
    @note more than 5% failed replications raise a HarnessError
    """
    if reps < 1:
        raise AssertionError("reps must be at least 1")

    mcmc = mcmc or McmcConfig()
    beta0 = true_beta_oracle()[0] if beta0 is None else np.asarray(beta0, dtype=float)
    streams = np.random.SeedSequence(seed).spawn(reps)

    results: T.List[Replicate] = Parallel(n_jobs=n_jobs or threads)(
        delayed(replicate)(scenario, n, stream, method, mcmc, rep) for rep, stream in enumerate(streams)
    )

    ok = [r for r in results if not r.failed]
    failures = reps - len(ok)

    if failures > FAILURE_SHARE * reps:
        raise HarnessError(
            f"{failures} of {reps} replications failed in scenario {scenario.id} at n = {n}",
            scenario=scenario.id,
            n=n,
            errors=sorted({r.error for r in results if r.failed}),
        )

    estimators = []
    if method.runs(Method.frequentist):
        estimators.append(
            summarize("frequentist", np.array([r.beta for r in ok]), np.array([r.ci for r in ok]), beta0)
        )
    if method.runs(Method.bayesian):
        estimators.append(
            summarize("bayesian", np.array([r.median for r in ok]), np.array([r.interval for r in ok]), beta0)
        )

    logging.info(f"scenario {scenario.id}, n = {n}: {len(ok)} of {reps} replications kept")

    return SimResult(
        scenario=scenario.id,
        n=n,
        reps=len(ok),
        failures=failures,
        beta0=beta0,
        estimators=pvector(estimators),
    )


def simulation_rows(results: T.Iterable[SimResult]) -> T.List[T.Dict[str, T.Any]]:
    """results table rows: scenario, n, estimator, then coverage and bias per coordinate"""
    rows = []
    for result in results:
        for summary in result.estimators:
            row: T.Dict[str, T.Any] = {"scenario": result.scenario, "n": result.n, "estimator": summary.estimator}
            for j in range(summary.coverage.shape[0]):
                row[f"coverage_b{j + 1}"] = round(float(summary.coverage[j]), 4)
                row[f"bias_b{j + 1}"] = round(float(summary.bias[j]), 4)
            rows.append(row)
    return rows
