import json
import math
import typing as T

import numpy as np

from pyrsistent import PClass, PVector, field, pvector, thaw

from targetedmsm.bayes.sampler import PosteriorDraws
from targetedmsm.bayes.summaries import Diagnostic, PosteriorSummary
from targetedmsm.sim.harness import SimResult
from targetedmsm.tmle.engine import TargetedFit
from targetedmsm.util.schema import SCHEMA


def _floats(values: T.Iterable) -> PVector:
    return pvector(float(e) for e in values)


def _rows(values: T.Iterable) -> PVector:
    return pvector(pvector(float(e) for e in row) for row in values)


class PosteriorReport(PClass):
    median: PVector[float] = field(type=PVector, mandatory=True, factory=_floats)
    interval: PVector[PVector[float]] = field(type=PVector, mandatory=True, factory=_rows)
    positive: PVector[float] = field(type=PVector, mandatory=True, factory=_floats)
    acceptance_ratio: float = field(type=float, mandatory=True, factory=float)
    tau: float = field(type=float, mandatory=True, factory=float)
    iters: int = field(type=int, mandatory=True)
    kept: int = field(type=int, mandatory=True)
    saturated: bool = field(type=bool, initial=False)


class ResultReport(PClass):
    schema: str = field(type=str, initial=str(SCHEMA))
    command: str = field(type=str, mandatory=True)
    n: int = field(type=int, mandatory=True)
    family: str = field(type=str, mandatory=True)
    model: str = field(type=str, mandatory=True)

    # coefficient names, "(intercept)" first
    terms: PVector[str] = field(type=PVector, mandatory=True, factory=lambda e: pvector(str(x) for x in e))

    beta_star: PVector[float] = field(type=PVector, mandatory=True, factory=_floats)
    se: PVector[float] = field(type=PVector, mandatory=True, factory=_floats)
    ci: PVector[PVector[float]] = field(type=PVector, mandatory=True, factory=_rows)
    level: float = field(type=float, initial=0.95, factory=float)

    eif_mean_norm: float = field(type=float, mandatory=True, factory=float)
    iterations: int = field(type=int, mandatory=True)
    converged: bool = field(type=bool, initial=True)

    posterior: T.Optional[PosteriorReport] = field(type=(PosteriorReport, type(None)), initial=None)


def terms(modifiers: T.Sequence[str], p: int) -> T.List[str]:
    return ["(intercept)", *modifiers][:p]


def fit_report(command: str, fit: TargetedFit, family: str, model: str, modifiers: T.Sequence[str]) -> ResultReport:
    return ResultReport(
        command=command,
        n=fit.n,
        family=family,
        model=model,
        terms=terms(modifiers, fit.beta_star.shape[0]),
        beta_star=fit.beta_star,
        se=np.sqrt(np.clip(np.diag(fit.cov), 0.0, None) / fit.n),
        ci=fit.ci,
        level=fit.level,
        eif_mean_norm=fit.eif_mean_norm,
        iterations=fit.iterations,
        converged=fit.converged,
    )


def with_posterior(
    report: ResultReport, draws: PosteriorDraws, summary: PosteriorSummary, diagnostic: Diagnostic
) -> ResultReport:
    return report.set(
        posterior=PosteriorReport(
            median=summary.median,
            interval=summary.interval,
            positive=summary.positive,
            acceptance_ratio=draws.acceptance_ratio,
            tau=draws.tau,
            iters=draws.iters,
            kept=summary.kept,
            saturated=diagnostic.saturated,
        )
    )


def _finite(doc: T.Any, path: str = "") -> None:
    if isinstance(doc, dict):
        for k, v in doc.items():
            _finite(v, f"{path}.{k}")
    elif isinstance(doc, list):
        for i, v in enumerate(doc):
            _finite(v, f"{path}[{i}]")
    elif isinstance(doc, float) and not math.isfinite(doc):
        raise AssertionError(f"report field {path.lstrip('.')} is not finite")


def render(doc: T.Any) -> str:
    """stable JSON: sorted keys, two space indent, finite numbers only"""
    plain = thaw(doc.serialize()) if isinstance(doc, PClass) else thaw(doc)
    _finite(plain)
    return json.dumps(plain, indent=2, sort_keys=True)


def simulation_report(results: T.Iterable[SimResult], seed: int) -> dict:
    """results with their monte carlo errors, one entry per scenario, size and estimator"""
    entries = []
    for result in results:
        for summary in result.estimators:
            entries.append(
                {
                    "scenario": result.scenario,
                    "n": result.n,
                    "estimator": summary.estimator,
                    "reps": summary.reps,
                    "failures": result.failures,
                    "beta0": [float(e) for e in result.beta0],
                    "coverage": [float(e) for e in summary.coverage],
                    "coverage_se": [float(e) for e in summary.coverage_se],
                    "bias": [float(e) for e in summary.bias],
                    "bias_se": [float(e) for e in summary.bias_se],
                    "signed_bias": [float(e) for e in summary.signed_bias],
                }
            )

    return {"schema": str(SCHEMA), "seed": seed, "results": entries}
