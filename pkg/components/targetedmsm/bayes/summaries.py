import logging
import typing as T

import numpy as np
import pandas as pd

from pyrsistent import PClass, field
from scipy.stats import kstest, norm

from targetedmsm.bayes.sampler import PosteriorDraws
from targetedmsm.tmle.engine import TargetedFit

BURN_IN: float = 0.2
MIN_KEPT: int = 100

PLATEAU_TOL: float = 1e-6
PLATEAU_SHARE: float = 0.01


class PosteriorSummary(PClass):
    median: np.ndarray = field(type=np.ndarray, mandatory=True)
    mean: np.ndarray = field(type=np.ndarray, mandatory=True)
    sd: np.ndarray = field(type=np.ndarray, mandatory=True)

    # rows of (lo, hi) at `level`
    interval: np.ndarray = field(type=np.ndarray, mandatory=True)
    level: float = field(type=float, initial=0.95)

    # P(βⱼ > 0)
    positive: np.ndarray = field(type=np.ndarray, mandatory=True)
    kept: int = field(type=int, mandatory=True)


class Diagnostic(T.NamedTuple):
    table: pd.DataFrame
    saturated: bool

    # per coordinate, whether β sits on a plateau
    plateaus: T.Tuple[bool, ...]


class BvmReport(T.NamedTuple):
    ks: np.ndarray
    pvalue: np.ndarray

    # posterior variance over the influence function variance, per coordinate
    variance_ratio: np.ndarray


def burned(draws: PosteriorDraws, burn_in: T.Optional[int] = None) -> np.ndarray:
    burn_in = int(BURN_IN * draws.iters) if burn_in is None else int(burn_in)
    kept = draws.beta[burn_in:]

    if kept.shape[0] < MIN_KEPT:
        raise AssertionError(f"need at least {MIN_KEPT} draws after burn-in, have {kept.shape[0]}")
    return kept


def posterior_summaries(
    draws: PosteriorDraws, level: float = 0.95, burn_in: T.Optional[int] = None
) -> PosteriorSummary:
    """
    @param burn_in leading draws to drop, 20% of the chain by default
    """
    beta = burned(draws, burn_in)
    tail = (1.0 - level) / 2.0

    return PosteriorSummary(
        median=np.median(beta, axis=0),
        mean=beta.mean(axis=0),
        sd=beta.std(axis=0),
        interval=np.quantile(beta, [tail, 1.0 - tail], axis=0).T,
        level=float(level),
        positive=(beta > 0).mean(axis=0),
        kept=int(beta.shape[0]),
    )


def _plateau(beta: np.ndarray, eps: np.ndarray) -> bool:
    count = max(2, int(np.ceil(PLATEAU_SHARE * beta.shape[0])))

    for edge in (beta.max(), beta.min()):
        at = np.abs(beta - edge) <= PLATEAU_TOL
        if at.sum() < count:
            continue

        # the map is flat there only if ε kept moving
        if float(np.ptp(eps[at], axis=0).max()) > PLATEAU_TOL:
            return True

    return False


def diagnostic_export(draws: PosteriorDraws) -> Diagnostic:
    """pairs (t, ε, β) for plotting β against ε, flagging a β coordinate that
       piles up at its max or min while ε keeps moving
    """
    p = draws.eps.shape[1]
    q = draws.beta.shape[1]

    table = pd.DataFrame({"t": np.arange(1, draws.iters + 1)})
    for j in range(p):
        table[f"eps_{j + 1}"] = draws.eps[:, j]
    for j in range(q):
        table[f"beta_{j + 1}"] = draws.beta[:, j]

    plateaus = tuple(_plateau(draws.beta[:, j], draws.eps) for j in range(q))
    saturated = any(plateaus)

    if saturated:
        logging.warning(
            f"beta saturates in coordinates {[j + 1 for j, flat in enumerate(plateaus) if flat]}, "
            "the map from eps to beta looks bounded"
        )

    return Diagnostic(table=table, saturated=saturated, plateaus=plateaus)


def draw_rows(draws: PosteriorDraws) -> T.List[T.Dict[str, T.Any]]:
    """one row per iteration: iter, accepted, eps_1..eps_p, beta_1..beta_p"""
    rows = []
    for t in range(draws.iters):
        row: T.Dict[str, T.Any] = {"iter": t + 1, "accepted": int(draws.accepted[t])}
        row.update({f"eps_{j + 1}": float(e) for j, e in enumerate(draws.eps[t])})
        row.update({f"beta_{j + 1}": float(b) for j, b in enumerate(draws.beta[t])})
        rows.append(row)
    return rows


def bvm_check(draws: PosteriorDraws, fit: TargetedFit, burn_in: T.Optional[int] = None) -> BvmReport:
    """kolmogorov-smirnov distance of each βⱼ posterior from N(β*ⱼ, covⱼⱼ/n)"""
    beta = burned(draws, burn_in)
    var = np.diag(fit.cov) / fit.n

    ks = []
    pvalue = []
    for j in range(beta.shape[1]):
        scale = float(np.sqrt(var[j]))
        result = kstest(beta[:, j], norm(loc=float(fit.beta_star[j]), scale=scale).cdf)
        ks.append(float(result.statistic))
        pvalue.append(float(result.pvalue))

    return BvmReport(
        ks=np.array(ks),
        pvalue=np.array(pvalue),
        variance_ratio=beta.var(axis=0) / var,
    )
