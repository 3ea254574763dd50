import logging
import typing as T

import numpy as np

from enum import Enum
from pyrsistent import PClass, PVector, field, pvector
from scipy.special import expit

from targetedmsm.util.errors import RankDeficiencyError

MAX_IRLS: int = 50
SCORE_TOL: float = 1e-8
SEPARATION: float = 30.0


class Link(Enum):
    logit = 1
    identity = 2


class GlmFit(PClass):
    """coefficients of a generalized linear model fitted on a design matrix"""

    coef: np.ndarray = field(type=np.ndarray, mandatory=True)
    link: Link = field(type=Link, mandatory=True)

    # design columns the coefficients refer to
    columns: PVector[int] = field(type=PVector, initial=pvector())

    converged: bool = field(type=bool, initial=False)
    iterations: int = field(type=int, initial=0)

    # set when a coefficient ran past the separation bound and was clamped
    separated: bool = field(type=bool, initial=False)

    # bernoulli log-likelihood after every accepted step
    loglik_trace: PVector[float] = field(type=PVector, initial=pvector())

    def predict(self, design: np.ndarray, offset: T.Optional[np.ndarray] = None) -> np.ndarray:
        eta = np.asarray(design, dtype=float) @ self.coef
        if offset is not None:
            eta = eta + offset

        if self.link is Link.logit:
            return expit(eta)

        return eta


def _full_rank(X: np.ndarray) -> None:
    rank = int(np.linalg.matrix_rank(X))
    if rank < X.shape[1]:
        raise RankDeficiencyError(
            f"design has rank {rank} with {X.shape[1]} columns", rank=rank, columns=X.shape[1]
        )


def _loglik(X: np.ndarray, y: np.ndarray, offset: np.ndarray, coef: np.ndarray) -> float:
    eta = offset + X @ coef
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def fit_logistic(
    design: np.ndarray,
    y: np.ndarray,
    offset: T.Optional[np.ndarray] = None,
    columns: T.Sequence[int] = (),
) -> GlmFit:
    """bernoulli maximum likelihood by iteratively reweighted least squares

    every step is halved until the log-likelihood does not drop; a coefficient
    past +-30 on the logit scale is treated as separation, clamped and flagged

    @param offset fixed addition to the linear predictor
    """
    X = np.asarray(design, dtype=float)
    y = np.asarray(y, dtype=float)
    off = np.zeros(X.shape[0]) if offset is None else np.asarray(offset, dtype=float)
    n = X.shape[0]

    if not np.all(np.isin(y, (0.0, 1.0))):
        raise AssertionError("logistic response must be 0/1")

    _full_rank(X)

    coef = np.zeros(X.shape[1])
    loglik = _loglik(X, y, off, coef)
    trace = [loglik]

    converged = False
    separated = False
    iterations = 0

    while True:
        mu = expit(off + X @ coef)
        score = X.T @ (y - mu) / n

        converged = float(np.max(np.abs(score))) < SCORE_TOL

        if not converged and iterations >= MAX_IRLS:
            break

        weight = mu * (1.0 - mu)
        info = (X * weight[:, None]).T @ X / n
        step, *_ = np.linalg.lstsq(info, score, rcond=None)

        if converged:
            # the score tolerance leaves the coefficients a newton step short
            coef = coef + step
            break

        t = 1.0
        candidate = coef + step
        value = _loglik(X, y, off, candidate)
        while value < loglik and t > 2.0**-30:
            t /= 2
            candidate = coef + t * step
            value = _loglik(X, y, off, candidate)

        if value < loglik:
            # no ascent left along the newton direction
            break

        iterations += 1
        coef, loglik = candidate, value
        trace.append(loglik)

        if float(np.max(np.abs(coef))) > SEPARATION:
            logging.warning(
                f"separation in logistic fit after {iterations} iterations, clamping coefficients to +-{SEPARATION}"
            )
            coef = np.clip(coef, -SEPARATION, SEPARATION)
            separated = True
            break

    return GlmFit(
        coef=coef,
        link=Link.logit,
        columns=pvector(int(c) for c in columns),
        converged=converged,
        iterations=iterations,
        separated=separated,
        loglik_trace=pvector(trace),
    )


def fit_linear(design: np.ndarray, y: np.ndarray, columns: T.Sequence[int] = ()) -> GlmFit:
    """ordinary least squares with an identity link"""
    X = np.asarray(design, dtype=float)
    _full_rank(X)

    coef, *_ = np.linalg.lstsq(X, np.asarray(y, dtype=float), rcond=None)

    return GlmFit(
        coef=coef,
        link=Link.identity,
        columns=pvector(int(c) for c in columns),
        converged=True,
        iterations=1,
    )
