import logging
import typing as T

import numpy as np

from abc import abstractmethod
from pyrsistent import PClass, field

from targetedmsm.util.errors import (
    DegenerateMapError,
    EvaluationError,
    InitializationError,
    NonConvergenceError,
    RankDeficiencyError,
)

TAU_MIN: float = 1e-4
TAU_MAX: float = 10.0
TUNE_STEPS: int = 20
PILOT_ITERS: int = 1000

BAND: T.Tuple[float, float] = (0.3, 0.4)

# failures of the inner re-solve count as zero posterior density
REJECTED = (DegenerateMapError, EvaluationError, NonConvergenceError, RankDeficiencyError)


class LogTarget(T.Protocol):
    @property
    @abstractmethod
    def p(self) -> int:
        raise NotImplementedError

    @abstractmethod
    def evaluate(self, eps: np.ndarray) -> T.Tuple[float, T.Optional[np.ndarray]]:
        raise NotImplementedError


class PosteriorDraws(PClass):
    eps: np.ndarray = field(type=np.ndarray, mandatory=True)
    beta: np.ndarray = field(type=np.ndarray, mandatory=True)
    accepted: np.ndarray = field(type=np.ndarray, mandatory=True)

    # proposal standard deviation
    tau: float = field(type=float, mandatory=True)
    acceptance_ratio: float = field(type=float, mandatory=True)

    @property
    def iters(self) -> int:
        return int(self.eps.shape[0])


def _evaluate(target: LogTarget, eps: np.ndarray) -> T.Tuple[float, T.Optional[np.ndarray]]:
    try:
        return target.evaluate(eps)
    except REJECTED as e:
        logging.debug(f"proposal {eps} rejected: {e}")
        return -np.inf, None


def metropolis_hastings(
    target: LogTarget,
    tau: float,
    iters: int,
    seed: int,
    eps0: T.Optional[np.ndarray] = None,
) -> PosteriorDraws:
    """random walk metropolis on ε with N(0, τ²I) increments

    @param tau proposal standard deviation
    @note the same seed replays the same chain
    """
    if not tau > 0:
        raise AssertionError("tau must be positive")
    if iters < 1:
        raise AssertionError("iters must be at least 1")

    p = target.p
    rng = np.random.default_rng(seed)

    current = np.zeros(p) if eps0 is None else np.asarray(eps0, dtype=float).copy()
    try:
        logp, beta = target.evaluate(current)
    except REJECTED as e:
        raise InitializationError(f"log target fails at the starting point: {e}", eps0=current) from e

    if not np.isfinite(logp) or beta is None:
        raise InitializationError("log target is not finite at the starting point", eps0=current, logp=logp)

    eps_out = np.empty((iters, p))
    beta_out = np.empty((iters, beta.shape[0]))
    accepted = np.zeros(iters)

    for t in range(iters):
        proposal = current + tau * rng.standard_normal(p)
        u = rng.uniform()

        logp_new, beta_new = _evaluate(target, proposal)

        if logp_new - logp > np.log(u):
            current, logp, beta = proposal, logp_new, beta_new
            accepted[t] = 1.0

        eps_out[t] = current
        beta_out[t] = beta

    return PosteriorDraws(
        eps=eps_out,
        beta=beta_out,
        accepted=accepted,
        tau=float(tau),
        acceptance_ratio=float(accepted.mean()),
    )


def tune_tau(
    target: LogTarget,
    tau_min: float = TAU_MIN,
    tau_max: float = TAU_MAX,
    K: int = TUNE_STEPS,
    seed: int = 0,
    pilot_iters: int = PILOT_ITERS,
) -> float:
    """bisects τ until a pilot chain accepts between 30% and 40% of proposals

    @note every pilot shares `seed`, so Ā(τ) is compared on common random numbers
    @return the last midpoint when the band is never reached within K steps
    """
    if not 0 < tau_min < tau_max:
        raise AssertionError("need 0 < tau_min < tau_max")

    lo, hi = tau_min, tau_max
    tau = (lo + hi) / 2

    for k in range(K):
        tau = (lo + hi) / 2
        ratio = metropolis_hastings(target, tau, pilot_iters, seed).acceptance_ratio
        logging.debug(f"tune step {k + 1}: tau = {tau:.5g}, acceptance = {ratio:.3f}")

        if ratio <= BAND[0]:
            hi = tau
        elif ratio >= BAND[1]:
            lo = tau
        else:
            return tau

    logging.warning(f"acceptance band not reached after {K} steps, using tau = {tau:.5g}")
    return tau
