import typing as T

import numpy as np

from abc import abstractmethod
from pyrsistent import PClass, field
from scipy.special import logit
from scipy.stats import multivariate_normal

from targetedmsm.autodiff.dual import grad, log_logistic, log_total_exp, primal, total
from targetedmsm.msm.core import MAX_CONDITION, loss_derivatives, solve_beta
from targetedmsm.msm.data import Dataset, Family
from targetedmsm.msm.models import MsmSpec
from targetedmsm.nuisance.fit import NuisanceFit
from targetedmsm.tmle.engine import (
    FluctuationState,
    TargetedFit,
    _direction,
    arm_covariates,
    fluctuate_qbar,
    tilt_weights,
)
from targetedmsm.util.errors import DegenerateMapError

BOUND: float = 10.0
FD_STEP: float = 1e-5
MIN_DET: float = 1e-12


class Prior(T.Protocol):
    @abstractmethod
    def logpdf(self, beta: np.ndarray) -> float:
        raise NotImplementedError


class GaussianPrior(PClass):
    """independent normal prior on the working model coefficients"""

    mean: np.ndarray = field(type=np.ndarray, mandatory=True)
    var: np.ndarray = field(type=np.ndarray, mandatory=True, invariant=lambda v: (bool(np.all(v > 0)), "variances must be positive"))

    @staticmethod
    def standard(p: int) -> "GaussianPrior":
        return GaussianPrior(mean=np.zeros(p), var=np.ones(p))

    def logpdf(self, beta: np.ndarray) -> float:
        return float(multivariate_normal(mean=self.mean, cov=np.diag(self.var)).logpdf(beta))


class FlatPrior(PClass):
    def logpdf(self, beta: np.ndarray) -> float:
        return 0.0


class TargetedLikelihood(PClass):
    """the parametric submodel through the final targeted state, scaled by
       M^-1 so its score at ε = 0 is the efficient influence function

    @note everything here is frozen at the targeted state; only ε varies
    """

    base: FluctuationState = field(type=FluctuationState, mandatory=True)
    beta_star: np.ndarray = field(type=np.ndarray, mandatory=True)
    spec: MsmSpec = field(type=MsmSpec, mandatory=True)
    family: Family = field(type=Family, mandatory=True)

    A: np.ndarray = field(type=np.ndarray, mandatory=True)
    Y: np.ndarray = field(type=np.ndarray, mandatory=True)
    V: np.ndarray = field(type=np.ndarray, mandatory=True)
    # both arms on every row, see arm_covariates
    h0: np.ndarray = field(type=np.ndarray, mandatory=True)
    h1: np.ndarray = field(type=np.ndarray, mandatory=True)
    sigma2_0: float = field(type=float, initial=1.0)
    sigma2_1: float = field(type=float, initial=1.0)

    M: np.ndarray = field(type=np.ndarray, mandatory=True)

    # rows of M^-1 d/dt dL/dβ and M^-1 dL/dβ at the targeted state
    fluct_dirs: np.ndarray = field(type=np.ndarray, mandatory=True)
    tilt_dirs: np.ndarray = field(type=np.ndarray, mandatory=True)

    bound: float = field(type=float, initial=BOUND)

    @property
    def p(self) -> int:
        return int(self.beta_star.shape[0])


def targeted_likelihood(
    fit: TargetedFit, data: Dataset, spec: MsmSpec, nuisance: NuisanceFit, bound: float = BOUND
) -> TargetedLikelihood:
    state = fit.state
    psi = state.qbar1 - state.qbar0
    ldot, _, gtl = loss_derivatives(psi, fit.beta_star, data.V, spec)

    M = fit.eif.M
    h0, h1 = arm_covariates(nuisance.g1)

    return TargetedLikelihood(
        base=state,
        beta_star=fit.beta_star,
        spec=spec,
        family=data.family,
        A=data.A,
        Y=data.Y,
        V=data.V,
        h0=h0,
        h1=h1,
        sigma2_0=float(nuisance.sigma2_0 if nuisance.sigma2_0 is not None else 1.0),
        sigma2_1=float(nuisance.sigma2_1 if nuisance.sigma2_1 is not None else 1.0),
        M=M,
        fluct_dirs=np.linalg.solve(M, np.asarray(gtl).T).T,
        tilt_dirs=np.linalg.solve(M, np.asarray(ldot).T).T,
        bound=float(bound),
    )


def _inside(lik: TargetedLikelihood, eps: T.Sequence) -> bool:
    return bool(np.all(np.abs([float(primal(e)) for e in eps]) <= lik.bound))


def _scales(lik: TargetedLikelihood) -> T.Tuple[float, float]:
    if lik.family is Family.continuous:
        return lik.sigma2_0, lik.sigma2_1
    return 1.0, 1.0


def fluctuated(lik: TargetedLikelihood, eps: T.Sequence) -> T.Tuple[T.Any, T.Any]:
    scale0, scale1 = _scales(lik)
    return fluctuate_qbar(lik.base, eps, lik.fluct_dirs, lik.family, lik.h0, lik.h1, scale0, scale1)


def log_weights(lik: TargetedLikelihood, eps: T.Sequence) -> T.Any:
    """log of the retilted weights, log w*ᵢ + εᵀuᵢ - log Σₖ w*ₖ exp(εᵀuₖ)"""
    tilt = _direction(eps, lik.tilt_dirs)
    with np.errstate(divide="ignore"):
        base = np.log(lik.base.w)
    return base + tilt - log_total_exp(tilt, lik.base.w)


def log_targeted_likelihood(lik: TargetedLikelihood, eps: T.Sequence) -> T.Any:
    """outcome log density at the fluctuated regressions plus the log of the
       tilted weights; -inf outside [-bound, bound]^p
    """
    if not _inside(lik, eps):
        return -np.inf

    n = lik.A.shape[0]
    ones = np.ones(n)
    s = _direction(eps, lik.fluct_dirs)
    treated = lik.A == 1.0
    h = np.where(treated, lik.h1, lik.h0)

    if lik.family is Family.binary:
        q_a = np.where(treated, lik.base.qbar1, lik.base.qbar0)
        z = logit(q_a) + h * s
        outcome = total(lik.Y * log_logistic(z) + (1.0 - lik.Y) * log_logistic(-z), ones)
    else:
        sigma2 = np.where(treated, lik.sigma2_1, lik.sigma2_0)
        q_a = np.where(treated, lik.base.qbar1, lik.base.qbar0)
        resid = lik.Y - (q_a + sigma2 * h * s)
        outcome = total(-np.log(sigma2) - resid**2 / (2.0 * sigma2), ones)

    tilt = _direction(eps, lik.tilt_dirs)
    with np.errstate(divide="ignore"):
        base = float(np.sum(np.log(lik.base.w)))
    weights = base + total(tilt, ones) - n * log_total_exp(tilt, lik.base.w)

    return outcome + weights


def _psi(lik: TargetedLikelihood, eps: T.Sequence) -> T.Any:
    q0, q1 = fluctuated(lik, eps)
    return q1 - q0


def vartheta(lik: TargetedLikelihood, eps: T.Sequence[float]) -> np.ndarray:
    """ε ↦ β: refluctuate, retilt, re-solve the working model"""
    eps = np.asarray(eps, dtype=float)
    psi = np.asarray(_psi(lik, eps), dtype=float)
    w = tilt_weights(lik.base.w, eps, lik.tilt_dirs)
    return solve_beta(psi, w, lik.spec, lik.V)


def _fd_jacobian(lik: TargetedLikelihood, eps: np.ndarray) -> np.ndarray:
    cols = []
    for k in range(eps.shape[0]):
        e = np.zeros_like(eps)
        e[k] = FD_STEP
        cols.append((vartheta(lik, eps + e) - vartheta(lik, eps - e)) / (2 * FD_STEP))
    return np.column_stack(cols)


def theta_jacobian(
    lik: TargetedLikelihood, eps: T.Sequence[float], beta: T.Optional[np.ndarray] = None
) -> np.ndarray:
    """dϑ/dε through the re-solve, by the implicit function theorem on
       Σᵢ wᵢ(ε) Ldot(ψᵢ(ε), β) = 0

    @note falls back to central differences when the inner hessian is
          ill-conditioned
    """
    eps = np.asarray(eps, dtype=float)
    beta = vartheta(lik, eps) if beta is None else beta

    psi, dpsi = grad(lambda e: _psi(lik, e), eps)
    logw, dlogw = grad(lambda e: log_weights(lik, e), eps)
    w = np.exp(logw)

    ldot, lddot, gtl = loss_derivatives(psi, beta, lik.V, lik.spec)
    inner = np.einsum("i,ijk->jk", w, lddot)

    if not np.all(np.isfinite(inner)) or np.linalg.cond(inner) > MAX_CONDITION:
        return _fd_jacobian(lik, eps)

    dw = w[:, None] * dlogw
    cross = ldot.T @ dw + (gtl * w[:, None]).T @ dpsi
    return -np.linalg.solve(inner, cross)


def log_prior_eps_with_beta(lik: TargetedLikelihood, prior: Prior, eps: T.Sequence[float]) -> T.Tuple[float, np.ndarray]:
    beta = vartheta(lik, eps)
    det = abs(float(np.linalg.det(theta_jacobian(lik, eps, beta))))

    if det < MIN_DET:
        raise DegenerateMapError("the map from eps to beta is degenerate", det=det, eps=np.asarray(eps))

    return prior.logpdf(beta) + float(np.log(det)), beta


def log_prior_eps(lik: TargetedLikelihood, prior: Prior, eps: T.Sequence[float]) -> float:
    """the β prior pulled back to ε: log π(ϑ(ε)) + log|det dϑ/dε|"""
    return log_prior_eps_with_beta(lik, prior, eps)[0]


class TargetedPosterior(PClass):
    """log posterior of ε, returning ϑ(ε) alongside for the chain to record"""

    lik: TargetedLikelihood = field(type=TargetedLikelihood, mandatory=True)
    prior: T.Any = field(mandatory=True, invariant=lambda p: (hasattr(p, "logpdf"), "prior needs logpdf"))

    @property
    def p(self) -> int:
        return self.lik.p

    def evaluate(self, eps: np.ndarray) -> T.Tuple[float, T.Optional[np.ndarray]]:
        ll = log_targeted_likelihood(self.lik, eps)
        if not np.isfinite(ll):
            return -np.inf, None

        lp, beta = log_prior_eps_with_beta(self.lik, self.prior, eps)
        return float(ll) + lp, beta
