import logging
import typing as T

import numpy as np

from pyrsistent import PClass, PVector, field, pvector
from scipy.special import expit, logit, logsumexp
from scipy.stats import norm

from targetedmsm.autodiff.dual import Dual, hessian, log_logistic, log_total_exp, logistic, total
from targetedmsm.msm.core import (
    EifRows,
    assemble_eif,
    delta_star,
    eif_covariance,
    loss_derivatives,
    solve_beta,
)
from targetedmsm.msm.data import Dataset, Family
from targetedmsm.msm.models import MsmSpec
from targetedmsm.nuisance.fit import NuisanceFit
from targetedmsm.util.errors import NonConvergenceError

MAX_ITER: int = 50
MAX_NEWTON: int = 100
MAX_HALVINGS: int = 30
EPS_TOL: float = 1e-9


class FluctuationState(PClass):
    """the fluctuated outcome regressions and the tilted empirical distribution"""

    qbar0: np.ndarray = field(type=np.ndarray, mandatory=True)
    qbar1: np.ndarray = field(type=np.ndarray, mandatory=True)

    # unnormalized log tilt, w ∝ exp(tilt_logw)
    tilt_logw: np.ndarray = field(type=np.ndarray, mandatory=True)
    w: np.ndarray = field(type=np.ndarray, mandatory=True)

    beta: np.ndarray = field(type=np.ndarray, mandatory=True)
    eps_history: PVector[np.ndarray] = field(type=PVector, initial=pvector())


class TargetedFit(PClass):
    beta_star: np.ndarray = field(type=np.ndarray, mandatory=True)
    eif: EifRows = field(type=EifRows, mandatory=True)
    cov: np.ndarray = field(type=np.ndarray, mandatory=True)

    # rows of (lo, hi) at `level`
    ci: np.ndarray = field(type=np.ndarray, mandatory=True)
    level: float = field(type=float, initial=0.95)

    iterations: int = field(type=int, initial=0)
    converged: bool = field(type=bool, initial=True)
    eif_mean_norm: float = field(type=float, mandatory=True)
    state: FluctuationState = field(type=FluctuationState, mandatory=True)

    @property
    def n(self) -> int:
        return int(self.eif.D.shape[0])


class Anchor(T.NamedTuple):
    """ψ, β and the loss derivatives a fluctuation is built around"""

    psi: np.ndarray
    beta: np.ndarray
    ldot: np.ndarray
    gtl: np.ndarray


def clever_covariates(
    a: T.Union[float, np.ndarray], g1: T.Union[float, np.ndarray]
) -> T.Tuple[T.Any, T.Any]:
    """(h0, h1) = (-I(a=0)/(1-g1), I(a=1)/g1)"""
    a = np.asarray(a, dtype=float)
    g1 = np.asarray(g1, dtype=float)

    h0 = -(1.0 - a) / (1.0 - g1)
    h1 = a / g1

    if h0.shape == ():
        return float(h0), float(h1)
    return h0, h1


def arm_covariates(g1: np.ndarray) -> T.Tuple[np.ndarray, np.ndarray]:
    """clever covariates of both arms on every row, (-1/(1-g1), 1/g1)

    @note on the observed arm these equal clever_covariates(a, g1)
    """
    g1 = np.asarray(g1, dtype=float)
    h0, _ = clever_covariates(np.zeros_like(g1), g1)
    _, h1 = clever_covariates(np.ones_like(g1), g1)
    return np.asarray(h0, dtype=float), np.asarray(h1, dtype=float)


def _direction(eps: T.Sequence, rows: np.ndarray) -> T.Any:
    out: T.Any = 0.0
    for k, e in enumerate(eps):
        out = out + e * rows[:, k]
    return out


def _shift(q: np.ndarray, s: T.Any, family: Family) -> T.Any:
    if family is Family.continuous:
        return q + s

    if isinstance(s, Dual):
        return logistic(logit(q) + s)

    # exact identity wherever a row does not move
    return np.where(s == 0.0, q, expit(logit(q) + s))


def fluctuate_qbar(
    state: FluctuationState,
    eps: T.Sequence,
    grad_t_ldot: np.ndarray,
    family: Family,
    h0: np.ndarray,
    h1: np.ndarray,
    scale0: float = 1.0,
    scale1: float = 1.0,
) -> T.Tuple[T.Any, T.Any]:
    """moves each outcome regression along its clever covariate times
       εᵀ grad_t_ldot, on the logit scale (binary) or the identity scale

    @param grad_t_ldot rows of d/dt dL/dβ, premultiplied by M^-1 by the
           bayesian caller
    @param scale0 the arm variance σ²₀ in the bayesian continuous case
    """
    s = _direction(eps, grad_t_ldot)

    q0 = _shift(state.qbar0, h0 * scale0 * s, family)
    q1 = _shift(state.qbar1, h1 * scale1 * s, family)
    return q0, q1


def tilt_weights(w_prev: np.ndarray, eps: T.Sequence[float], ldot: np.ndarray) -> np.ndarray:
    """wᵢ ∝ w_prevᵢ exp(εᵀ Ldotᵢ), renormalized on the log scale"""
    eps = np.asarray(eps, dtype=float)
    if not np.any(eps):
        return w_prev

    with np.errstate(divide="ignore"):
        logw = np.log(w_prev) + ldot @ eps

    return np.exp(logw - logsumexp(logw))


def initial_state(nuisance: NuisanceFit, p: int) -> FluctuationState:
    n = nuisance.qbar0.shape[0]
    return FluctuationState(
        qbar0=np.asarray(nuisance.qbar0, dtype=float),
        qbar1=np.asarray(nuisance.qbar1, dtype=float),
        tilt_logw=np.zeros(n),
        w=np.full(n, 1.0 / n),
        beta=np.zeros(p),
    )


def anchor(state: FluctuationState, spec: MsmSpec, v: np.ndarray) -> Anchor:
    psi = state.qbar1 - state.qbar0
    beta = solve_beta(psi, state.w, spec, v)
    ldot, _, gtl = loss_derivatives(psi, beta, v, spec)
    return Anchor(psi=psi, beta=beta, ldot=np.array(ldot), gtl=np.array(gtl))


def eps_risk(
    state: FluctuationState, at: Anchor, data: Dataset, nuisance: NuisanceFit, family: Family
) -> T.Callable[[T.Sequence], T.Any]:
    """the empirical risk of the fluctuation parameter:
       (1/n) Σᵢ [Σⱼ Lⱼ(qⱼ(ε), Oᵢ) - log(n wᵢ(ε))]
    """
    n = data.n
    A, Y = data.A, data.Y
    h0, h1 = clever_covariates(A, nuisance.g1)
    uniform = np.full(n, 1.0 / n)

    with np.errstate(divide="ignore"):
        logw = np.log(state.w)
    base = float(np.mean(logw)) + float(np.log(n))

    if family is Family.binary:
        u0 = logit(state.qbar0)
        u1 = logit(state.qbar1)

    def risk(eps: T.Sequence) -> T.Any:
        s = _direction(eps, at.gtl)
        tilt = _direction(eps, at.ldot)

        if family is Family.binary:
            z0 = u0 + h0 * s
            z1 = u1 + h1 * s
            loss = -(1.0 - A) * (Y * log_logistic(z0) + (1.0 - Y) * log_logistic(-z0)) - A * (
                Y * log_logistic(z1) + (1.0 - Y) * log_logistic(-z1)
            )
        else:
            loss = 0.5 * (1.0 - A) * (Y - (state.qbar0 + h0 * s)) ** 2 + 0.5 * A * (
                Y - (state.qbar1 + h1 * s)
            ) ** 2

        return total(loss - tilt, uniform) + log_total_exp(tilt, state.w) - base

    return risk


def eps_step(
    state: FluctuationState, at: Anchor, data: Dataset, nuisance: NuisanceFit, family: Family
) -> np.ndarray:
    """newton minimization of the fluctuation risk from ε = 0"""
    risk = eps_risk(state, at, data, nuisance, family)
    p = at.beta.shape[0]

    eps = np.zeros(p)
    trace: T.List[float] = []

    for _ in range(MAX_NEWTON):
        value, gradient, h = hessian(risk, eps)
        trace.append(float(value))

        if float(np.max(np.abs(gradient))) < EPS_TOL:
            return eps

        step = np.linalg.lstsq(h, -gradient, rcond=None)[0]
        slack = 16 * np.finfo(float).eps * max(1.0, abs(value))

        t = 1.0
        for _ in range(MAX_HALVINGS):
            candidate = eps + t * step
            if float(risk(list(candidate))) <= value + slack:
                break
            t /= 2
        else:
            raise NonConvergenceError("fluctuation risk did not decrease", trace=trace)

        eps = candidate

    raise NonConvergenceError(f"fluctuation step did not converge in {MAX_NEWTON} iterations", trace=trace)


def apply(
    state: FluctuationState, eps: np.ndarray, at: Anchor, nuisance: NuisanceFit, family: Family
) -> FluctuationState:
    """moves both regressions on every row and retilts the weights"""
    h0, h1 = arm_covariates(nuisance.g1)
    q0, q1 = fluctuate_qbar(state, eps, at.gtl, family, h0, h1)

    return state.set(
        qbar0=np.asarray(q0, dtype=float),
        qbar1=np.asarray(q1, dtype=float),
        tilt_logw=state.tilt_logw + at.ldot @ eps,
        w=tilt_weights(state.w, eps, at.ldot),
        beta=at.beta,
        eps_history=state.eps_history.append(np.array(eps)),
    )


def wald_ci(fit: TargetedFit, level: float = 0.95) -> np.ndarray:
    """β*ⱼ ± z sqrt(covⱼⱼ / n), one (lo, hi) row per coordinate"""
    z = float(norm.ppf(0.5 + level / 2.0))
    half = z * np.sqrt(np.clip(np.diag(fit.cov), 0.0, None) / fit.n)
    return np.column_stack([fit.beta_star - half, fit.beta_star + half])


def _finalize(
    state: FluctuationState,
    data: Dataset,
    spec: MsmSpec,
    nuisance: NuisanceFit,
    iterations: int,
    converged: bool,
    level: float,
) -> TargetedFit:
    v = data.V
    psi = state.qbar1 - state.qbar0
    beta = solve_beta(psi, state.w, spec, v)

    q_a = np.where(data.A == 1.0, state.qbar1, state.qbar0)
    delta = delta_star(data.A, data.Y, q_a, nuisance.g1)
    eif = assemble_eif(psi, state.w, beta, spec, v, delta)

    fit = TargetedFit(
        beta_star=beta,
        eif=eif,
        cov=eif_covariance(eif),
        ci=np.zeros((spec.p, 2)),
        level=float(level),
        iterations=iterations,
        converged=converged,
        eif_mean_norm=float(np.max(np.abs(eif.D.mean(axis=0)))),
        state=state.set(beta=beta),
    )
    return fit.set(ci=wald_ci(fit, level))


def target(
    data: Dataset,
    spec: MsmSpec,
    nuisance: NuisanceFit,
    family: T.Optional[Family] = None,
    stop_tol: T.Optional[float] = None,
    max_iter: int = MAX_ITER,
    level: float = 0.95,
    start: T.Optional[FluctuationState] = None,
) -> TargetedFit:
    """iterates fluctuation steps until ‖ε‖∞ drops below stop_tol

    each iteration re-solves β at the current fluctuated state, takes one
    newton-optimal ε and applies it to both the outcome regressions and the
    empirical weights

    @param start resume from an earlier final state instead of the nuisance fit
    @note max_iter exhaustion raises with the fit attached, so a caller may
          still accept it when eif_mean_norm is small enough
    """
    family = family or data.family
    stop_tol = stop_tol if stop_tol is not None else 1e-4 / np.sqrt(data.n)
    v = data.V

    state = start if start is not None else initial_state(nuisance, spec.p)

    for iteration in range(1, max_iter + 1):
        at = anchor(state, spec, v)
        eps = eps_step(state, at, data, nuisance, family)
        state = apply(state, eps, at, nuisance, family)

        size = float(np.max(np.abs(eps)))
        logging.debug(f"targeting iteration {iteration}: |eps| = {size:.3e}")

        if size < stop_tol:
            return _finalize(state, data, spec, nuisance, iteration, True, level)

    fit = _finalize(state, data, spec, nuisance, max_iter, False, level)
    raise NonConvergenceError(
        f"targeting did not converge in {max_iter} iterations",
        eif_mean_norm=fit.eif_mean_norm,
        fit=fit,
    )
