import logging
import typing as T

import numpy as np

from pyrsistent import PClass, field

from targetedmsm.autodiff.dual import hessian, total
from targetedmsm.msm.models import MsmSpec
from targetedmsm.util.errors import (
    NonConvergenceError,
    PositivityError,
    RankDeficiencyError,
    SingularMatrixError,
)

MAX_NEWTON: int = 100
MAX_HALVINGS: int = 30
MAX_CONDITION: float = 1e12


class EifRows(PClass):
    """per-observation efficient influence function and its two parts

    @note D = (M^-1 (D1 + D2)^T)^T row by row
    """

    D: np.ndarray = field(type=np.ndarray, mandatory=True)
    D1: np.ndarray = field(type=np.ndarray, mandatory=True)
    D2: np.ndarray = field(type=np.ndarray, mandatory=True)
    M: np.ndarray = field(type=np.ndarray, mandatory=True)
    condition: float = field(type=float, initial=1.0)


def _modifiers(v: np.ndarray, n: int) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim == 1:
        v = v.reshape(n, -1)
    return v


def _weights(w: np.ndarray) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if np.any(w < 0) or abs(float(w.sum()) - 1.0) > 1e-9:
        raise AssertionError("weights must be non-negative and sum to one")
    return w


def _initial_beta(psi: np.ndarray, w: np.ndarray, spec: MsmSpec, v: np.ndarray) -> np.ndarray:
    if spec.basis is None:
        return np.zeros(spec.p)

    X = np.asarray(spec.basis(v), dtype=float)
    root = np.sqrt(w)
    beta, *_ = np.linalg.lstsq(X * root[:, None], psi * root, rcond=None)
    return beta


def _stationary(gradient: np.ndarray, beta: np.ndarray) -> bool:
    return float(np.max(np.abs(gradient))) < 1e-10 * max(1.0, float(np.linalg.norm(beta)))


def solve_beta(psi: np.ndarray, w: np.ndarray, spec: MsmSpec, v: np.ndarray) -> np.ndarray:
    """the working model coefficients minimizing Σᵢ wᵢ L(ψᵢ, m(β, vᵢ))

    damped newton from the weighted least squares start, halving the step
    until the risk does not increase

    @param psi per-observation effect values
    @param w weights summing to one (empirical or tilted)
    @param v effect modifier rows
    """
    psi = np.asarray(psi, dtype=float)
    w = _weights(w)
    v = _modifiers(v, psi.shape[0])

    def risk(beta: T.Sequence) -> T.Any:
        return total(spec.loss(psi, spec.model(beta, v)), w)

    beta = _initial_beta(psi, w, spec, v)
    gradient = np.full(spec.p, np.inf)

    for iteration in range(MAX_NEWTON):
        value, gradient, h = hessian(risk, beta)

        condition = float(np.linalg.cond(h)) if np.all(np.isfinite(h)) else np.inf
        if not condition <= MAX_CONDITION:
            raise RankDeficiencyError("risk hessian is singular in beta", beta=beta, condition=condition)

        if _stationary(gradient, beta):
            return beta

        step = np.linalg.solve(h, -gradient)
        slack = 16 * np.finfo(float).eps * max(1.0, abs(value))

        t = 1.0
        for _ in range(MAX_HALVINGS):
            candidate = beta + t * step
            if float(risk(list(candidate))) <= value + slack:
                break
            t /= 2
        else:
            raise NonConvergenceError(
                "line search could not decrease the risk",
                beta=beta,
                gradient_norm=float(np.max(np.abs(gradient))),
            )

        beta = candidate

    raise NonConvergenceError(
        f"beta solver did not converge in {MAX_NEWTON} iterations",
        beta=beta,
        gradient_norm=float(np.max(np.abs(gradient))),
    )


def loss_derivatives(
    t: T.Union[float, np.ndarray], beta: T.Sequence[float], v: np.ndarray, spec: MsmSpec
) -> T.Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """dL/dβ, d²L/dβ² and d/dt dL/dβ at (t, β), one slice per row when t is a vector

    @return (Ldot, Lddot, grad_t_Ldot) with shapes (..., p), (..., p, p), (..., p)
    """
    p = spec.p

    def joint(z: T.Sequence) -> T.Any:
        return spec.loss(z[p], spec.model(z[:p], v))

    _, g, h = hessian(joint, [*np.asarray(beta, dtype=float), t])
    return g[..., :p], h[..., :p, :p], h[..., p, :p]


def _normalizer(lddot: np.ndarray, w: np.ndarray) -> T.Tuple[np.ndarray, float]:
    M = -np.einsum("i,ijk->jk", w, lddot)
    M = 0.5 * (M + M.T)

    condition = float(np.linalg.cond(M)) if np.all(np.isfinite(M)) else np.inf
    logging.debug(f"normalizing matrix condition number {condition:.3e}")

    if not condition <= MAX_CONDITION:
        raise SingularMatrixError("normalizing matrix is singular", condition=condition)

    return M, condition


def normalizing_matrix(
    psi: np.ndarray, w: np.ndarray, beta: T.Sequence[float], spec: MsmSpec, v: np.ndarray
) -> np.ndarray:
    """M = -Σᵢ wᵢ d²L/dβ²(ψᵢ, β)(vᵢ)"""
    psi = np.asarray(psi, dtype=float)
    _, lddot, _ = loss_derivatives(psi, beta, _modifiers(v, psi.shape[0]), spec)
    M, _ = _normalizer(lddot, np.asarray(w, dtype=float))
    return M


def delta_star(
    a: T.Union[float, np.ndarray],
    y: T.Union[float, np.ndarray],
    qbar_a: T.Union[float, np.ndarray],
    g1: T.Union[float, np.ndarray],
) -> T.Union[float, np.ndarray]:
    """conditional influence of the effect at one covariate value:
       (I(a=1)/g1 - I(a=0)/(1-g1)) (y - qbar_a)
    """
    g1 = np.asarray(g1, dtype=float)
    if np.any((g1 <= 0.0) | (g1 >= 1.0)):
        raise PositivityError("propensity at 0 or 1", smallest=float(g1.min()), largest=float(g1.max()))

    a = np.asarray(a, dtype=float)
    out = (a / g1 - (1.0 - a) / (1.0 - g1)) * (np.asarray(y, dtype=float) - np.asarray(qbar_a, dtype=float))
    return float(out) if out.shape == () else out


def assemble_eif(
    psi: np.ndarray,
    w: np.ndarray,
    beta: T.Sequence[float],
    spec: MsmSpec,
    v: np.ndarray,
    delta: np.ndarray,
) -> EifRows:
    psi = np.asarray(psi, dtype=float)
    w = np.asarray(w, dtype=float)
    ldot, lddot, gtl = loss_derivatives(psi, beta, _modifiers(v, psi.shape[0]), spec)

    M, condition = _normalizer(lddot, w)

    d1 = gtl * np.asarray(delta, dtype=float)[:, None]
    d2 = np.array(ldot)
    D = np.linalg.solve(M, (d1 + d2).T).T

    return EifRows(D=D, D1=d1, D2=d2, M=M, condition=condition)


def eif_covariance(E: EifRows) -> np.ndarray:
    """mean-centered covariance of the influence rows, divisor n"""
    n = E.D.shape[0]
    if n < 2:
        raise AssertionError("covariance needs at least two rows")

    centered = E.D - E.D.mean(axis=0)
    return centered.T @ centered / n
