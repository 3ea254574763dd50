import typing as T

import numpy as np

from pyrsistent import PClass, field

from targetedmsm.msm.data import Dataset, Family
from targetedmsm.nuisance.glm import GlmFit, fit_linear, fit_logistic
from targetedmsm.util.errors import InsufficientDataError

G_BOUND: float = 0.01

# binary outcome regressions stay strictly inside (0, 1)
Q_BOUND: float = 1e-8


class NuisanceFit(PClass):
    """initial outcome regressions and propensity, one entry per observation"""

    qbar0: np.ndarray = field(type=np.ndarray, mandatory=True)
    qbar1: np.ndarray = field(type=np.ndarray, mandatory=True)

    # P(A=1 | X), truncated to [g_bound, 1 - g_bound]
    g1: np.ndarray = field(type=np.ndarray, mandatory=True)
    g_bound: float = field(type=float, initial=G_BOUND)

    # per-arm residual variance, continuous family only
    sigma2_0: T.Optional[float] = field(type=(float, type(None)), initial=None)
    sigma2_1: T.Optional[float] = field(type=(float, type(None)), initial=None)

    g_fit: T.Optional[GlmFit] = field(type=(GlmFit, type(None)), initial=None)
    q0_fit: T.Optional[GlmFit] = field(type=(GlmFit, type(None)), initial=None)
    q1_fit: T.Optional[GlmFit] = field(type=(GlmFit, type(None)), initial=None)


def design(X: np.ndarray, cols: T.Sequence[int]) -> np.ndarray:
    """intercept plus the chosen covariate columns"""
    return np.column_stack([np.ones(X.shape[0]), X[:, list(cols)]])


def make_nuisance(
    data: Dataset,
    g_cols: T.Sequence[int],
    q_cols: T.Sequence[int],
    family: T.Optional[Family] = None,
    g_bound: float = G_BOUND,
) -> NuisanceFit:
    """propensity by logistic regression of A on X[g_cols]; outcome regression
       fitted separately within each arm on X[q_cols] (logistic for binary
       outcomes, least squares for continuous ones)
    """
    family = family or data.family
    Xg = design(data.X, g_cols)
    Xq = design(data.X, q_cols)

    g_fit = fit_logistic(Xg, data.A, columns=g_cols)
    g1 = np.clip(g_fit.predict(Xg), g_bound, 1.0 - g_bound)

    fits: T.List[GlmFit] = []
    predictions: T.List[np.ndarray] = []
    variances: T.List[T.Optional[float]] = []

    for arm in (0.0, 1.0):
        rows = data.A == arm
        count = int(rows.sum())

        if count < Xq.shape[1]:
            raise InsufficientDataError(
                f"arm A={int(arm)} has {count} observations for {Xq.shape[1]} outcome coefficients",
                arm=int(arm),
                observations=count,
            )

        if family is Family.binary:
            fit = fit_logistic(Xq[rows], data.Y[rows], columns=q_cols)
            predictions.append(np.clip(fit.predict(Xq), Q_BOUND, 1.0 - Q_BOUND))
            variances.append(None)
        else:
            fit = fit_linear(Xq[rows], data.Y[rows], columns=q_cols)
            predictions.append(fit.predict(Xq))
            residual = data.Y[rows] - fit.predict(Xq[rows])
            variances.append(float(np.mean(residual**2)))

        fits.append(fit)

    return NuisanceFit(
        qbar0=predictions[0],
        qbar1=predictions[1],
        g1=g1,
        g_bound=float(g_bound),
        sigma2_0=variances[0],
        sigma2_1=variances[1],
        g_fit=g_fit,
        q0_fit=fits[0],
        q1_fit=fits[1],
    )
