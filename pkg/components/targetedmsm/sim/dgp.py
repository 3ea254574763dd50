import functools
import os
import typing as T

import numpy as np

from scipy.special import expit

from targetedmsm.msm.data import Dataset, Family, make_dataset
from targetedmsm.nuisance.fit import NuisanceFit

COLUMNS: T.Tuple[str, ...] = ("X1", "X2", "X3", "X4")

# X4 modifies the effect
V_COLS: T.Tuple[int, ...] = (3,)

ORACLE_SEED: int = 20240927
ORACLE_CHUNK: int = 1_000_000


def propensity(X: np.ndarray) -> np.ndarray:
    return expit(0.5 * X[:, 0] - 0.5 * X[:, 1] + 0.2 * X[:, 2] - 0.1 * X[:, 3])


def outcome(X: np.ndarray, a: T.Union[float, np.ndarray]) -> np.ndarray:
    return expit(X[:, 1] + X[:, 2] + 3.0 * a + 1.5 * a * X[:, 3])


def generate_dataset(n: int, seed: int) -> Dataset:
    """four standard normal covariates, a logistic treatment and a logistic
       outcome whose treatment effect grows with X4
    """
    if n < 1:
        raise AssertionError("n must be positive")

    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, 4))
    A = (rng.uniform(size=n) < propensity(X)).astype(float)
    Y = (rng.uniform(size=n) < outcome(X, A)).astype(float)

    return make_dataset(X, A, Y, v_cols=V_COLS, family=Family.binary, columns=COLUMNS)


def oracle_nuisance(data: Dataset) -> NuisanceFit:
    """the true propensity and outcome regressions of the generating process"""
    return NuisanceFit(
        qbar0=outcome(data.X, 0.0),
        qbar1=outcome(data.X, 1.0),
        g1=propensity(data.X),
        g_bound=0.0,
    )


def _chunks(draws: int, seed: int) -> T.Iterator[np.ndarray]:
    streams = np.random.SeedSequence(seed).spawn((draws + ORACLE_CHUNK - 1) // ORACLE_CHUNK)
    remaining = draws
    for stream in streams:
        size = min(ORACLE_CHUNK, remaining)
        remaining -= size
        yield np.random.default_rng(stream).standard_normal((size, 4))


def _effect(X: np.ndarray) -> np.ndarray:
    return outcome(X, 1.0) - outcome(X, 0.0)


@functools.lru_cache(maxsize=8)
def true_beta_oracle(draws: T.Optional[int] = None, seed: int = ORACLE_SEED) -> T.Tuple[np.ndarray, np.ndarray]:
    """least squares projection of the true effect on (1, X4) by brute force

    @return (beta0, monte carlo standard errors)
    @note the second pass regenerates the same chunks to form the sandwich
    """
    draws = int(draws or os.getenv("TARGETED_MSM_ORACLE_DRAWS", 10_000_000))

    gram = np.zeros((2, 2))
    cross = np.zeros(2)
    for X in _chunks(draws, seed):
        x = np.column_stack([np.ones(X.shape[0]), X[:, 3]])
        gram += x.T @ x
        cross += x.T @ _effect(X)

    beta = np.linalg.solve(gram, cross)

    meat = np.zeros((2, 2))
    for X in _chunks(draws, seed):
        x = np.column_stack([np.ones(X.shape[0]), X[:, 3]])
        score = x * (_effect(X) - x @ beta)[:, None]
        meat += score.T @ score

    bread = np.linalg.inv(gram / draws)
    cov = bread @ (meat / draws) @ bread / draws

    beta.flags.writeable = False
    se = np.sqrt(np.diag(cov))
    se.flags.writeable = False
    return beta, se
