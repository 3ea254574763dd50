import typing as T

import numpy as np

from enum import Enum
from pyrsistent import PClass, PVector, field, pvector

from targetedmsm.util.errors import DataError


class Family(Enum):
    binary = 1
    continuous = 2


def _matrix(x: np.ndarray) -> T.Tuple[bool, str]:
    return x.ndim == 2 and bool(np.all(np.isfinite(x))), "X must be a finite matrix"


def _vector(x: np.ndarray) -> T.Tuple[bool, str]:
    return x.ndim == 1 and bool(np.all(np.isfinite(x))), "must be a finite vector"


class Dataset(PClass):
    """observations (X, A, Y) with the columns of X that modify the effect

    @note an empty v_cols is the intercept-only (average treatment effect) case
    """

    # covariates, one row per observation
    X: np.ndarray = field(type=np.ndarray, mandatory=True, invariant=_matrix)

    # treatment indicator
    A: np.ndarray = field(type=np.ndarray, mandatory=True, invariant=_vector)

    # outcome
    Y: np.ndarray = field(type=np.ndarray, mandatory=True, invariant=_vector)

    # effect modifiers, as indices into the columns of X
    v_cols: PVector[int] = field(type=PVector, initial=pvector())

    family: Family = field(type=Family, initial=Family.binary)

    # covariate names, used by reports and csv output
    columns: PVector[str] = field(type=PVector, initial=pvector())

    @property
    def n(self) -> int:
        return int(self.A.shape[0])

    @property
    def V(self) -> np.ndarray:
        return self.X[:, list(self.v_cols)]


def make_dataset(
    X: np.ndarray,
    A: np.ndarray,
    Y: np.ndarray,
    v_cols: T.Sequence[int] = (),
    family: Family = Family.binary,
    columns: T.Optional[T.Sequence[str]] = None,
) -> Dataset:
    """validates and freezes raw arrays into a Dataset"""
    X = np.array(X, dtype=float)
    A = np.array(A, dtype=float)
    Y = np.array(Y, dtype=float)

    if X.ndim == 1:
        X = X[:, None]

    n = A.shape[0]
    if n < 1:
        raise DataError("dataset has no rows")

    if X.shape[0] != n or Y.shape[0] != n:
        raise DataError("X, A and Y must have the same number of rows", rows=[X.shape[0], n, Y.shape[0]])

    for name, values in (("X", X), ("A", A), ("Y", Y)):
        if not np.all(np.isfinite(values)):
            raise DataError(f"{name} has missing or non-finite entries", column=name)

    if not np.all(np.isin(A, (0.0, 1.0))):
        raise DataError("treatment must be 0/1", column="A")

    if family is Family.binary and not np.all(np.isin(Y, (0.0, 1.0))):
        raise DataError("binary family requires a 0/1 outcome", column="Y")

    bad = [c for c in v_cols if not 0 <= int(c) < X.shape[1]]
    if bad:
        raise DataError(f"effect modifier columns out of range: {bad}", columns=bad)

    names = list(columns) if columns is not None else [f"X{j + 1}" for j in range(X.shape[1])]

    for a in (X, A, Y):
        a.flags.writeable = False

    return Dataset(
        X=X,
        A=A,
        Y=Y,
        v_cols=pvector(int(c) for c in v_cols),
        family=family,
        columns=pvector(names),
    )
