import logging
import os.path
import typing as T

import numpy as np
import pandas as pd

from targetedmsm.msm.data import Dataset, Family, make_dataset
from targetedmsm.util.errors import DataError

from targetedmsm.cli.services.config import RunConfig


class Columns(T.NamedTuple):
    covariates: T.List[str]
    v_cols: T.List[int]
    g_cols: T.List[int]
    q_cols: T.List[int]


def columns(header: T.Sequence[str], config: RunConfig) -> Columns:
    """resolves configured names into covariate positions

    @note effect modifiers are covariates; one not listed is appended
    """
    missing = [c for c in (config.treatment, config.outcome, *config.covariates, *config.modifiers) if c not in header]
    missing += [c for c in (*config.g_columns, *config.q_columns) if c not in header]

    if missing:
        raise DataError(f"missing columns: {', '.join(dict.fromkeys(missing))}", missing=list(dict.fromkeys(missing)))

    covariates = list(config.covariates) or [c for c in header if c not in (config.treatment, config.outcome)]
    covariates += [m for m in config.modifiers if m not in covariates]

    def positions(names: T.Sequence[str]) -> T.List[int]:
        return [covariates.index(c) for c in names] if names else list(range(len(covariates)))

    return Columns(
        covariates=covariates,
        v_cols=[covariates.index(m) for m in config.modifiers],
        g_cols=positions(config.g_columns),
        q_cols=positions(config.q_columns),
    )


def load_csv(path: str, config: RunConfig) -> T.Tuple[Dataset, Columns]:
    """reads a headed CSV into a dataset, dropping rows with empty cells

    @return the dataset and the resolved column positions
    """
    if not os.path.exists(path):
        raise DataError(f"no such file: {path}", path=path)

    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DataError(f"cannot parse {path}: {e}", path=path) from e

    frame.columns = [c.strip() for c in frame.columns]
    cols = columns(list(frame.columns), config)
    used = [config.treatment, config.outcome, *cols.covariates]

    cells = frame[used].apply(lambda s: s.str.strip())
    empty = cells.eq("")

    # header is line 1
    dropped = [int(i) + 2 for i in frame.index[empty.any(axis=1)]]
    if dropped:
        logging.warning(f"dropping {len(dropped)} rows with missing cells, lines {dropped}")

    cells = cells[~empty.any(axis=1)]
    numbers = cells.apply(pd.to_numeric, errors="coerce")

    bad = numbers.isna().to_numpy()
    if bad.any():
        lines = [(int(cells.index[i]) + 2, used[j]) for i, j in zip(*np.nonzero(bad))]
        raise DataError(f"non-numeric cells at (line, column) {lines[:10]}", cells=[list(e) for e in lines])

    # exact decimal parsing, so a written dataset reads back bit for bit
    numbers = cells.astype(float)

    return (
        make_dataset(
            numbers[cols.covariates].to_numpy(dtype=float),
            numbers[config.treatment].to_numpy(dtype=float),
            numbers[config.outcome].to_numpy(dtype=float),
            v_cols=cols.v_cols,
            family=Family[config.family],
            columns=cols.covariates,
        ),
        cols,
    )


def write_dataset(path: str, data: Dataset, treatment: str = "A", outcome: str = "Y") -> None:
    frame = pd.DataFrame(data.X, columns=list(data.columns))
    frame[treatment] = data.A
    frame[outcome] = data.Y

    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.17g")
