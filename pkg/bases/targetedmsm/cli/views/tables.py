import os.path
import typing as T

from targetedmsm.bayes.sampler import PosteriorDraws
from targetedmsm.bayes.summaries import Diagnostic, draw_rows
from targetedmsm.sim.harness import SimResult, simulation_rows
from targetedmsm.util.records import append_rows, write_rows

SIMULATION_COLUMNS: T.Tuple[str, ...] = (
    "scenario",
    "n",
    "estimator",
    "coverage_b1",
    "bias_b1",
    "coverage_b2",
    "bias_b2",
)


def write_draws(path: str, draws: PosteriorDraws) -> int:
    p = draws.eps.shape[1]
    q = draws.beta.shape[1]
    fields = ["iter", "accepted", *(f"eps_{j + 1}" for j in range(p)), *(f"beta_{j + 1}" for j in range(q))]
    return write_rows(path, fields, draw_rows(draws))


def write_diagnostic(path: str, diagnostic: Diagnostic) -> int:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    diagnostic.table.to_csv(path, index=False, float_format="%.17g")
    return len(diagnostic.table)


def start_simulation(path: str) -> int:
    return write_rows(path, SIMULATION_COLUMNS, [])


def add_simulation(path: str, result: SimResult) -> int:
    """appends a finished scenario, so a long run leaves partial tables behind"""
    return append_rows(path, SIMULATION_COLUMNS, simulation_rows([result]))
