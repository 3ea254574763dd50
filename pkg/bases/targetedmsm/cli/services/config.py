import json
import typing as T

import numpy as np

from pyrsistent import InvariantException, PClass, PVector, field, pvector, thaw

from targetedmsm.bayes.summaries import BURN_IN, MIN_KEPT
from targetedmsm.msm.data import Family
from targetedmsm.sim.harness import SAMPLE_SIZES, SCENARIOS, McmcConfig
from targetedmsm.util.errors import ConfigError
from targetedmsm.util.schema import SCHEMA, check

COMMANDS: T.Tuple[str, ...] = ("estimate", "bayes", "simulate", "diagnose")
MODELS: T.Tuple[str, ...] = ("linear", "ate")

DEFAULT_REPS: int = 200
FULL_REPS: int = 500


def _names(values: T.Iterable) -> PVector:
    return pvector(str(e) for e in values)


def _floats(values: T.Iterable) -> PVector:
    return pvector(float(e) for e in values)


def _ints(values: T.Iterable) -> PVector:
    return pvector(int(e) for e in values)


def _maybe_float(value: T.Any) -> T.Optional[float]:
    return None if value is None else float(value)


class ChainSettings(PClass):
    iters: int = field(type=int, initial=5000)
    burn_in: T.Optional[int] = field(type=(int, type(None)), initial=None)
    seed: int = field(type=int, initial=0)
    tau_min: float = field(type=float, initial=1e-4, factory=float)
    tau_max: float = field(type=float, initial=10.0, factory=float)
    K: int = field(type=int, initial=20)


class TargetingSettings(PClass):
    stop_tol: T.Optional[float] = field(type=(float, type(None)), initial=None, factory=_maybe_float)
    max_iter: int = field(type=int, initial=50)
    g_bound: float = field(type=float, initial=0.01, factory=float)


class RunConfig(PClass):
    """everything a command needs, read from JSON and overridden by flags"""

    schema: str = field(type=str, initial=str(SCHEMA))
    command: str = field(type=str, initial="estimate")

    input: T.Optional[str] = field(type=(str, type(None)), initial=None)
    out: T.Optional[str] = field(type=(str, type(None)), initial=None)
    draws: T.Optional[str] = field(type=(str, type(None)), initial=None)

    family: str = field(type=str, initial=Family.binary.name)
    model: str = field(type=str, initial="linear")
    level: float = field(type=float, initial=0.95, factory=float)

    treatment: str = field(type=str, initial="A")
    outcome: str = field(type=str, initial="Y")

    # empty covariates means every column but treatment and outcome
    covariates: PVector[str] = field(type=PVector, initial=pvector(), factory=_names)
    modifiers: PVector[str] = field(type=PVector, initial=pvector(), factory=_names)
    g_columns: PVector[str] = field(type=PVector, initial=pvector(), factory=_names)
    q_columns: PVector[str] = field(type=PVector, initial=pvector(), factory=_names)

    prior_mean: PVector[float] = field(type=PVector, initial=pvector(), factory=_floats)
    prior_var: PVector[float] = field(type=PVector, initial=pvector(), factory=_floats)

    mcmc: ChainSettings = field(type=ChainSettings, initial=ChainSettings())
    tmle: TargetingSettings = field(type=TargetingSettings, initial=TargetingSettings())

    scenarios: PVector[str] = field(type=PVector, initial=pvector(sorted(SCENARIOS.keys())), factory=_names)
    sizes: PVector[int] = field(type=PVector, initial=pvector(SAMPLE_SIZES), factory=_ints)
    reps: int = field(type=int, initial=DEFAULT_REPS)
    method: str = field(type=str, initial="frequentist")

    @property
    def seed(self) -> int:
        return self.mcmc.seed

    def chain(self) -> McmcConfig:
        return McmcConfig(
            iters=self.mcmc.iters,
            burn_in=self.mcmc.burn_in,
            tau_min=self.mcmc.tau_min,
            tau_max=self.mcmc.tau_max,
            K=self.mcmc.K,
            prior_mean=np.array(self.prior_mean, dtype=float) if self.prior_mean else None,
            prior_var=np.array(self.prior_var, dtype=float) if self.prior_var else None,
        )


def validate(config: RunConfig) -> RunConfig:
    problems: T.List[str] = []

    if config.command not in COMMANDS:
        problems.append(f"command must be one of {', '.join(COMMANDS)}")
    if config.family not in Family.__members__:
        problems.append(f"family must be one of {', '.join(Family.__members__)}")
    if config.model not in MODELS:
        problems.append(f"model must be one of {', '.join(MODELS)}")
    if not 0.0 < config.level < 1.0:
        problems.append("level must lie in (0, 1)")
    if config.mcmc.iters < 1:
        problems.append("mcmc.iters must be at least 1")
    if config.mcmc.burn_in is not None and not 0 <= config.mcmc.burn_in < config.mcmc.iters:
        problems.append("mcmc.burn_in must lie in [0, iters)")
    if not 0.0 < config.mcmc.tau_min < config.mcmc.tau_max:
        problems.append("need 0 < mcmc.tau_min < mcmc.tau_max")
    if config.mcmc.K < 1:
        problems.append("mcmc.K must be at least 1")
    if config.tmle.max_iter < 1:
        problems.append("tmle.max_iter must be at least 1")
    if not 0.0 <= config.tmle.g_bound < 0.5:
        problems.append("tmle.g_bound must lie in [0, 0.5)")
    if len(config.prior_mean) != len(config.prior_var):
        problems.append("prior_mean and prior_var need the same length")
    if any(v <= 0 for v in config.prior_var):
        problems.append("prior_var entries must be positive")
    if config.reps < 1:
        problems.append("reps must be at least 1")
    if any(s not in SCENARIOS for s in config.scenarios):
        problems.append(f"scenarios must be among {', '.join(SCENARIOS.keys())}")
    if any(n < 1 for n in config.sizes):
        problems.append("sample sizes must be positive")
    if config.method not in ("frequentist", "bayesian", "both"):
        problems.append("method must be frequentist, bayesian or both")
    if config.command in ("estimate", "bayes", "diagnose") and config.input is None:
        problems.append(f"{config.command} needs an input file")
    if config.command in ("bayes", "diagnose") and config.mcmc.iters >= 1:
        burn_in = config.mcmc.burn_in if config.mcmc.burn_in is not None else int(BURN_IN * config.mcmc.iters)
        if config.mcmc.iters - burn_in < MIN_KEPT:
            problems.append(f"mcmc.iters must leave at least {MIN_KEPT} draws after burn-in")

    if problems:
        raise ConfigError("; ".join(problems), problems=problems)

    return config


def from_dict(doc: dict) -> RunConfig:
    check(doc)

    try:
        return RunConfig.create(doc, ignore_extra=False)
    except (AttributeError, TypeError, InvariantException) as e:
        raise ConfigError(f"invalid configuration: {e}") from e


def load_config(path: T.Optional[str]) -> RunConfig:
    if path is None:
        return RunConfig()

    try:
        with open(path, encoding="utf-8") as f:
            doc = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read configuration {path}: {e}", path=path) from e

    return from_dict(doc)


def to_json(config: RunConfig) -> str:
    return json.dumps(thaw(config.serialize()), indent=2, sort_keys=True)


def settle(path: T.Optional[str], command: str, **flags: T.Any) -> RunConfig:
    """file settings first, then every flag that was actually given

    @param flags dotted names (`mcmc.iters`) reach into the nested sections
    """
    config = load_config(path).set(command=command)

    for name, value in flags.items():
        if value is None or value == ():
            continue

        if "." in name:
            section, key = name.split(".", 1)
            config = config.set(**{section: getattr(config, section).set(**{key: value})})
        else:
            config = config.set(**{name: value})

    return validate(config)
