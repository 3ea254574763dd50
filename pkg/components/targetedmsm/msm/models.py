import typing as T

import numpy as np

from pyrsistent import PClass, field

from targetedmsm.util.errors import InvalidLossError


def _callable(f: T.Any) -> T.Tuple[bool, str]:
    return callable(f), "must be callable"


class MsmSpec(PClass):
    """working model m(beta, v) and loss L(t, m), both written against the
       autodiff primitives so they accept floats, arrays and duals alike

    @note v is the effect modifier matrix (rows x modifiers); index it as
          v[..., j] so a single row works too
    @note basis, when set, maps v to the design of a model linear in beta and
          seeds the solver with the weighted least squares fit
    """

    name: str = field(type=str, initial="custom")
    p: int = field(type=int, mandatory=True, invariant=lambda p: (p >= 1, "p must be positive"))
    model: T.Callable = field(mandatory=True, invariant=_callable)
    loss: T.Callable = field(mandatory=True, invariant=_callable)
    basis: T.Optional[T.Callable] = field(initial=None)


def linear_model(beta: T.Sequence, v: np.ndarray) -> T.Any:
    out = beta[0]
    for j in range(1, len(beta)):
        out = out + beta[j] * v[..., j - 1]
    return out


def squared_error(t: T.Any, m: T.Any) -> T.Any:
    return (t - m) ** 2


def linear_basis(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    return np.column_stack([np.ones(v.shape[0]), v])


def linear_squared_error(k: int) -> MsmSpec:
    """(1, v) beta projected under squared error, k effect modifiers"""
    return MsmSpec(
        name="linear",
        p=k + 1,
        model=linear_model,
        loss=squared_error,
        basis=linear_basis,
    )


def intercept_only() -> MsmSpec:
    """the average treatment effect as a one-parameter working model"""
    return MsmSpec(
        name="ate",
        p=1,
        model=linear_model,
        loss=squared_error,
        basis=lambda v: np.ones((np.shape(v)[0], 1)),
    )


def builtin(name: str, k: int) -> MsmSpec:
    if name == "linear":
        return linear_squared_error(k)

    if name == "ate":
        return intercept_only()

    raise InvalidLossError(f"unknown working model {name!r}", model=name)


def validate_spec(spec: MsmSpec, samples: int = 256, seed: int = 0) -> MsmSpec:
    """checks L(t, t) <= L(t, m) on random pairs, the minimal loss property"""
    rng = np.random.default_rng(seed)
    t = rng.uniform(-3.0, 3.0, size=samples)
    m = rng.uniform(-3.0, 3.0, size=samples)

    at_target = np.broadcast_to(np.asarray(spec.loss(t, t), dtype=float), t.shape)
    elsewhere = np.broadcast_to(np.asarray(spec.loss(t, m), dtype=float), t.shape)

    violations = np.flatnonzero(at_target > elsewhere + 1e-12)
    if violations.size:
        i = int(violations[0])
        raise InvalidLossError(
            f"loss is not minimized at its target: L({t[i]:.3f}, {t[i]:.3f}) > L({t[i]:.3f}, {m[i]:.3f})",
            spec=spec.name,
        )

    return spec
