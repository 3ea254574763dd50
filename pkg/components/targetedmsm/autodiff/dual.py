import typing as T

import numpy as np
from scipy.special import expit

from targetedmsm.util.errors import EvaluationError

Leaf = T.Union[float, np.ndarray]
Scalar = T.Union[Leaf, "Dual"]


class Dual:
    """a value with its first order partials over a fixed seed dimension

    @note value and partials may be Dual themselves, nesting two levels
          carries second derivatives (the hessian below)
    @note leaves may be numpy arrays, one entry per data row, so a single
          evaluation differentiates a whole column of observations
    """

    __slots__ = ("value", "partials")

    # numpy must defer to the reflected operators below
    __array_ufunc__ = None

    def __init__(self, value: Scalar, partials: T.Iterable[Scalar]):
        self.value = value
        self.partials = tuple(partials)

    def __repr__(self) -> str:
        return f"Dual({self.value!r}, {self.partials!r})"

    def __neg__(self) -> "Dual":
        return Dual(-self.value, (-d for d in self.partials))

    def __pos__(self) -> "Dual":
        return self

    def __add__(self, other: Scalar) -> "Dual":
        if isinstance(other, Dual):
            return Dual(
                self.value + other.value,
                (a + b for a, b in zip(self.partials, other.partials)),
            )

        return Dual(self.value + other, self.partials)

    __radd__ = __add__

    def __sub__(self, other: Scalar) -> "Dual":
        if isinstance(other, Dual):
            return Dual(
                self.value - other.value,
                (a - b for a, b in zip(self.partials, other.partials)),
            )

        return Dual(self.value - other, self.partials)

    def __rsub__(self, other: Scalar) -> "Dual":
        return Dual(other - self.value, (-d for d in self.partials))

    def __mul__(self, other: Scalar) -> "Dual":
        if isinstance(other, Dual):
            return Dual(
                self.value * other.value,
                (
                    self.value * b + other.value * a
                    for a, b in zip(self.partials, other.partials)
                ),
            )

        return Dual(self.value * other, (d * other for d in self.partials))

    __rmul__ = __mul__

    def __truediv__(self, other: Scalar) -> "Dual":
        _nonzero(other)

        if isinstance(other, Dual):
            q = self.value / other.value
            return Dual(
                q,
                ((a - q * b) / other.value for a, b in zip(self.partials, other.partials)),
            )

        return Dual(self.value / other, (d / other for d in self.partials))

    def __rtruediv__(self, other: Scalar) -> "Dual":
        _nonzero(self)
        q = other / self.value
        return Dual(q, (-q * d / self.value for d in self.partials))

    def __pow__(self, other: Scalar) -> "Dual":
        if isinstance(other, Dual):
            return exp(other * log(self))

        c = float(other)
        if c == 0.0:
            return Dual(_power(self.value, 0.0), (0.0 * d for d in self.partials))

        scale = c * _power(self.value, c - 1.0)
        return Dual(_power(self.value, c), (scale * d for d in self.partials))

    def __rpow__(self, other: Scalar) -> "Dual":
        return exp(self * log(other))


def primal(x: Scalar) -> Leaf:
    """innermost value of a (possibly nested) dual"""
    while isinstance(x, Dual):
        x = x.value
    return x


def _finite(name: str, value: Leaf) -> Leaf:
    if not np.all(np.isfinite(value)):
        raise EvaluationError(name, "non-finite result")
    return value


def _nonzero(x: Scalar) -> None:
    if np.any(np.asarray(primal(x)) == 0):
        raise EvaluationError("div", "division by zero")


def _power(x: Scalar, c: float) -> Scalar:
    if isinstance(x, Dual):
        return x**c

    base = np.asarray(x, dtype=float)
    if not float(c).is_integer() and np.any(base < 0):
        raise EvaluationError("power", "negative base with fractional exponent")
    if c < 0 and np.any(base == 0):
        raise EvaluationError("power", "zero base with negative exponent")

    with np.errstate(all="ignore"):
        out = np.power(x, c)
    return _finite("power", out)


def exp(x: Scalar) -> Scalar:
    if isinstance(x, Dual):
        e = exp(x.value)
        return Dual(e, (e * d for d in x.partials))

    with np.errstate(over="ignore"):
        return _finite("exp", np.exp(x))


def log(x: Scalar) -> Scalar:
    if isinstance(x, Dual):
        return Dual(log(x.value), (d / x.value for d in x.partials))

    if np.any(np.asarray(x) <= 0):
        raise EvaluationError("log", "non-positive argument")
    return np.log(x)


def logistic(x: Scalar) -> Scalar:
    if isinstance(x, Dual):
        s = logistic(x.value)
        slope = s * (1.0 - s)
        return Dual(s, (slope * d for d in x.partials))

    return expit(x)


def log_logistic(x: Scalar) -> Scalar:
    """log(logistic(x)) without forming logistic(x), stable at both tails"""
    if isinstance(x, Dual):
        slope = logistic(-x.value)
        return Dual(log_logistic(x.value), (slope * d for d in x.partials))

    return -np.logaddexp(0.0, -np.asarray(x, dtype=float))


def total(x: Scalar, weights: np.ndarray) -> Scalar:
    """weighted sum over the row dimension, partials summed alongside"""
    if isinstance(x, Dual):
        return Dual(total(x.value, weights), (total(d, weights) for d in x.partials))

    return float(np.dot(np.broadcast_to(x, np.shape(weights)), weights))


def log_total_exp(x: Scalar, weights: np.ndarray) -> Scalar:
    """log Σᵢ wᵢ exp(xᵢ), shifted by the largest primal entry"""
    shift = float(np.max(primal(x)))
    return log(total(exp(x - shift), weights)) + shift


def _unit(k: int, p: int) -> T.Tuple[float, ...]:
    return tuple(1.0 if j == k else 0.0 for j in range(p))


def _seed(x: T.Sequence[Leaf], order: int) -> T.List[Dual]:
    p = len(x)

    if order == 1:
        return [Dual(xi, _unit(i, p)) for i, xi in enumerate(x)]

    zeros = (0.0,) * p
    return [
        Dual(Dual(xi, _unit(i, p)), (Dual(u, zeros) for u in _unit(i, p)))
        for i, xi in enumerate(x)
    ]


def _stack(leaves: T.Sequence[Leaf], shape: tuple) -> np.ndarray:
    return np.stack([np.broadcast_to(np.asarray(e, dtype=float), shape) for e in leaves], axis=-1)


def _shape_of(*groups: T.Sequence[Leaf]) -> tuple:
    return np.broadcast_shapes(*(np.shape(e) for g in groups for e in g))


def _scalar(value: np.ndarray) -> T.Union[float, np.ndarray]:
    return float(value) if value.shape == () else value


def _first(out: Scalar, p: int, shape: tuple) -> T.Tuple[np.ndarray, np.ndarray]:
    if not isinstance(out, Dual):
        shape = np.broadcast_shapes(np.shape(out), shape)
        return np.broadcast_to(np.asarray(out, dtype=float), shape), np.zeros(shape + (p,))

    shape = np.broadcast_shapes(shape, *(np.shape(e) for e in (out.value, *out.partials)))
    value = np.broadcast_to(np.asarray(out.value, dtype=float), shape)
    return value, _stack(out.partials, shape)


def grad(f: T.Callable[[T.Sequence[Scalar]], Scalar], x: T.Sequence[Leaf]) -> T.Tuple[T.Any, np.ndarray]:
    """value and gradient of f at x

    @param f takes a sequence of p scalars (floats or per-row arrays)
    @return (value, gradient) where gradient has a trailing axis of length p
    """
    x = list(x)
    p = len(x)
    base = _shape_of(x)

    value, gradient = _first(f(_seed(x, 1)), p, base)
    return _scalar(np.array(value)), gradient


def hessian(f: T.Callable[[T.Sequence[Scalar]], Scalar], x: T.Sequence[Leaf]) -> T.Tuple[T.Any, np.ndarray, np.ndarray]:
    """value, gradient and hessian of f at x through dual-over-dual nesting

    @note the gradient slot is the inner first order pass, so it matches
          grad(f, x) exactly
    """
    x = list(x)
    p = len(x)
    base = _shape_of(x)

    out = f(_seed(x, 2))

    if not isinstance(out, Dual):
        value, gradient = _first(out, p, base)
        return _scalar(np.array(value)), gradient, np.zeros(gradient.shape + (p,))

    inner = out.value
    value, gradient = _first(inner, p, base)

    rows = [d.partials if isinstance(d, Dual) else (0.0,) * p for d in out.partials]
    shape = _shape_of([value], *rows)
    h = np.stack([_stack(r, shape) for r in rows], axis=-2)
    h = 0.5 * (h + np.swapaxes(h, -1, -2))

    value = np.broadcast_to(value, shape)
    gradient = np.broadcast_to(gradient, shape + (p,))
    return _scalar(np.array(value)), np.array(gradient), h


def jacobian(F: T.Callable[[T.Sequence[Scalar]], T.Sequence[Scalar]], x: T.Sequence[Leaf]) -> np.ndarray:
    """row i is the gradient of the i-th output of F"""
    x = list(x)
    p = len(x)
    base = _shape_of(x)

    outs = F(_seed(x, 1))
    return np.stack([_first(o, p, base)[1] for o in outs], axis=-2)
