"""
Nested dual numbers for exact derivative jets.

A Dual holds ``real + eps * d`` where ``eps**2 == 0``. The real and eps parts
may themselves be Duals, so nesting n levels gives derivatives up to order n.
Parts are floats or numpy arrays: the eps part of a seeded variable is a
one-hot direction array and products broadcast into derivative tensors.
"""
import math
from typing import Any, Callable, Union

import numpy as np

from core.errors import FieldDomainError

Number = Union[float, np.ndarray, "Dual"]


class Dual:
    """First-order dual number with possibly nested parts."""

    __slots__ = ("real", "eps")
    __array_ufunc__ = None  # keep numpy from broadcasting over Dual operands

    def __init__(self, real: Any, eps: Any):
        self.real = real
        self.eps = eps

    def __repr__(self) -> str:
        return f"Dual({self.real!r}, {self.eps!r})"

    def __add__(self, other: Number) -> "Dual":
        if isinstance(other, Dual):
            return Dual(self.real + other.real, self.eps + other.eps)
        return Dual(self.real + other, self.eps)

    __radd__ = __add__

    def __sub__(self, other: Number) -> "Dual":
        if isinstance(other, Dual):
            return Dual(self.real - other.real, self.eps - other.eps)
        return Dual(self.real - other, self.eps)

    def __rsub__(self, other: Number) -> "Dual":
        return Dual(other - self.real, -self.eps)

    def __mul__(self, other: Number) -> "Dual":
        if isinstance(other, Dual):
            return Dual(self.real * other.real,
                        self.real * other.eps + self.eps * other.real)
        return Dual(self.real * other, self.eps * other)

    __rmul__ = __mul__

    def __neg__(self) -> "Dual":
        return Dual(-self.real, -self.eps)

    def __truediv__(self, other: Number) -> "Dual":
        return self * reciprocal(other)

    def __rtruediv__(self, other: Number) -> Number:
        return other * reciprocal(self)

    def __pow__(self, exponent: Number) -> Number:
        return power(self, exponent)

    def __rpow__(self, base: Number) -> Number:
        return power(base, self)


def innermost(x: Number) -> float:
    """Plain value at the bottom of the nesting."""
    while isinstance(x, Dual):
        x = x.real
    return x


def reciprocal(x: Number) -> Number:
    if isinstance(x, Dual):
        inv = reciprocal(x.real)
        return Dual(inv, -x.eps * inv * inv)
    if x == 0:
        raise FieldDomainError("division by zero")
    return 1.0 / x


def _is_integer(value: float) -> bool:
    return float(value).is_integer()


def power(base: Number, exponent: Number) -> Number:
    """base ** exponent on plain or dual operands."""
    if isinstance(exponent, Dual):
        if innermost(base) <= 0:
            raise FieldDomainError("variable exponent needs a positive base")
        return exp(exponent * log(base))
    c = float(exponent)
    if not isinstance(base, Dual):
        if base == 0 and c < 0:
            raise FieldDomainError("zero raised to a negative power")
        if base < 0 and not _is_integer(c):
            raise FieldDomainError("negative base with fractional exponent")
        try:
            return math.pow(base, c)
        except OverflowError as exc:
            raise FieldDomainError(f"overflow in power: {exc}") from exc
    if c == 0.0:
        return 1.0
    b = innermost(base)
    if not _is_integer(c) and b <= 0:
        raise FieldDomainError("non-positive base with fractional exponent")
    if b == 0 and c < 1:
        raise FieldDomainError("derivative of power undefined at zero")
    return Dual(power(base.real, c), c * power(base.real, c - 1.0) * base.eps)


def _lift(plain: Callable[[float], float], slope: Callable[[Number], Number]) -> Callable[[Number], Number]:
    """Extend a scalar function to duals given its derivative."""

    def fn(x: Number) -> Number:
        if isinstance(x, Dual):
            return Dual(fn(x.real), slope(x.real) * x.eps)
        try:
            return plain(x)
        except (ValueError, ZeroDivisionError, OverflowError) as exc:
            raise FieldDomainError(f"{plain.__name__}({x!r}) undefined: {exc}") from exc

    fn.__name__ = plain.__name__
    return fn


def _sin_slope(x: Number) -> Number:
    return cos(x)


def _cos_slope(x: Number) -> Number:
    return -sin(x)


def _tan_slope(x: Number) -> Number:
    c = cos(x)
    return reciprocal(c * c)


def _exp_slope(x: Number) -> Number:
    return exp(x)


def _log_slope(x: Number) -> Number:
    return reciprocal(x)


def _plain_log(x: float) -> float:
    if x <= 0:
        raise ValueError("log of non-positive value")
    return math.log(x)


def _plain_sqrt(x: float) -> float:
    if x < 0:
        raise ValueError("sqrt of negative value")
    return math.sqrt(x)


def _plain_tan(x: float) -> float:
    if math.cos(x) == 0.0:
        raise ValueError("tan at a pole")
    return math.tan(x)


_plain_log.__name__ = "log"
_plain_sqrt.__name__ = "sqrt"
_plain_tan.__name__ = "tan"

sin = _lift(math.sin, _sin_slope)
cos = _lift(math.cos, _cos_slope)
tan = _lift(_plain_tan, _tan_slope)
exp = _lift(math.exp, _exp_slope)
log = _lift(_plain_log, _log_slope)


def sqrt(x: Number) -> Number:
    if isinstance(x, Dual):
        if innermost(x) <= 0:
            raise FieldDomainError("derivative of sqrt undefined at non-positive value")
        root = sqrt(x.real)
        return Dual(root, 0.5 * reciprocal(root) * x.eps)
    try:
        return _plain_sqrt(x)
    except ValueError as exc:
        raise FieldDomainError(str(exc)) from exc


def absolute(x: Number) -> Number:
    if isinstance(x, Dual):
        v = innermost(x)
        if v == 0:
            raise FieldDomainError("abs is not differentiable at zero")
        return x if v > 0 else -x
    return abs(x)


def atan2(y: Number, x: Number) -> Number:
    if not isinstance(y, Dual) and not isinstance(x, Dual):
        if x == 0 and y == 0:
            raise FieldDomainError("atan2(0, 0) undefined")
        return math.atan2(y, x)
    yr = y.real if isinstance(y, Dual) else y
    xr = x.real if isinstance(x, Dual) else x
    ye = y.eps if isinstance(y, Dual) else 0.0
    xe = x.eps if isinstance(x, Dual) else 0.0
    denom = reciprocal(xr * xr + yr * yr)
    return Dual(atan2(yr, xr), (xr * ye - yr * xe) * denom)


FUNCTIONS = {
    "sin": sin,
    "cos": cos,
    "tan": tan,
    "exp": exp,
    "log": log,
    "sqrt": sqrt,
    "abs": absolute,
    "atan2": atan2,
}


def seed_variables(point, order: int) -> list:
    """
    Lift the coordinates of `point` to nested duals of depth `order`.

    Level l carries the one-hot direction e_i shaped (3,) + (1,) * l, so the
    k-th derivative comes out as a (3,) * k tensor.
    """
    seeded = []
    for i in range(3):
        value: Any = float(point[i])
        for level in range(order):
            direction = np.zeros((3,) + (1,) * level)
            direction[(i,) + (0,) * level] = 1.0
            tangent: Any = direction
            for _ in range(level):
                tangent = Dual(tangent, 0.0)
            value = Dual(value, tangent)
        seeded.append(value)
    return seeded


def taylor_part(value: Number, k: int, order: int) -> np.ndarray:
    """k-th derivative tensor of a result computed from `seed_variables(.., order)`."""
    node: Any = value
    for _ in range(order - k):
        node = node.real if isinstance(node, Dual) else node
    for _ in range(k):
        node = node.eps if isinstance(node, Dual) else 0.0
    if isinstance(node, Dual):
        node = innermost(node)
    return np.broadcast_to(np.asarray(node, dtype=float), (3,) * k).copy()


def _split(a: Any):
    if isinstance(a, Dual):
        return a.real, a.eps
    return a, None


def bilinear(op: Callable[[Any, Any], Any]) -> Callable[[Any, Any], Any]:
    """Extend a bilinear array operation to first-order duals by the product rule."""

    def fn(a: Any, b: Any) -> Any:
        ar, ae = _split(a)
        br, be = _split(b)
        if ae is None and be is None:
            return op(ar, br)
        terms = []
        if be is not None:
            terms.append(fn(ar, be))
        if ae is not None:
            terms.append(fn(ae, br))
        tangent = terms[0] if len(terms) == 1 else terms[0] + terms[1]
        return Dual(fn(ar, br), tangent)

    return fn


def linear(op: Callable[[Any], Any]) -> Callable[[Any], Any]:
    """Extend a linear array operation to duals."""

    def fn(a: Any) -> Any:
        if isinstance(a, Dual):
            return Dual(fn(a.real), fn(a.eps))
        return op(a)

    return fn


dot = bilinear(lambda a, b: float(np.dot(a, b)))
cross = bilinear(np.cross)
matvec = bilinear(lambda m, v: np.asarray(m) @ np.asarray(v))
sym = linear(lambda m: 0.5 * (np.asarray(m) + np.asarray(m).T))


def tangent_of(value: Any) -> Any:
    """eps part of a first-order dual, zero for plain values."""
    if isinstance(value, Dual):
        return value.eps
    return np.zeros_like(np.asarray(value, dtype=float))
