"""Truncated formal power series in z.

Every series carries its truncation order T explicitly and binary operations
refuse to combine different orders.  Removable singularities such as
(1 - Y(z)) / (1 - z) are never formed by division; :func:`tail_series`
produces their coefficients directly.
"""

from __future__ import annotations

import numpy as np

from .dist import DiscreteDist

__all__ = [
    "TruncatedSeries",
    "OrderMismatchError",
    "SingularSeriesError",
    "add",
    "mul",
    "reciprocal",
    "tail_series",
    "pmf_series",
    "mean_and_mass",
]


class OrderMismatchError(ValueError):
    pass


class SingularSeriesError(ZeroDivisionError):
    pass


class TruncatedSeries:
    """Coefficients c[0..T] of sum_n c[n] z^n, modulo z^(T+1)."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs, order: int | None = None):
        c = np.asarray(coeffs, dtype=float)
        if c.ndim != 1:
            raise ValueError("coefficients must be one-dimensional")
        if order is not None:
            if order < 0:
                raise ValueError("order must be nonnegative")
            if c.size > order + 1:
                c = c[: order + 1]
            elif c.size < order + 1:
                c = np.concatenate([c, np.zeros(order + 1 - c.size)])
        c = c.copy()
        c.setflags(write=False)
        self.coeffs = c

    @property
    def order(self) -> int:
        return self.coeffs.size - 1

    @classmethod
    def zero(cls, order: int) -> "TruncatedSeries":
        return cls(np.zeros(order + 1))

    @classmethod
    def one(cls, order: int) -> "TruncatedSeries":
        c = np.zeros(order + 1)
        c[0] = 1.0
        return cls(c)

    @classmethod
    def monomial(cls, power: int, order: int, coef: float = 1.0) -> "TruncatedSeries":
        c = np.zeros(order + 1)
        if power <= order:
            c[power] = coef
        return cls(c)

    def __repr__(self):
        head = np.array2string(self.coeffs[:6], precision=6)
        return f"TruncatedSeries(order={self.order}, coeffs={head}{'...' if self.order > 5 else ''})"

    def __len__(self):
        return self.coeffs.size

    def __getitem__(self, n):
        return self.coeffs[n]

    def _check(self, other: "TruncatedSeries"):
        if not isinstance(other, TruncatedSeries):
            raise TypeError(f"expected TruncatedSeries, got {type(other).__name__}")
        if other.order != self.order:
            raise OrderMismatchError(f"order mismatch: {self.order} vs {other.order}")

    def __add__(self, other):
        if isinstance(other, (int, float)):
            c = self.coeffs.copy()
            c[0] += other
            return TruncatedSeries(c)
        self._check(other)
        return TruncatedSeries(self.coeffs + other.coeffs)

    __radd__ = __add__

    def __neg__(self):
        return TruncatedSeries(-self.coeffs)

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            return self + (-other)
        self._check(other)
        return TruncatedSeries(self.coeffs - other.coeffs)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, float, np.floating)):
            return TruncatedSeries(self.coeffs * float(other))
        self._check(other)
        return TruncatedSeries(np.convolve(self.coeffs, other.coeffs)[: self.order + 1])

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        if not isinstance(scalar, (int, float, np.floating)):
            raise TypeError("series division only by scalars; use reciprocal()")
        return TruncatedSeries(self.coeffs / float(scalar))

    def shift(self, k: int = 1) -> "TruncatedSeries":
        """Multiply by z^k."""
        c = np.zeros_like(self.coeffs)
        if k <= self.order:
            c[k:] = self.coeffs[: self.order + 1 - k]
        return TruncatedSeries(c)

    def scale_argument(self, s: float) -> "TruncatedSeries":
        """Coefficients of f(s z)."""
        return TruncatedSeries(self.coeffs * s ** np.arange(self.order + 1))

    def truncate(self, order: int) -> "TruncatedSeries":
        if order > self.order:
            raise OrderMismatchError("cannot raise the order of a truncated series")
        return TruncatedSeries(self.coeffs[: order + 1])

    def at_one(self) -> float:
        return float(self.coeffs.sum())

    def allclose(self, other: "TruncatedSeries", atol: float = 1e-12) -> bool:
        self._check(other)
        return bool(np.max(np.abs(self.coeffs - other.coeffs)) <= atol)


def add(a: TruncatedSeries, b: TruncatedSeries) -> TruncatedSeries:
    return a + b


def mul(a: TruncatedSeries, b: TruncatedSeries) -> TruncatedSeries:
    """Cauchy product truncated at the common order."""
    return a * b


def reciprocal(a: TruncatedSeries) -> TruncatedSeries:
    """Series b with a*b = 1 + O(z^(T+1)), by forward substitution."""
    c = a.coeffs
    if abs(c[0]) <= 1e-12:
        raise SingularSeriesError("series with vanishing constant term has no reciprocal")
    T = a.order
    b = np.zeros(T + 1)
    b[0] = 1.0 / c[0]
    for n in range(1, T + 1):
        # sum_{k=1..n} a_k b_{n-k}
        b[n] = -np.dot(c[1 : n + 1], b[n - 1 :: -1]) / c[0]
    return TruncatedSeries(b)


def tail_series(d: DiscreteDist, shift: int, scale: float, T: int) -> TruncatedSeries:
    """sum_{n>=1} scale^n P{X > n - shift} z^n.

    shift=1 gives z (1 - X(sz)) / (1 - sz); shift=0 gives the same quotient
    minus its constant term 1.
    """
    if shift not in (0, 1):
        raise ValueError("shift must be 0 or 1")
    if T < 1:
        raise ValueError("order must be at least 1")
    tails = d.tail_array(T)
    c = np.zeros(T + 1)
    n = np.arange(1, T + 1)
    c[1:] = tails[n - shift] * float(scale) ** n
    return TruncatedSeries(c)


def pmf_series(d: DiscreteDist, scale: float, T: int) -> TruncatedSeries:
    """Coefficients of X(scale * z) = sum_n scale^n P{X=n} z^n."""
    p = d.pmf_array(T)
    return TruncatedSeries(p * float(scale) ** np.arange(T + 1))


def mean_and_mass(a: TruncatedSeries) -> tuple[float, float]:
    """(captured mass, truncated first moment) of a probability series."""
    c = a.coeffs
    return float(c.sum()), float(np.dot(np.arange(c.size), c))
