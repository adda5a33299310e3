"""Discrete distributions on the positive integers.

Interarrival times and service times are both modelled as random variables
taking values in {1, 2, ...}.  Three kinds are supported: geometric (kept in
closed form, infinite support), deterministic, and explicit finite-support
weight vectors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

__all__ = [
    "DiscreteDist",
    "ParameterError",
    "DomainError",
    "make_geometric",
    "make_deterministic",
    "make_explicit",
    "parse_dist",
    "tail",
    "hazard",
    "pgf_eval",
    "moments",
]

TOL = 1e-12


class ParameterError(ValueError):
    """Invalid constructor or configuration parameter."""


class DomainError(ValueError):
    """Query outside the domain on which a quantity is defined."""


@dataclass(frozen=True)
class DiscreteDist:
    """Distribution of a random variable X with support in {1, 2, ...}.

    ``probs[j-1]`` is P{X = j} for the finite kinds; geometric distributions
    keep only ``param`` (the success rate) and evaluate everything lazily.
    """

    kind: str
    param: float
    probs: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.probs is not None:
            probs = np.array(self.probs, dtype=float)
            probs.setflags(write=False)
            object.__setattr__(self, "probs", probs)
            suffix = np.concatenate([np.cumsum(probs[::-1])[::-1], [0.0]])
            # suffix[n] = P{X > n}; suffix sums keep the tail exactly 0 past the support
            suffix[0] = 1.0
            suffix.setflags(write=False)
            object.__setattr__(self, "_tails", suffix)

    def __eq__(self, other):
        if not isinstance(other, DiscreteDist):
            return NotImplemented
        if self.kind != other.kind or self.param != other.param:
            return False
        if self.probs is None:
            return other.probs is None
        return other.probs is not None and np.array_equal(self.probs, other.probs)

    def __hash__(self):
        key = None if self.probs is None else self.probs.tobytes()
        return hash((self.kind, self.param, key))

    def __str__(self):
        return self.spec_string()

    def spec_string(self) -> str:
        if self.kind == "geometric":
            return f"geometric:{self.param!r}"
        if self.kind == "deterministic":
            return f"deterministic:{int(self.param)}"
        return "explicit:" + ",".join(repr(float(w)) for w in self.probs)

    @property
    def is_geometric(self) -> bool:
        return self.kind == "geometric"

    @property
    def support_max(self) -> Optional[int]:
        """Largest value with positive probability, or None if unbounded."""
        if self.kind == "geometric":
            return 1 if self.param == 1.0 else None
        nz = np.nonzero(self.probs)[0]
        return int(nz[-1]) + 1

    def pmf(self, j: int) -> float:
        if j < 1:
            return 0.0
        if self.kind == "geometric":
            r = self.param
            return (1.0 - r) ** (j - 1) * r
        return float(self.probs[j - 1]) if j <= len(self.probs) else 0.0

    def tail(self, n: int) -> float:
        """P{X > n}."""
        if n < 0:
            raise DomainError(f"tail index must be nonnegative, got {n}")
        if self.kind == "geometric":
            return (1.0 - self.param) ** n
        return float(self._tails[n]) if n < len(self._tails) else 0.0

    def cdf(self, n: int) -> float:
        return 1.0 - self.tail(n)

    def hazard(self, n: int) -> float:
        """P{X = n | X > n-1}; raises DomainError where the condition is null."""
        if n < 1:
            raise DomainError(f"hazard index must be >= 1, got {n}")
        if self.kind == "geometric":
            if self.param == 1.0 and n > 1:
                raise DomainError(f"P{{X > {n - 1}}} = 0 for geometric(1)")
            return self.param
        t = self.tail(n - 1)
        if t <= 0.0:
            raise DomainError(f"P{{X > {n - 1}}} = 0; hazard({n}) undefined")
        return min(1.0, self.pmf(n) / t)

    def pmf_array(self, T: int) -> np.ndarray:
        """pmf(0..T) as an array (entry 0 is always 0)."""
        out = np.zeros(T + 1)
        if self.kind == "geometric":
            j = np.arange(1, T + 1)
            out[1:] = (1.0 - self.param) ** (j - 1) * self.param
        else:
            k = min(T, len(self.probs))
            out[1:k + 1] = self.probs[:k]
        return out

    def tail_array(self, T: int) -> np.ndarray:
        """tail(0..T) as an array."""
        if self.kind == "geometric":
            return (1.0 - self.param) ** np.arange(T + 1)
        out = np.zeros(T + 1)
        k = min(T + 1, len(self._tails))
        out[:k] = self._tails[:k]
        return out

    def pgf(self, z: float) -> float:
        if self.kind == "geometric":
            r = self.param
            return r * z / (1.0 - (1.0 - r) * z)
        j = np.arange(1, len(self.probs) + 1)
        return float(np.dot(self.probs, z ** j))

    def pgf_derivative(self, z: float) -> float:
        """d/dz of the PGF, i.e. sum_j j P{X=j} z^(j-1)."""
        if self.kind == "geometric":
            r = self.param
            return r / (1.0 - (1.0 - r) * z) ** 2
        j = np.arange(1, len(self.probs) + 1)
        return float(np.dot(j * self.probs, z ** (j - 1)))

    def moments(self) -> tuple[float, float]:
        if self.kind == "geometric":
            r = self.param
            return 1.0 / r, (2.0 - r) / r ** 2
        j = np.arange(1, len(self.probs) + 1)
        return float(np.dot(j, self.probs)), float(np.dot(j * j, self.probs))

    @property
    def mean(self) -> float:
        return self.moments()[0]

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw ``size`` iid values as int64."""
        if self.kind == "geometric":
            return rng.geometric(self.param, size=size).astype(np.int64)
        if self.kind == "deterministic":
            return np.full(size, int(self.param), dtype=np.int64)
        cdf = np.cumsum(self.probs)
        u = rng.random(size) * cdf[-1]
        idx = np.searchsorted(cdf, u, side="right")
        return np.minimum(idx, len(self.probs) - 1).astype(np.int64) + 1


def make_geometric(rate: float) -> DiscreteDist:
    rate = float(rate)
    if not (0.0 < rate <= 1.0):
        raise ParameterError(f"geometric rate must lie in (0, 1], got {rate}")
    return DiscreteDist("geometric", rate)


def make_deterministic(period: int) -> DiscreteDist:
    if int(period) != period or period < 1:
        raise ParameterError(f"deterministic period must be a positive integer, got {period}")
    period = int(period)
    probs = np.zeros(period)
    probs[-1] = 1.0
    return DiscreteDist("deterministic", float(period), probs)


def make_explicit(weights) -> DiscreteDist:
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise ParameterError("explicit weights must be a non-empty 1-D sequence")
    if not np.all(np.isfinite(w)):
        raise ParameterError("explicit weights must be finite")
    if np.any(w < 0):
        raise ParameterError("explicit weights must be nonnegative")
    total = w.sum()
    if total <= 0:
        raise ParameterError("explicit weights must not all be zero")
    nz = np.nonzero(w)[0]
    probs = w[: nz[-1] + 1] / total
    # push rounding residue onto the last support point so the mass is exactly 1
    probs[-1] = max(0.0, 1.0 - probs[:-1].sum())
    return DiscreteDist("explicit", float(len(probs)), probs)


def parse_dist(text: str) -> DiscreteDist:
    """Parse ``geometric:<rate>``, ``deterministic:<k>`` or ``explicit:<w1,...>``."""
    kind, sep, arg = text.strip().partition(":")
    kind = kind.strip().lower()
    if not sep or not arg.strip():
        raise ParameterError(f"malformed distribution spec {text!r}")
    try:
        if kind in ("geometric", "geo"):
            return make_geometric(float(arg))
        if kind in ("deterministic", "det"):
            value = float(arg)
            if value != int(value):
                raise ParameterError(f"deterministic period must be an integer, got {arg!r}")
            return make_deterministic(int(value))
        if kind == "explicit":
            return make_explicit([float(x) for x in arg.split(",")])
    except ValueError as exc:
        if isinstance(exc, ParameterError):
            raise
        raise ParameterError(f"malformed distribution spec {text!r}: {exc}") from None
    raise ParameterError(f"unknown distribution kind {kind!r} in {text!r}")


def tail(d: DiscreteDist, n: int) -> float:
    return d.tail(n)


def hazard(d: DiscreteDist, n: int) -> float:
    return d.hazard(n)


def pgf_eval(d: DiscreteDist, z: float) -> float:
    if not (0.0 <= z <= 1.0):
        raise DomainError(f"PGF argument must lie in [0, 1], got {z}")
    return d.pgf(z)


def moments(d: DiscreteDist) -> tuple[float, float]:
    """(E[X], E[X^2])."""
    return d.moments()
