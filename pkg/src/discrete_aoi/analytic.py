"""Closed-form AoI generating functions and average-AoI formulas.

The generating functions are evaluated as truncated power series, so each
coefficient is an exact (up to rounding) stationary probability
Pr{AoI = n}.  Means come from two independent routes: closed-form moment
formulas for the geometric special cases, and the series coefficients with
a certified tail bracket (:func:`certified_mean`).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .dist import DiscreteDist, DomainError, ParameterError, make_geometric
from .series import (
    TruncatedSeries,
    mean_and_mass,
    pmf_series,
    reciprocal,
    tail_series,
)

__all__ = [
    "Discipline",
    "SystemSpec",
    "AoIDistribution",
    "CertificationError",
    "UnsupportedAnalyticsError",
    "components_preemptive",
    "pgf_preemptive_gg",
    "pgf_preemptive_berg",
    "mean_preemptive_berg",
    "pgf_preemptive_ggeo",
    "mean_preemptive_ggeo",
    "components_nonpreemptive",
    "pgf_nonpreemptive_ggeo",
    "mean_nonpreemptive_ggeo",
    "certified_mean",
    "analyze",
    "AnalyticReport",
]


class CertificationError(RuntimeError):
    """The series tail could not be bounded by a geometric envelope."""


class UnsupportedAnalyticsError(ValueError):
    """No closed form exists for the requested system."""


class Discipline(str, enum.Enum):
    PREEMPTIVE = "preemptive"
    NON_PREEMPTIVE = "nonpreemptive"

    @classmethod
    def parse(cls, text: str) -> "Discipline":
        key = text.strip().lower().replace("-", "").replace("_", "")
        for member in cls:
            if member.value == key:
                return member
        raise ParameterError(f"unknown discipline {text!r}")


@dataclass(frozen=True)
class SystemSpec:
    discipline: Discipline
    interarrival: DiscreteDist
    service: DiscreteDist

    def __post_init__(self):
        if not isinstance(self.discipline, Discipline):
            object.__setattr__(self, "discipline", Discipline.parse(str(self.discipline)))

    @property
    def gamma(self) -> Optional[float]:
        return self.service.param if self.service.is_geometric else None


@dataclass
class AoIDistribution:
    """Truncated stationary AoI pmf; ``pmf[0]`` is always 0."""

    pmf: np.ndarray
    captured_mass: float
    mean: float
    tail_bound: float
    certified: bool = False
    mean_bracket: tuple[float, float] = (float("nan"), float("nan"))
    source: str = ""

    @property
    def order(self) -> int:
        return self.pmf.size - 1

    def prob(self, n: int) -> float:
        return float(self.pmf[n]) if 0 <= n < self.pmf.size else 0.0


class PreemptiveComponents(NamedTuple):
    h1: TruncatedSeries
    h2: TruncatedSeries


class NonPreemptiveComponents(NamedTuple):
    h1: TruncatedSeries  # idle, fresh generation this slot
    h2: TruncatedSeries  # busy, fresh generation this slot
    h3: TruncatedSeries  # idle, no generation this slot
    h4: TruncatedSeries  # busy, no generation this slot
    h2m: TruncatedSeries  # busy with fresh generation, indexed by packet age


def _check_order(T: int, minimum: int = 2):
    if int(T) != T or T < minimum:
        raise ParameterError(f"series order must be an integer >= {minimum}, got {T}")


def _check_rate(name: str, value: float, allow_one: bool = True):
    hi_ok = value <= 1.0 if allow_one else value < 1.0
    if not (0.0 < value and hi_ok):
        interval = "(0, 1]" if allow_one else "(0, 1)"
        raise DomainError(f"{name} must lie in {interval}, got {value}")


def certified_mean(a: AoIDistribution, decay: float, window: int = 10) -> tuple[float, float]:
    """Bracket the mean of a truncated pmf whose tail decays geometrically.

    The last ``window`` coefficient ratios must either stay below ``decay``
    (plus 1e-6) or be non-increasing and below 1; in the latter case the
    largest observed ratio replaces ``decay``.  Past the truncation point the
    pmf is then dominated by pmf[T] * rate^(n-T).
    """
    pmf = np.clip(np.asarray(a.pmf, dtype=float), 0.0, None)
    T = pmf.size - 1
    n = np.arange(pmf.size)
    lower = float(np.dot(n, pmf))
    rate = _envelope_rate(pmf, decay, window)
    if pmf[T] == 0.0:
        return lower, lower
    resid = pmf[T] * rate / (1.0 - rate)
    return lower, lower + resid * (T + 1.0 / (1.0 - rate))


def _envelope_rate(pmf: np.ndarray, decay: float, window: int) -> float:
    tail = pmf[max(1, pmf.size - window - 1):]  # pmf[0] is structurally zero
    if np.all(tail <= 1e-300):
        return 0.0
    ratios = []
    for prev, nxt in zip(tail[:-1], tail[1:]):
        if prev <= 1e-300:
            if nxt > 1e-300:
                raise CertificationError("tail coefficients grow from zero")
            continue
        ratios.append(nxt / prev)
    ratios = np.array(ratios)
    if ratios.size == 0:
        return 0.0
    top = float(ratios.max())
    if top <= decay + 1e-6:
        rate = max(decay, top)
    elif np.all(np.diff(ratios) <= 1e-12):
        rate = top
    else:
        raise CertificationError(
            f"last coefficient ratios {ratios.min():.6g}..{top:.6g} exceed decay {decay:.6g}"
        )
    if rate >= 1.0:
        raise CertificationError(f"envelope rate {rate:.6g} is not below 1")
    return rate


def _distribution(series: TruncatedSeries, decay: float, source: str) -> AoIDistribution:
    raw = series.coeffs
    pmf = np.where(raw < 0.0, 0.0, raw)
    pmf[0] = 0.0
    mass, lower = mean_and_mass(TruncatedSeries(pmf))
    out = AoIDistribution(pmf=pmf, captured_mass=mass, mean=lower,
                          tail_bound=max(0.0, 1.0 - mass), source=source)
    try:
        lo, hi = certified_mean(out, decay)
    except CertificationError:
        out.mean_bracket = (lower, float("inf"))
        return out
    rate = _envelope_rate(np.clip(pmf, 0.0, None), decay, 10)
    out.tail_bound = float(pmf[-1] * rate / (1.0 - rate)) if rate > 0 else 0.0
    out.mean_bracket = (lo, hi)
    out.mean = 0.5 * (lo + hi)
    out.certified = True
    return out


def _geometric_decay(*dists: DiscreteDist) -> float:
    rates = [1.0 - d.param for d in dists if d.is_geometric]
    return max(rates, default=0.0)


# -- preemptive, general interarrival and service ---------------------------

def _preemptive_sums(Y: DiscreteDist, S: DiscreteDist, T: int):
    n = np.arange(1, T + 1)
    y_surv = Y.tail_array(T)[n - 1]  # P{Y > n-1}
    y_pmf = Y.pmf_array(T)[n]
    s_tail = S.tail_array(T)[n]  # P{S > n}
    s_cdf = 1.0 - s_tail

    def series(v):
        c = np.zeros(T + 1)
        c[1:] = v
        return TruncatedSeries(c)

    return (series(y_surv * s_cdf), series(y_surv * s_tail),
            series(y_pmf * s_cdf), series(y_pmf * s_tail))


def components_preemptive(Y: DiscreteDist, S: DiscreteDist, T: int) -> PreemptiveComponents:
    """Idle-state (h1) and busy-state (h2) parts of the preemptive AoI PGF."""
    _check_order(T)
    ey = Y.mean
    survive_done, survive_busy, arrive_done, arrive_busy = _preemptive_sums(Y, S, T)
    h1 = survive_done / ey
    h2 = (survive_busy * arrive_done) * reciprocal(1.0 - arrive_busy) / ey
    return PreemptiveComponents(h1, h2)


def pgf_preemptive_gg(Y: DiscreteDist, S: DiscreteDist, T: int) -> AoIDistribution:
    h1, h2 = components_preemptive(Y, S, T)
    return _distribution(h1 + h2, _geometric_decay(Y, S), "gg-preemptive")


def pgf_preemptive_berg(p: float, S: DiscreteDist, T: int) -> AoIDistribution:
    """Bernoulli(p) generation, general service, preemptive."""
    _check_rate("p", p)
    _check_order(T)
    if p == 1.0:
        return pgf_preemptive_gg(make_geometric(1.0), S, T)
    q = 1.0 - p
    s_scaled = pmf_series(S, q, T)
    one_minus_z = TruncatedSeries.one(T) - TruncatedSeries.monomial(1, T)
    denom = one_minus_z * q + s_scaled * p
    series = (s_scaled * p) * reciprocal(denom)
    return _distribution(series, _geometric_decay(make_geometric(p), S), "bernoulli-preemptive")


def mean_preemptive_berg(p: float, S: DiscreteDist) -> float:
    _check_rate("p", p, allow_one=False)
    s_val = S.pgf(1.0 - p)
    if s_val <= 0.0:
        raise DomainError("service PGF vanishes at 1 - p")
    return (1.0 - p) / (p * s_val)


def pgf_preemptive_ggeo(Y: DiscreteDist, gamma: float, T: int) -> AoIDistribution:
    """General generation, geometric(gamma) service, preemptive."""
    _check_rate("gamma", gamma)
    _check_order(T)
    q = 1.0 - gamma
    # gamma z (1 - Y(z)) / (1 - z) = gamma * sum_n z^n P{Y > n-1}
    numer = tail_series(Y, 1, 1.0, T) * gamma
    geo = reciprocal(TruncatedSeries.one(T) - TruncatedSeries.monomial(1, T, q))
    series = numer * geo / Y.mean
    return _distribution(series, max(q, _geometric_decay(Y)), "ggeo-preemptive")


def mean_preemptive_ggeo(Y: DiscreteDist, gamma: float) -> float:
    _check_rate("gamma", gamma)
    ey, ey2 = Y.moments()
    return (1.0 - gamma) / gamma + (ey + ey2) / (2.0 * ey)


# -- non-preemptive, general interarrival, geometric service ----------------

def _nonpreemptive_common(Y: DiscreteDist, gamma: float, T: int):
    _check_rate("gamma", gamma, allow_one=False)
    _check_order(T)
    q = 1.0 - gamma
    y_at_q = Y.pgf(q)
    if 1.0 - y_at_q <= 0.0:
        raise DomainError("1 - Y(1 - gamma) vanishes")
    y_scaled = pmf_series(Y, q, T)  # Y[(1-gamma) z]
    inv = reciprocal(1.0 - y_scaled)
    return q, y_at_q, y_scaled, inv


def components_nonpreemptive(Y: DiscreteDist, gamma: float, T: int) -> NonPreemptiveComponents:
    """The four state-group generating functions plus the age-indexed helper.

    Groups: h1 idle with y=0, h2 busy with y=0, h3 idle with y>=1, h4 busy
    with y>=1, where y counts slots since the latest generation.
    """
    q, y_at_q, y_scaled, inv = _nonpreemptive_common(Y, gamma, T)
    base = (1.0 - y_at_q) / Y.mean
    z_inv = inv.shift(1)
    h1 = z_inv * (base * gamma)
    h2m = z_inv * (base * q)
    y_plain = pmf_series(Y, 1.0, T)
    h2 = inv * ((y_plain * h1) * q + (y_plain * q - y_scaled) * h2m)
    surv = tail_series(Y, 0, 1.0, T)  # (z - Y(z)) / (1 - z)
    surv_q = tail_series(Y, 0, q, T)  # ((1-g)z - Y[(1-g)z]) / (1 - (1-g)z)
    h3 = surv * h1 + (surv - surv_q) * h2m
    h4 = surv_q * h2
    return NonPreemptiveComponents(h1, h2, h3, h4, h2m)


def pgf_nonpreemptive_ggeo(Y: DiscreteDist, gamma: float, T: int) -> AoIDistribution:
    q, y_at_q, _, inv = _nonpreemptive_common(Y, gamma, T)
    prefactor = (1.0 - y_at_q) * gamma / Y.mean
    # z (1 - Y(z)) / (1 - z) = sum_n z^n P{Y > n-1}
    tails = tail_series(Y, 1, 1.0, T)
    geo = reciprocal(TruncatedSeries.one(T) - TruncatedSeries.monomial(1, T, q))
    series = tails * inv * geo * prefactor
    return _distribution(series, max(q, _geometric_decay(Y)), "ggeo-nonpreemptive")


def mean_nonpreemptive_ggeo(Y: DiscreteDist, gamma: float) -> float:
    _check_rate("gamma", gamma, allow_one=False)
    q = 1.0 - gamma
    y_at_q = Y.pgf(q)
    ey, ey2 = Y.moments()
    return q * Y.pgf_derivative(q) / (1.0 - y_at_q) + 1.0 / gamma + (ey2 - ey) / (2.0 * ey)


# -- dispatch ---------------------------------------------------------------

@dataclass
class AnalyticReport:
    distribution: AoIDistribution
    formula: str
    closed_form_mean: Optional[float] = None
    mean_formula: str = ""
    extras: dict = field(default_factory=dict)

    @property
    def mean_gap(self) -> Optional[float]:
        if self.closed_form_mean is None:
            return None
        return abs(self.distribution.mean - self.closed_form_mean)


def analyze(spec: SystemSpec, T: int) -> AnalyticReport:
    """Pick the closed form that applies to ``spec`` and evaluate it."""
    Y, S = spec.interarrival, spec.service
    if spec.discipline is Discipline.PREEMPTIVE:
        if S.is_geometric:
            dist = pgf_preemptive_ggeo(Y, S.param, T)
            return AnalyticReport(dist, dist.source, mean_preemptive_ggeo(Y, S.param), "ggeo-preemptive")
        if Y.is_geometric and Y.param < 1.0:
            dist = pgf_preemptive_berg(Y.param, S, T)
            return AnalyticReport(dist, dist.source, mean_preemptive_berg(Y.param, S), "bernoulli-preemptive")
        dist = pgf_preemptive_gg(Y, S, T)
        return AnalyticReport(dist, dist.source)
    if not S.is_geometric:
        raise UnsupportedAnalyticsError(
            "non-preemptive analytics require geometric service; use the simulator (`sim`) instead"
        )
    gamma = S.param
    if gamma >= 1.0:
        raise UnsupportedAnalyticsError(
            "non-preemptive analytics exclude gamma = 1; use the chain oracle (`chain`) instead"
        )
    dist = pgf_nonpreemptive_ggeo(Y, gamma, T)
    return AnalyticReport(dist, dist.source, mean_nonpreemptive_ggeo(Y, gamma), "ggeo-nonpreemptive")
