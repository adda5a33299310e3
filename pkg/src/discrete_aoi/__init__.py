"""Discrete Age of Information for bufferless status-update systems.

Exact stationary AoI distributions via truncated generating-function
arithmetic, checked against a truncated Markov chain and a slot-level
simulator.
"""

from .analytic import (
    AnalyticReport,
    AoIDistribution,
    CertificationError,
    Discipline,
    SystemSpec,
    UnsupportedAnalyticsError,
    analyze,
    components_nonpreemptive,
    components_preemptive,
    mean_nonpreemptive_ggeo,
    mean_preemptive_berg,
    mean_preemptive_ggeo,
    pgf_nonpreemptive_ggeo,
    pgf_preemptive_berg,
    pgf_preemptive_gg,
    pgf_preemptive_ggeo,
)
from .dist import (
    DiscreteDist,
    DomainError,
    ParameterError,
    hazard,
    make_deterministic,
    make_explicit,
    make_geometric,
    moments,
    parse_dist,
    pgf_eval,
    tail,
)
from .series import TruncatedSeries, reciprocal, tail_series

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
