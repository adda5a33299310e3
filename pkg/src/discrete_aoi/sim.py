"""Slot-level Monte Carlo simulation of a bufferless status-update link.

Within a slot, packet generation is decided at the start and service
completion at the end.  A generated packet enters service immediately if
the server is idle (or always, under preemption) and its service requirement
counts the generation slot, so a requirement of 1 completes in that slot.
On delivery the AoI drops to the packet's age; otherwise it grows by one.

Random streams: numpy ``PCG64`` seeded with
``SeedSequence(entropy=seed, spawn_key=(replication,))``.  Interarrival
times are drawn first (in fixed-size chunks), then one service requirement
per generated packet.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass, field

import numpy as np

from .analytic import Discipline, SystemSpec
from .dist import DiscreteDist, ParameterError

__all__ = [
    "SimConfig",
    "SimResult",
    "simulate",
    "state_trace_check",
    "trace",
    "table_successors",
    "RNG_ALGORITHM",
]

RNG_ALGORITHM = "numpy.PCG64 via SeedSequence(entropy=seed, spawn_key=(replication,))"


@dataclass(frozen=True)
class SimConfig:
    spec: SystemSpec
    slots: int
    warmup: int = 10_000
    seed: int = 0
    replications: int = 1

    def __post_init__(self):
        if self.slots < 1:
            raise ParameterError("slots must be positive")
        if not (0 <= self.warmup < self.slots):
            raise ParameterError("warmup must satisfy 0 <= warmup < slots")
        if self.replications < 1:
            raise ParameterError("replications must be >= 1")


@dataclass
class SimResult:
    pmf: np.ndarray
    counts: np.ndarray
    rep_means: np.ndarray
    mean: float
    stderr: float
    metadata: dict = field(default_factory=dict)


def _rng(seed: int, replication: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed) % 2**64, spawn_key=(int(replication),))
    return np.random.Generator(np.random.PCG64(ss))


def _draws(rng: np.random.Generator, spec: SystemSpec, horizon: int):
    """Generation slots (starting at slot 0, past the horizon) and service requirements."""
    Y = spec.interarrival
    chunk = int(horizon / Y.mean * 1.05) + 64
    parts = []
    total = 0
    while True:
        gaps = Y.sample(rng, chunk)
        parts.append(gaps)
        total += int(gaps.sum())
        if total >= horizon:
            break
    gaps = np.concatenate(parts)
    gen = np.concatenate([[0], np.cumsum(gaps)])
    gen = gen[: int(np.searchsorted(gen, horizon, side="left")) + 1]
    services = spec.service.sample(rng, gen.size)
    return gen, services


def _deliveries(discipline: Discipline, gen: np.ndarray, services: np.ndarray):
    """(delivery slot, generation slot) of each delivered packet, in time order."""
    done = gen + services - 1
    if discipline is Discipline.PREEMPTIVE:
        ok = np.ones(gen.size, dtype=bool)
        ok[:-1] = services[:-1] <= np.diff(gen)
        return done[ok], gen[ok]
    # arrivals while busy are dropped: the next accepted packet is the first
    # generated after the current one completes
    gen_l, done_l = gen.tolist(), done.tolist()
    picked = []
    k, size = 0, len(gen_l)
    while k < size:
        picked.append(k)
        k = bisect_right(gen_l, done_l[k], k + 1)
    picked = np.asarray(picked, dtype=np.int64)
    return done[picked], gen[picked]


def _aoi_path(discipline: Discipline, gen, services, start: int, stop: int) -> np.ndarray:
    """Slot-end AoI for slots start..stop-1; AoI is 1 at the end of slot -1."""
    d, g = _deliveries(discipline, gen, services)
    t = np.arange(start, stop, dtype=np.int64)
    idx = np.searchsorted(d, t, side="right") - 1
    origin = np.where(idx >= 0, g[np.maximum(idx, 0)], -1)
    return t - origin + 1


def simulate(config: SimConfig) -> SimResult:
    spec = config.spec
    counts = np.zeros(1, dtype=np.int64)
    means = np.empty(config.replications)
    batch_means = None
    for r in range(config.replications):
        rng = _rng(config.seed, r)
        gen, services = _draws(rng, spec, config.slots)
        aoi = _aoi_path(spec.discipline, gen, services, config.warmup, config.slots)
        c = np.bincount(aoi)
        if c.size > counts.size:
            counts = np.concatenate([counts, np.zeros(c.size - counts.size, dtype=np.int64)])
        counts[: c.size] += c
        means[r] = aoi.mean()
        if config.replications == 1:
            batches = np.array_split(aoi, 10)
            batch_means = np.array([b.mean() for b in batches if b.size])
    pmf = counts / counts.sum()
    if config.replications > 1:
        stderr = float(means.std(ddof=1) / np.sqrt(config.replications))
    elif batch_means is not None and batch_means.size > 1:
        stderr = float(batch_means.std(ddof=1) / np.sqrt(batch_means.size))
    else:
        stderr = 0.0
    n = np.arange(pmf.size)
    meta = {
        "rng": RNG_ALGORITHM,
        "seed": int(config.seed),
        "replications": int(config.replications),
        "slots": int(config.slots),
        "warmup": int(config.warmup),
        "discipline": spec.discipline.value,
        "Y": spec.interarrival.spec_string(),
        "S": spec.service.spec_string(),
    }
    return SimResult(pmf=pmf, counts=counts, rep_means=means,
                     mean=float(np.dot(n, pmf)), stderr=stderr, metadata=meta)


# -- slot-by-slot tracing against the transition tables ---------------------

@dataclass
class Trace:
    states: list
    aoi: np.ndarray
    arrivals: np.ndarray
    deliveries: np.ndarray
    delivered_age: np.ndarray
    inconsistencies: int


def trace(config: SimConfig, horizon: int, replication: int = 0) -> Trace:
    """Step the system one slot at a time and record the full state vector.

    Uses the same random draws as :func:`simulate` for ``replication``, so
    the AoI path must coincide with the vectorised one.
    """
    spec = config.spec
    preemptive = spec.discipline is Discipline.PREEMPTIVE
    gen, services = _draws(_rng(config.seed, replication), spec, horizon)
    aoi = 1
    busy = False
    elapsed = req = 0
    since = 0  # age of the latest generated packet at slot end
    k = 0
    states, aois = [], np.empty(horizon, dtype=np.int64)
    arr = np.zeros(horizon, dtype=bool)
    dlv = np.zeros(horizon, dtype=bool)
    dage = np.zeros(horizon, dtype=np.int64)
    bad = 0
    for t in range(horizon):
        a = k < gen.size and gen[k] == t
        if a:
            if preemptive or not busy:
                busy, elapsed, req = True, 0, int(services[k])
            since = 0
            k += 1
        since += 1
        b = False
        if busy:
            elapsed += 1
            if elapsed == req:
                b, busy = True, False
                aoi = elapsed
                dage[t] = elapsed
        if not b:
            aoi += 1
        m = elapsed if busy else 0
        if preemptive:
            states.append((aoi, m))
            if (busy and since != m) or (not busy and since != aoi):
                bad += 1
        else:
            states.append((aoi, m, since - 1))
        arr[t], dlv[t], aois[t] = a, b, aoi
    return Trace(states, aois, arr, dlv, dage, bad)


def _cond(d: DiscreteDist, k: int):
    """(P{X > k | X > k-1}, P{X = k | X > k-1}), both 0 if the condition is null."""
    prev = d.tail(k - 1)
    if prev <= 0.0:
        return 0.0, 0.0
    return d.tail(k) / prev, d.pmf(k) / prev


def table_successors(spec: SystemSpec, state: tuple) -> dict:
    """Map (A, B) to (next state, probability) for the one-slot transitions.

    A marks a generation in the slot, B a delivery.  Service hazards are
    general, so the non-preemptive rows also cover non-geometric service.
    """
    Y, S = spec.interarrival, spec.service
    s_busy, s_done = S.tail(1), S.pmf(1)
    out = {}
    if spec.discipline is Discipline.PREEMPTIVE:
        n, m = state
        if m >= 1:
            y_stay, y_gen = _cond(Y, m)
            s_cont, s_fin = _cond(S, m + 1)
            out[(0, 0)] = ((n + 1, m + 1), y_stay * s_cont)
            out[(0, 1)] = ((m + 1, 0), y_stay * s_fin)
        else:
            y_stay, y_gen = _cond(Y, n)
            out[(0, 0)] = ((n + 1, 0), y_stay)
        out[(1, 0)] = ((n + 1, 1), y_gen * s_busy)
        out[(1, 1)] = ((1, 0), y_gen * s_done)
        return out
    n, m, y = state
    y_stay, y_gen = _cond(Y, y + 1)
    if m >= 1:
        s_cont, s_fin = _cond(S, m + 1)
        out[(0, 0)] = ((n + 1, m + 1, y + 1), y_stay * s_cont)
        out[(0, 1)] = ((m + 1, 0, y + 1), y_stay * s_fin)
        out[(1, 0)] = ((n + 1, m + 1, 0), y_gen * s_cont)
        out[(1, 1)] = ((m + 1, 0, 0), y_gen * s_fin)
    else:
        out[(0, 0)] = ((n + 1, 0, y + 1), y_stay)
        out[(1, 0)] = ((n + 1, 1, 0), y_gen * s_busy)
        out[(1, 1)] = ((1, 0, 0), y_gen * s_done)
    return out


def state_trace_check(config: SimConfig, horizon: int) -> int:
    """Count realised one-slot transitions that the tables do not allow."""
    if horizon > 100_000:
        raise ParameterError("trace horizon is capped at 1e5 slots")
    tr = trace(config, horizon)
    violations = tr.inconsistencies
    for t in range(1, horizon):
        rows = table_successors(config.spec, tr.states[t - 1])
        row = rows.get((int(tr.arrivals[t]), int(tr.deliveries[t])))
        if row is None or row[0] != tr.states[t] or row[1] <= 0.0:
            violations += 1
    return violations
