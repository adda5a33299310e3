"""Truncated Markov-chain oracle for the AoI state processes.

Preemptive systems use the state (n, m): AoI n and age m of the packet in
service (m = 0 when idle).  Non-preemptive systems with geometric service add
y, the number of slots since the latest generation.  States with n > N_max
are cut off; probability flowing there is recorded as leak and the iterate is
renormalised each sweep.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, TextIO

import numpy as np
import scipy.sparse as sp

from .analytic import AoIDistribution, Discipline, SystemSpec
from .dist import DiscreteDist, ParameterError, make_geometric

__all__ = [
    "ChainModel",
    "StationaryVector",
    "ConvergenceError",
    "build_preemptive",
    "build_nonpreemptive",
    "build",
    "stationary",
    "aoi_marginal",
    "residuals",
    "default_nmax",
    "solve",
]

log = logging.getLogger(__name__)


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, last: "StationaryVector"):
        super().__init__(message)
        self.last = last


@dataclass
class ChainModel:
    discipline: Discipline
    nmax: int
    n: np.ndarray
    m: np.ndarray
    y: Optional[np.ndarray]
    src: np.ndarray
    dst: np.ndarray
    prob: np.ndarray
    leak: np.ndarray
    matrix: sp.csr_matrix = field(repr=False)
    keys: np.ndarray = field(repr=False)
    ykeys: int = 1
    interarrival: Optional[DiscreteDist] = None
    service: Optional[DiscreteDist] = None

    @property
    def size(self) -> int:
        return self.n.size

    @property
    def three_dimensional(self) -> bool:
        return self.y is not None

    def _key(self, n, m, y=0):
        return (np.asarray(n) * (self.nmax + 1) + np.asarray(m)) * self.ykeys + np.asarray(y)

    def index_of(self, state) -> Optional[int]:
        key = int(self._key(*state))
        pos = int(np.searchsorted(self.keys, key))
        if pos < self.keys.size and self.keys[pos] == key:
            return pos
        return None

    def state(self, i: int) -> tuple:
        if self.y is None:
            return int(self.n[i]), int(self.m[i])
        return int(self.n[i]), int(self.m[i]), int(self.y[i])

    def row_sums(self) -> np.ndarray:
        return np.bincount(self.src, weights=self.prob, minlength=self.size) + self.leak

    def dense(self, pi: np.ndarray) -> np.ndarray:
        """Scatter a per-state vector into an array indexed [n, m] or [n, m, y]."""
        if self.y is None:
            out = np.zeros((self.nmax + 1, self.nmax + 1))
            out[self.n, self.m] = pi
        else:
            out = np.zeros((self.nmax + 1, self.nmax + 1, self.ykeys))
            out[self.n, self.m, self.y] = pi
        return out

    def dump_edges(self, fh: TextIO):
        """Write ``src -> dst : prob`` lines, one transition per line."""
        for s, d, p in zip(self.src, self.dst, self.prob):
            a = ",".join(str(v) for v in self.state(int(s)))
            b = ",".join(str(v) for v in self.state(int(d)))
            fh.write(f"{a} -> {b} : {p:.12g}\n")


@dataclass
class StationaryVector:
    pi: np.ndarray
    residual: float
    iterations: int
    leak_rate: float


def _ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    out = np.zeros_like(num)
    ok = den > 0
    out[ok] = num[ok] / den[ok]
    return np.clip(out, 0.0, 1.0)


def _assemble(discipline, nmax, ykeys, n, m, y, cand_src, cand_n, cand_m, cand_y, cand_p):
    y_arr = y if y is not None else np.zeros_like(n)
    keys = (n * (nmax + 1) + m) * ykeys + y_arr
    order = np.argsort(keys, kind="stable")
    n, m, keys = n[order], m[order], keys[order]
    y = y[order] if y is not None else None
    inverse = np.empty_like(order)
    inverse[order] = np.arange(order.size)

    src = inverse[np.concatenate(cand_src)]
    tn = np.concatenate(cand_n)
    tm = np.concatenate(cand_m)
    ty = np.concatenate(cand_y) if cand_y else np.zeros_like(tn)
    p = np.concatenate(cand_p)
    keep = p > 0.0
    src, tn, tm, ty, p = src[keep], tn[keep], tm[keep], ty[keep], p[keep]

    leak = np.zeros(n.size)
    out = tn > nmax
    np.add.at(leak, src[out], p[out])
    src, tn, tm, ty, p = src[~out], tn[~out], tm[~out], ty[~out], p[~out]
    tkeys = (tn * (nmax + 1) + tm) * ykeys + ty
    dst = np.searchsorted(keys, tkeys)
    dst = np.minimum(dst, keys.size - 1)
    missing = keys[dst] != tkeys
    if np.any(missing):
        i = int(np.nonzero(missing)[0][0])
        raise AssertionError(f"transition into unenumerated state {(tn[i], tm[i], ty[i])}")

    by_src = np.lexsort((dst, src))
    src, dst, p = src[by_src], dst[by_src], p[by_src]
    matrix = sp.csr_matrix((p, (dst, src)), shape=(n.size, n.size))
    return ChainModel(discipline, nmax, n, m, y, src, dst, p, leak, matrix, keys, ykeys)


def build_preemptive(Y: DiscreteDist, S: DiscreteDist, nmax: int) -> ChainModel:
    """Enumerate (n, m) states and their one-slot transitions."""
    if int(nmax) != nmax or nmax < 3:
        raise ParameterError(f"N_max must be an integer >= 3, got {nmax}")
    N = int(nmax)
    tY, pY = Y.tail_array(N + 2), Y.pmf_array(N + 2)
    tS, pS = S.tail_array(N + 2), S.pmf_array(N + 2)

    idle_n = np.arange(1, N + 1)
    idle_n = idle_n[tY[idle_n - 1] > 0]
    busy_m = np.arange(1, N)
    busy_m = busy_m[(tY[busy_m - 1] > 0) & (tS[busy_m] > 0)]
    counts = N - busy_m
    bm = np.repeat(busy_m, counts)
    bn = np.concatenate([np.arange(mm + 1, N + 1) for mm in busy_m]) if busy_m.size else np.zeros(0, int)

    n = np.concatenate([idle_n, bn]).astype(np.int64)
    m = np.concatenate([np.zeros_like(idle_n), bm]).astype(np.int64)
    idle = np.arange(idle_n.size)
    busy = np.arange(idle_n.size, n.size)

    s_fresh_busy, s_fresh_done = tS[1], pS[1]
    cs, cn, cm, cp = [], [], [], []

    def emit(sel, tn, tm, p):
        cs.append(sel)
        cn.append(np.asarray(tn, dtype=np.int64))
        cm.append(np.asarray(tm, dtype=np.int64))
        cp.append(np.asarray(p, dtype=float))

    # idle (n, 0): generation decided by the hazard of Y at n
    a = idle_n
    y_stay = _ratio(tY[a], tY[a - 1])
    y_gen = _ratio(pY[a], tY[a - 1])
    emit(idle, a + 1, np.zeros_like(a), y_stay)
    emit(idle, a + 1, np.ones_like(a), y_gen * s_fresh_busy)
    emit(idle, np.ones_like(a), np.zeros_like(a), y_gen * s_fresh_done)

    # busy (n, m): m is both the in-service age and the time since generation
    y_stay = _ratio(tY[bm], tY[bm - 1])
    y_gen = _ratio(pY[bm], tY[bm - 1])
    s_cont = _ratio(tS[bm + 1], tS[bm])
    s_done = _ratio(pS[bm + 1], tS[bm])
    emit(busy, bn + 1, bm + 1, y_stay * s_cont)
    emit(busy, bm + 1, np.zeros_like(bm), y_stay * s_done)
    emit(busy, bn + 1, np.ones_like(bm), y_gen * s_fresh_busy)
    emit(busy, np.ones_like(bm), np.zeros_like(bm), y_gen * s_fresh_done)

    model = _assemble(Discipline.PREEMPTIVE, N, 1, n, m, None, cs, cn, cm, [], cp)
    model.interarrival, model.service = Y, S
    return model


def build_nonpreemptive(Y: DiscreteDist, gamma: float, nmax: int) -> ChainModel:
    """Enumerate (n, m, y) states for geometric(gamma) service."""
    if int(nmax) != nmax or nmax < 3:
        raise ParameterError(f"N_max must be an integer >= 3, got {nmax}")
    if not (0.0 < gamma <= 1.0):
        raise ParameterError(f"gamma must lie in (0, 1], got {gamma}")
    N = int(nmax)
    q = 1.0 - gamma
    tY, pY = Y.tail_array(N + 2), Y.pmf_array(N + 2)
    ys = np.arange(0, N)
    ys = ys[tY[ys] > 0]
    ymax = int(ys.max())
    ykeys = ymax + 2

    # idle (n, 0, y) with n > y
    iy = np.concatenate([np.full(N - yy, yy) for yy in ys])
    i_n = np.concatenate([np.arange(yy + 1, N + 1) for yy in ys])
    # busy (n, m, y) with n > m > y, only while service can still be running
    bn_l, bm_l, by_l = [], [], []
    if q > 0.0:
        for yy in ys:
            for mm in range(yy + 1, N):
                cnt = N - mm
                bn_l.append(np.arange(mm + 1, N + 1))
                bm_l.append(np.full(cnt, mm))
                by_l.append(np.full(cnt, yy))
    bn = np.concatenate(bn_l) if bn_l else np.zeros(0, np.int64)
    bm = np.concatenate(bm_l) if bm_l else np.zeros(0, np.int64)
    by = np.concatenate(by_l) if by_l else np.zeros(0, np.int64)

    n = np.concatenate([i_n, bn]).astype(np.int64)
    m = np.concatenate([np.zeros_like(i_n), bm]).astype(np.int64)
    y = np.concatenate([iy, by]).astype(np.int64)
    idle = np.arange(i_n.size)
    busy = np.arange(i_n.size, n.size)

    cs, cn, cm, cy, cp = [], [], [], [], []

    def emit(sel, tn, tm, ty, p):
        cs.append(sel)
        cn.append(np.asarray(tn, dtype=np.int64))
        cm.append(np.asarray(tm, dtype=np.int64))
        cy.append(np.asarray(ty, dtype=np.int64))
        cp.append(np.asarray(p, dtype=float))

    zeros_i, ones_i = np.zeros_like(i_n), np.ones_like(i_n)
    stay = _ratio(tY[iy + 1], tY[iy])
    gen = _ratio(pY[iy + 1], tY[iy])
    emit(idle, i_n + 1, zeros_i, iy + 1, stay)
    emit(idle, i_n + 1, ones_i, zeros_i, gen * q)
    emit(idle, ones_i, zeros_i, zeros_i, gen * gamma)

    if busy.size:
        zeros_b = np.zeros_like(bn)
        stay = _ratio(tY[by + 1], tY[by])
        gen = _ratio(pY[by + 1], tY[by])
        emit(busy, bn + 1, bm + 1, by + 1, stay * q)
        emit(busy, bm + 1, zeros_b, by + 1, stay * gamma)
        emit(busy, bn + 1, bm + 1, zeros_b, gen * q)
        emit(busy, bm + 1, zeros_b, zeros_b, gen * gamma)

    model = _assemble(Discipline.NON_PREEMPTIVE, N, ykeys, n, m, y, cs, cn, cm, cy, cp)
    model.interarrival, model.service = Y, make_geometric(gamma)
    return model


def default_nmax(spec: SystemSpec) -> int:
    Y, S = spec.interarrival, spec.service
    if spec.discipline is Discipline.PREEMPTIVE:
        if Y.is_geometric or S.is_geometric:
            return 400
        return max(60, 20 * (Y.support_max + S.support_max))
    gamma = S.param
    if Y.is_geometric:
        # O(N^3) states; 160 keeps the build under a few hundred MB
        return 160
    return min(400, max(60, int(np.ceil(20 * (Y.support_max + 1.0 / gamma)))))


def build(spec: SystemSpec, nmax: Optional[int] = None) -> ChainModel:
    nmax = default_nmax(spec) if nmax is None else nmax
    if spec.discipline is Discipline.PREEMPTIVE:
        return build_preemptive(spec.interarrival, spec.service, nmax)
    if not spec.service.is_geometric:
        raise ParameterError("the non-preemptive chain oracle needs geometric service")
    return build_nonpreemptive(spec.interarrival, spec.service.param, nmax)


def stationary(model: ChainModel, tol: float = 1e-12, max_iters: int = 1_000_000,
               laziness: float = 0.1) -> StationaryVector:
    """Power iteration on the lazy chain ``laziness*I + (1-laziness)*P``.

    The lazy chain has the same stationary vector and is aperiodic, so the
    iteration also converges for periodic chains (e.g. deterministic Y).
    Stops when the L1 change of one sweep drops below ``tol``.
    """
    if model.size == 0:
        raise ParameterError("empty chain")
    M = model.matrix
    pi = np.full(model.size, 1.0 / model.size)
    diff = np.inf
    it = 0
    for it in range(1, max_iters + 1):
        nxt = M @ pi
        nxt *= 1.0 - laziness
        nxt += laziness * pi
        nxt /= nxt.sum()
        diff = float(np.abs(nxt - pi).sum())
        pi = nxt
        if diff < tol:
            break
    step = M @ pi
    leak_rate = float(np.dot(model.leak, pi))
    resid = float(np.abs(step / step.sum() - pi).sum())
    out = StationaryVector(pi, resid, it, leak_rate)
    if diff >= tol:
        raise ConvergenceError(f"no convergence after {it} sweeps (last change {diff:.3e})", out)
    log.debug("stationary: %d states, %d sweeps, residual %.3e, leak %.3e",
              model.size, it, resid, leak_rate)
    return out


def aoi_marginal(model: ChainModel, pi: StationaryVector) -> AoIDistribution:
    """Sum stationary mass over states sharing the same AoI value."""
    p = pi.pi
    pmf = np.bincount(model.n, weights=p, minlength=model.nmax + 1)
    N = model.nmax
    mass = float(pmf.sum())
    mean = float(np.dot(np.arange(N + 1), pmf))
    est = 0.0
    if pmf[N] > 0 and pmf[N - 1] > 0:
        r = min(pmf[N] / pmf[N - 1], 0.999)
        est = pmf[N] * r / (1.0 - r)
    return AoIDistribution(pmf=pmf, captured_mass=mass, mean=mean,
                           tail_bound=pi.leak_rate + est, source="chain")


def _hazards(d: DiscreteDist, size: int):
    """(P{X>k | X>k-1}, P{X=k | X>k-1}) for k = 0..size-1, zero where undefined."""
    t = d.tail_array(size)
    p = d.pmf_array(size)
    prev = np.concatenate([[1.0], t[:-1]])
    return _ratio(t, prev), _ratio(p, prev)


def residuals(model: ChainModel, pi: StationaryVector, discipline=None) -> float:
    """Max violation of the balance equations written out state class by class.

    This evaluates the closed system of stationary equations directly on the
    dense stationary array rather than through the transition list, so it
    checks the builder against an independent statement of the chain.
    Leaked mass is returned in proportion to pi, so the left-hand sides are
    scaled by (1 - leak_rate).
    """
    if discipline is None:
        discipline = model.discipline
    elif not isinstance(discipline, Discipline):
        discipline = Discipline.parse(discipline)
    if discipline is not model.discipline:
        raise ParameterError("discipline does not match the model")
    P = model.dense(pi.pi)
    if discipline is Discipline.PREEMPTIVE:
        return _residuals_preemptive(P, model.interarrival, model.service, 1.0 - pi.leak_rate)
    return _residuals_nonpreemptive(P, model.interarrival, model.service.param, 1.0 - pi.leak_rate)


def _residuals_preemptive(P: np.ndarray, Y: DiscreteDist, S: DiscreteDist, kept: float = 1.0) -> float:
    N = P.shape[0] - 1
    survY, hzY = _hazards(Y, N + 2)
    survS, hzS = _hazards(S, N + 2)
    pS1, tS1, pY1 = S.pmf(1), S.tail(1), Y.pmf(1)
    worst = 0.0

    def upd(lhs, rhs):
        nonlocal worst
        if np.size(lhs):
            worst = max(worst, float(np.max(np.abs(kept * np.asarray(lhs) - np.asarray(rhs)))))

    # busy, no generation, service continues: n > m >= 2
    for mm in range(2, N):
        upd(P[mm + 1:, mm], P[mm:N, mm - 1] * survY[mm - 1] * survS[mm])
    # fresh packet that survives its first slot: (n, 1), n >= 3
    busy_gen = (P[:, 1:] * hzY[1:N + 1]).sum(axis=1)
    k = np.arange(3, N + 1)
    upd(P[k, 1], (P[k - 1, 0] * hzY[k - 1] + busy_gen[k - 1]) * tS1)
    upd(P[2, 1], P[1, 0] * pY1 * tS1)
    # idle (n, 0), n >= 2
    col = P.sum(axis=0)  # col[m] = sum_k P[k, m]
    k = np.arange(2, N + 1)
    upd(P[k, 0], P[k - 1, 0] * survY[k - 1] + col[k - 1] * survY[k - 1] * hzS[k])
    # (1, 0): any generation followed by a one-slot service
    gen = (P[1:, 0] * hzY[1:N + 1]).sum() + (col[1:] * hzY[1:N + 1]).sum()
    upd(P[1, 0], gen * pS1)
    return worst


def _residuals_nonpreemptive(P: np.ndarray, Y: DiscreteDist, gamma: float, kept: float = 1.0) -> float:
    N = P.shape[0] - 1
    K = P.shape[2]
    q = 1.0 - gamma
    survY, hzY = _hazards(Y, max(N, K) + 3)
    pY1, tY1 = Y.pmf(1), Y.tail(1)
    worst = 0.0

    def upd(lhs, rhs):
        nonlocal worst
        if np.size(lhs):
            worst = max(worst, float(np.max(np.abs(kept * np.asarray(lhs) - np.asarray(rhs)))))

    n_idx = np.arange(N + 1)[:, None]
    m_idx = np.arange(N + 1)[None, :]
    valid_nm = n_idx > m_idx

    # busy, no generation: n > m > y >= 2
    for yy in range(2, K):
        mask = valid_nm & (m_idx > yy)
        rhs = np.zeros((N + 1, N + 1))
        rhs[1:, 1:] = P[:-1, :-1, yy - 1] * survY[yy] * q
        upd(P[:, :, yy][mask], rhs[mask])
    # busy, y = 1: n > m >= 2
    if K > 1:
        mask = valid_nm & (m_idx >= 2)
        rhs = np.zeros((N + 1, N + 1))
        rhs[1:, 1:] = P[:-1, :-1, 0] * tY1 * q
        upd(P[:, :, 1][mask], rhs[mask])
    # busy, fresh generation while busy: n > m >= 3
    w = np.zeros((N + 1, N + 1))
    for j in range(1, K):
        w += P[:, :, j] * hzY[j + 1]
    mask = valid_nm & (m_idx >= 3)
    rhs = np.zeros((N + 1, N + 1))
    rhs[1:, 1:] = (P[:-1, :-1, 0] * pY1 + w[:-1, :-1]) * q
    upd(P[:, :, 0][mask], rhs[mask])
    k = np.arange(3, N + 1)
    upd(P[k, 2, 0], P[k - 1, 1, 0] * pY1 * q)
    idle_gen = np.zeros(N + 1)
    for j in range(1, K):
        idle_gen += P[:, 0, j] * hzY[j + 1]
    upd(P[k, 1, 0], (P[k - 1, 0, 0] * pY1 + idle_gen[k - 1]) * q)
    upd(P[2, 1, 0], P[1, 0, 0] * pY1 * q)
    # idle states; col[m, y] = sum_k P[k, m, y]
    col = P.sum(axis=0)
    for yy in range(2, K):
        k = np.arange(yy + 1, N + 1)
        upd(P[k, 0, yy], (P[k - 1, 0, yy - 1] + col[k - 1, yy - 1] * gamma) * survY[yy])
    if K > 1:
        k = np.arange(2, N + 1)
        upd(P[k, 0, 1], (P[k - 1, 0, 0] + col[k - 1, 0] * gamma) * tY1)
    k = np.arange(3, N + 1)
    busy_gen = np.zeros(N + 1)
    for j in range(1, K):
        busy_gen += col[:, j] * hzY[j + 1]
    upd(P[k, 0, 0], (col[k - 1, 0] * pY1 + busy_gen[k - 1]) * gamma)
    upd(P[2, 0, 0], col[1, 0] * pY1 * gamma)
    gen = (P[1:, 0, 0] * pY1).sum()
    for yy in range(1, K):
        gen += P[yy + 1:, 0, yy].sum() * hzY[yy + 1]
    upd(P[1, 0, 0], gen * gamma)
    return worst


def solve(spec: SystemSpec, nmax: Optional[int] = None, tol: float = 1e-12,
          max_iters: int = 1_000_000):
    """Build, solve and marginalise in one call; returns (model, pi, aoi)."""
    model = build(spec, nmax)
    pi = stationary(model, tol=tol, max_iters=max_iters)
    return model, pi, aoi_marginal(model, pi)
