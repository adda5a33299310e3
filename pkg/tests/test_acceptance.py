"""Acceptance criteria 1-7.

Each test records one PASS/FAIL line; the lines are echoed as the test runs
and repeated in the terminal summary (see conftest.py).
"""

import time

import numpy as np
import pytest

from discrete_aoi import chain
from discrete_aoi.analytic import (
    Discipline,
    SystemSpec,
    components_nonpreemptive,
    mean_nonpreemptive_ggeo,
    mean_preemptive_ggeo,
    pgf_nonpreemptive_ggeo,
    pgf_preemptive_berg,
    pgf_preemptive_gg,
    pgf_preemptive_ggeo,
)
from discrete_aoi.cli import main
from discrete_aoi.dist import make_deterministic, make_explicit, make_geometric
from discrete_aoi.report import summary_path
from discrete_aoi.sim import SimConfig, simulate, state_trace_check

P, N = Discipline.PREEMPTIVE, Discipline.NON_PREEMPTIVE
geo, det, expl = make_geometric, make_deterministic, make_explicit
GRID = [(p, g) for p in (0.2, 0.5, 0.8) for g in (0.2, 0.5, 0.8)]

RESULTS: list[str] = []


@pytest.fixture
def report(capsys):
    def record(number: int, ok: bool, detail: str):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} | {detail}"
        RESULTS.append(line)
        with capsys.disabled():
            print(f"\n{line}")
        return ok

    return record


def test_criterion_1_preemptive_closed_form_vs_chain(report):
    t0 = time.perf_counter()
    worst, pinned = 0.0, None
    for p, g in GRID:
        _, _, aoi = chain.solve(SystemSpec(P, geo(p), geo(g)), nmax=400, tol=1e-12)
        closed = mean_preemptive_ggeo(geo(p), g)
        worst = max(worst, abs(closed - aoi.mean))
        if p == g == 0.5:
            pinned = (closed, aoi.mean)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-6 and abs(pinned[0] - 3.0) <= 1e-12 and abs(pinned[1] - 3.0) <= 1e-6 and elapsed < 30
    assert report(1, ok, f"max |closed-chain| = {worst:.2e} (tol 1e-6), mean(0.5,0.5) = "
                         f"{pinned[0]:.12g} / chain {pinned[1]:.12g}, {elapsed:.1f} s (limit 30 s)")


def test_criterion_2_nonpreemptive_closed_form_vs_chain(report):
    t0 = time.perf_counter()
    worst, pinned, nmax = 0.0, None, None
    for p, g in GRID:
        spec = SystemSpec(N, geo(p), geo(g))
        nmax = chain.default_nmax(spec)
        _, _, aoi = chain.solve(spec, nmax=nmax, tol=1e-12)
        closed = mean_nonpreemptive_ggeo(geo(p), g)
        worst = max(worst, abs(closed - aoi.mean))
        if p == g == 0.5:
            pinned = (closed, aoi.mean)
    elapsed = time.perf_counter() - t0
    ok = (worst <= 1e-6 and abs(pinned[0] - 11 / 3) <= 1e-12 and abs(pinned[1] - 11 / 3) <= 1e-6
          and elapsed < 120)
    assert report(2, ok, f"N_max = {nmax}, max |closed-chain| = {worst:.2e} (tol 1e-6), mean(0.5,0.5) = "
                         f"{pinned[0]:.12g} / chain {pinned[1]:.12g}, {elapsed:.1f} s (limit 120 s)")


def test_criterion_3_general_form_degenerates(report):
    t0 = time.perf_counter()
    T = 100
    worst_ber = worst_geo = 0.0
    for p, g in GRID:
        gg = pgf_preemptive_gg(geo(p), geo(g), T).pmf
        worst_ber = max(worst_ber, float(np.max(np.abs(gg - pgf_preemptive_berg(p, geo(g), T).pmf))))
        worst_geo = max(worst_geo, float(np.max(np.abs(gg - pgf_preemptive_ggeo(geo(p), g, T).pmf))))
    elapsed = time.perf_counter() - t0
    ok = worst_ber <= 1e-10 and worst_geo <= 1e-10 and elapsed < 5
    assert report(3, ok, f"geometric-Y gap {worst_ber:.2e}, geometric-S gap {worst_geo:.2e} "
                         f"(tol 1e-10, order {T}, 9 pairs), {elapsed:.2f} s (limit 5 s)")


def _group_masses(model, pi):
    d = model.dense(pi.pi)
    idle, busy = d[:, 0, :], d[:, 1:, :]
    return (idle[:, 0].sum(), busy[:, :, 0].sum(), idle[:, 1:].sum(), busy[:, :, 1:].sum())


def _sampled_state_checks(model, pi, Y, g, rng, count):
    """Worst violation of the busy-state and idle-state product forms on random states."""
    d = model.dense(pi.pi)
    q = 1.0 - g
    Nmax = model.nmax
    busy = [model.state(i) for i in range(model.size) if model.m[i] >= 1 and model.y[i] >= 1]
    idle = [model.state(i) for i in range(model.size)
            if model.m[i] == 0 and model.y[i] >= 1 and model.n[i] <= Nmax - 10]
    worst_busy = worst_idle = 0.0
    for i in rng.choice(len(busy), size=count, replace=False):
        n, m, y = busy[i]
        want = d[n - y, m - y, 0] * Y.tail(y) * q ** y
        worst_busy = max(worst_busy, abs(d[n, m, y] - want))
    for i in rng.choice(len(idle), size=count, replace=False):
        n, _, y = idle[i]
        j = n - y
        want = d[j, 0, 0] * Y.tail(y) + d[j + 1:, j, 0].sum() * Y.tail(y) * (1 - q ** y)
        worst_idle = max(worst_idle, abs(d[n, 0, y] - want))
    return worst_busy, worst_idle


def test_criterion_4_component_level_white_box(report):
    rng = np.random.default_rng(2024)
    T = 200
    cases = [(geo(0.5), 0.5), (expl([0.2, 0.3, 0.5]), 0.3), (det(3), 0.6), (geo(0.3), 0.7)]
    sum_gap = mass_gap = busy_gap = idle_gap = 0.0
    sampled = 0
    for Y, g in cases:
        c = components_nonpreemptive(Y, g, T)
        total = (c.h1 + c.h2 + c.h3 + c.h4).coeffs
        sum_gap = max(sum_gap, float(np.max(np.abs(total - pgf_nonpreemptive_ggeo(Y, g, T).pmf))))
        model, pi, _ = chain.solve(SystemSpec(N, Y, geo(g)), nmax=120, tol=1e-13)
        masses = _group_masses(model, pi)
        for h, mass in zip((c.h1, c.h2, c.h3, c.h4), masses):
            mass_gap = max(mass_gap, abs(h.at_one() - mass))
        if model.y.max() >= 1:
            b, i = _sampled_state_checks(model, pi, Y, g, rng, 60)
            busy_gap, idle_gap = max(busy_gap, b), max(idle_gap, i)
            sampled += 120

    # fresh idle state and idle profile of the preemptive chain
    idle_gap_pre = 0.0
    for Y, S in [(geo(0.5), geo(0.5)), (expl([0.1, 0.4, 0.5]), expl([0.3, 0.3, 0.4])), (geo(0.3), det(2))]:
        model, pi, _ = chain.solve(SystemSpec(P, Y, S), nmax=200, tol=1e-13)
        d = model.dense(pi.pi)
        for n in range(1, 21):
            want = Y.tail(n - 1) * (1 - S.tail(n)) / Y.mean
            idle_gap_pre = max(idle_gap_pre, abs(d[n, 0] - want))
        idle_gap_pre = max(idle_gap_pre, abs(d[1, 0] - S.pmf(1) / Y.mean))

    ok = (sum_gap <= 1e-10 and mass_gap <= 1e-6 and busy_gap <= 1e-10 and idle_gap <= 1e-10
          and sampled >= 100 and idle_gap_pre <= 1e-10)
    assert report(4, ok, f"component sum gap {sum_gap:.1e}, group-mass gap {mass_gap:.1e}, "
                         f"busy/idle product forms {busy_gap:.1e}/{idle_gap:.1e} on {sampled} states, "
                         f"preemptive idle profile n<=20 {idle_gap_pre:.1e}")


def _random_weights(rng):
    k = int(rng.integers(1, 7))
    w = rng.uniform(0.05, 1.0, size=k)
    if k > 2:
        w[rng.integers(0, k - 1)] = 0.0  # interior hole in the support
    return w


def test_criterion_5_random_finite_support_pmfs(report):
    rng = np.random.default_rng(5)
    t0 = time.perf_counter()
    worst = {P: 0.0, N: 0.0}
    for _ in range(20):
        Y = expl(_random_weights(rng))
        g = float(rng.uniform(0.25, 0.9))
        general = {P: pgf_preemptive_gg(Y, geo(g), 256).pmf, N: pgf_nonpreemptive_ggeo(Y, g, 256).pmf}
        for disc, exact in general.items():
            _, _, aoi = chain.solve(SystemSpec(disc, Y, geo(g)), nmax=160, tol=1e-14)
            worst[disc] = max(worst[disc], float(np.max(np.abs(exact[:101] - aoi.pmf[:101]))))
    elapsed = time.perf_counter() - t0
    ok = max(worst.values()) <= 1e-8 and elapsed < 120
    assert report(5, ok, f"max L-inf on n<=100: preemptive {worst[P]:.1e}, non-preemptive {worst[N]:.1e} "
                         f"(tol 1e-8, 20 instances), {elapsed:.1f} s (limit 120 s)")


def _random_dist(rng):
    kind = rng.integers(0, 3)
    if kind == 0:
        return geo(float(rng.uniform(0.1, 1.0)))
    if kind == 1:
        return det(int(rng.integers(1, 5)))
    return expl(rng.uniform(0.0, 1.0, size=int(rng.integers(1, 6))) + 1e-3)


def test_criterion_6_simulation_consistency(report):
    t0 = time.perf_counter()
    canonical = [
        (SystemSpec(P, geo(0.5), geo(0.5)), mean_preemptive_ggeo(geo(0.5), 0.5)),
        (SystemSpec(N, geo(0.5), geo(0.5)), mean_nonpreemptive_ggeo(geo(0.5), 0.5)),
        (SystemSpec(P, det(3), geo(0.4)), mean_preemptive_ggeo(det(3), 0.4)),
        (SystemSpec(N, det(3), geo(0.4)), mean_nonpreemptive_ggeo(det(3), 0.4)),
    ]
    zs = []
    for spec, want in canonical:
        res = simulate(SimConfig(spec, slots=2_000_000, seed=2024, replications=8))
        zs.append(abs(res.mean - want) / res.stderr)
    rng = np.random.default_rng(6)
    violations = []
    for k in range(10):
        spec = SystemSpec(P if k % 2 == 0 else N, _random_dist(rng), _random_dist(rng))
        violations.append(state_trace_check(SimConfig(spec, slots=100_000, seed=k), 100_000))
    elapsed = time.perf_counter() - t0
    ok = max(zs) <= 3.0 and sum(violations) == 0 and elapsed < 180
    assert report(6, ok, f"|sim-analytic|/SE = {', '.join(f'{z:.2f}' for z in zs)} (limit 3), "
                         f"trace violations {sum(violations)} over 10 x 1e5 slots, {elapsed:.1f} s (limit 180 s)")


def test_criterion_7_determinism(report, tmp_path):
    cfg = SimConfig(SystemSpec(N, expl([0.3, 0.2, 0.5]), geo(0.35)), slots=300_000, seed=77, replications=3)
    a, b = simulate(cfg), simulate(cfg)
    sim_same = (a.counts.tobytes() == b.counts.tobytes() and a.rep_means.tobytes() == b.rep_means.tobytes()
                and a.mean == b.mean and a.stderr == b.stderr)

    runs = [
        ["sim", "--discipline", "preemptive", "--Y", "explicit:0.2,0.8", "--S", "deterministic:2",
         "--slots", "100000", "--seed", "3"],
        ["compare", "--discipline", "nonpreemptive", "--Y", "geometric:0.4", "--gamma", "0.5",
         "--nmax", "60", "--slots", "100000", "--seed", "4"],
        ["sweep", "--discipline", "preemptive", "--Y", "geometric:0.5", "--grid", "gamma=0.1:0.9:0.2",
         "--engines", "analytic,sim", "--slots", "50000"],
    ]
    files_same = True
    for i, argv in enumerate(runs):
        for fmt in ("csv", "jsonl"):
            outs = []
            for rep in range(2):
                out = tmp_path / f"run{i}_{rep}.{fmt}"
                assert main([*argv, "--format", fmt, "--out", str(out)]) == 0
                outs.append(out.read_bytes() + summary_path(out, fmt).read_bytes())
            files_same &= outs[0] == outs[1]
    ok = sim_same and files_same
    assert report(7, ok, f"simulator outputs bitwise identical: {sim_same}; "
                         f"CLI files identical across two runs ({len(runs)} commands x 2 formats): {files_same}")
