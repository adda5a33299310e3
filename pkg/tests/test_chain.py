import io

import numpy as np
import pytest

from discrete_aoi import chain
from discrete_aoi.analytic import Discipline, SystemSpec, mean_nonpreemptive_ggeo
from discrete_aoi.dist import ParameterError, make_deterministic, make_explicit, make_geometric
from discrete_aoi.sim import table_successors

geo, det, expl = make_geometric, make_deterministic, make_explicit
P, N = Discipline.PREEMPTIVE, Discipline.NON_PREEMPTIVE


def edges(model):
    out = {}
    for s, d, p in zip(model.src, model.dst, model.prob):
        out.setdefault(model.state(int(s)), {})[model.state(int(d))] = float(p)
    return out


def test_unit_everything_pins_aoi_at_one():
    model, pi, aoi = chain.solve(SystemSpec(P, det(1), det(1)), nmax=10)
    assert pi.pi[model.index_of((1, 0))] == pytest.approx(1.0, abs=1e-12)
    assert aoi.pmf[1] == pytest.approx(1.0, abs=1e-12)


def test_memoryless_busy_continuation():
    p, g = 0.3, 0.6
    model = chain.build_preemptive(geo(p), geo(g), 30)
    e = edges(model)
    for n, m in [(5, 1), (9, 4), (20, 13)]:
        assert e[(n, m)][(n + 1, m + 1)] == pytest.approx((1 - p) * (1 - g), abs=1e-15)


def test_bounded_interarrival_prunes_old_services():
    model = chain.build_preemptive(expl([0.5, 0.5]), geo(0.4), 30)
    assert model.m.max() <= 2
    assert model.index_of((10, 3)) is None


def test_nmax_too_small():
    with pytest.raises(ParameterError):
        chain.build_preemptive(geo(0.5), geo(0.5), 2)
    with pytest.raises(ParameterError):
        chain.build_nonpreemptive(geo(0.5), 0.5, 2)


def test_nonpreemptive_unit_rates():
    model, pi, aoi = chain.solve(SystemSpec(N, det(1), geo(1.0)), nmax=8)
    assert aoi.pmf[1] == pytest.approx(1.0, abs=1e-12)


def test_nonpreemptive_deterministic_two_prunes_idle_y2():
    model = chain.build_nonpreemptive(det(2), 0.5, 20)
    assert all(model.index_of((n, 0, 2)) is None for n in range(3, 21))
    assert model.y.max() <= 1


def test_two_state_cycle_is_uniform():
    # Y = det(2), S = det(1): (1,0) -> (2,0) -> (1,0)
    model = chain.build_preemptive(det(2), det(1), 5)
    assert model.size == 2
    pi = chain.stationary(model, tol=1e-14)
    assert np.allclose(pi.pi, [0.5, 0.5], atol=1e-12)


def test_preemptive_fresh_idle_state_and_idle_profile():
    Y = S = geo(0.5)
    model, pi, _ = chain.solve(SystemSpec(P, Y, S), nmax=200, tol=1e-12)
    dense = model.dense(pi.pi)
    assert dense[1, 0] == pytest.approx(0.25, abs=1e-10)
    for n in range(1, 21):
        want = Y.tail(n - 1) * (1 - S.tail(n)) / Y.mean
        assert dense[n, 0] == pytest.approx(want, abs=1e-10)


@pytest.mark.parametrize("spec", [
    SystemSpec(P, geo(0.5), geo(0.5)),
    SystemSpec(P, expl([0.2, 0.3, 0.5]), expl([0.6, 0.1, 0.3])),
    SystemSpec(N, geo(0.4), geo(0.3)),
    SystemSpec(N, expl([0.1, 0.5, 0.4]), geo(0.6)),
])
def test_balance_residuals_small(spec):
    tol = 1e-12
    model, pi, _ = chain.solve(spec, nmax=60, tol=tol)
    assert chain.residuals(model, pi) < 10 * tol
    sums = model.row_sums()
    assert np.allclose(sums, 1.0, atol=1e-13)


def test_specific_balance_lines():
    Y, g = expl([0.3, 0.3, 0.4]), 0.45
    model, pi, _ = chain.solve(SystemSpec(N, Y, geo(g)), nmax=60)
    d = model.dense(pi.pi)
    assert d[2, 1, 0] == pytest.approx(d[1, 0, 0] * Y.pmf(1) * (1 - g), abs=1e-10)
    S = expl([0.5, 0.2, 0.3])
    model, pi, _ = chain.solve(SystemSpec(P, Y, S), nmax=60)
    d = model.dense(pi.pi)
    assert d[1, 0] == pytest.approx(S.pmf(1) / Y.mean, abs=1e-10)


@pytest.mark.parametrize("spec", [
    SystemSpec(P, expl([0.2, 0.3, 0.5]), geo(0.4)),
    SystemSpec(P, geo(0.35), expl([0.1, 0.6, 0.3])),
    SystemSpec(N, expl([0.4, 0.1, 0.5]), geo(0.5)),
])
def test_power_iteration_matches_dense_eigenvector(spec):
    model = chain.build(spec, 18)
    M = model.matrix.toarray()
    vals, vecs = np.linalg.eig(M)
    v = np.real(vecs[:, np.argmax(np.real(vals))])
    v = v / v.sum()
    pi = chain.stationary(model, tol=1e-14)
    assert np.max(np.abs(pi.pi - v)) < 1e-10


@pytest.mark.parametrize("spec", [
    SystemSpec(P, expl([0.2, 0.3, 0.5]), expl([0.5, 0.3, 0.2])),
    SystemSpec(P, geo(0.4), det(2)),
    SystemSpec(N, expl([0.3, 0.0, 0.7]), geo(0.4)),
    SystemSpec(N, det(3), geo(0.8)),
])
def test_edges_match_transition_tables(spec):
    model = chain.build(spec, 15)
    e = edges(model)
    for i in range(model.size):
        s = model.state(i)
        want = {}
        for target, p in table_successors(spec, s).values():
            if p > 0 and target[0] <= model.nmax:
                want[target] = want.get(target, 0.0) + p
        got = e.get(s, {})
        assert set(got) == set(want), s
        for t in want:
            assert got[t] == pytest.approx(want[t], abs=1e-14)
        leaked = sum(p for t, p in table_successors(spec, s).values() if t[0] > model.nmax)
        assert model.leak[i] == pytest.approx(leaked, abs=1e-14)


def test_geometric_interarrival_nonpreemptive_marginal():
    Y, g = geo(0.3), 0.4
    _, _, aoi = chain.solve(SystemSpec(N, Y, geo(g)), nmax=120)
    assert aoi.mean == pytest.approx(mean_nonpreemptive_ggeo(Y, g), abs=1e-6)


def test_convergence_error_carries_iterate():
    model = chain.build(SystemSpec(P, geo(0.5), geo(0.5)), 50)
    with pytest.raises(chain.ConvergenceError) as info:
        chain.stationary(model, tol=1e-14, max_iters=3)
    assert info.value.last.iterations == 3
    assert info.value.last.pi.size == model.size


def test_dump_edges_format():
    model = chain.build_preemptive(det(2), det(1), 5)
    buf = io.StringIO()
    model.dump_edges(buf)
    lines = sorted(buf.getvalue().splitlines())
    assert lines == ["1,0 -> 2,0 : 1", "2,0 -> 1,0 : 1"]


def test_default_nmax_heuristics():
    assert chain.default_nmax(SystemSpec(P, geo(0.5), geo(0.5))) == 400
    assert chain.default_nmax(SystemSpec(N, geo(0.5), geo(0.5))) == 160
    assert chain.default_nmax(SystemSpec(P, det(3), det(2))) >= 60
