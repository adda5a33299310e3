import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from discrete_aoi.dist import (
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


def test_geometric_rate_one_is_unit_point_mass():
    d = make_geometric(1.0)
    assert d.pmf(1) == 1.0
    assert d.pmf(2) == 0.0


def test_geometric_pmf_and_tail():
    assert make_geometric(0.5).pmf(3) == pytest.approx(0.125, abs=1e-15)
    d = make_geometric(0.25)
    assert d.tail(2) == pytest.approx(0.5625, abs=1e-15)
    assert 1 - d.pmf(1) - d.pmf(2) == pytest.approx(d.tail(2), abs=1e-15)


@pytest.mark.parametrize("rate", [0.0, -0.1, 1.5, float("nan")])
def test_geometric_rejects_bad_rate(rate):
    with pytest.raises(ParameterError):
        make_geometric(rate)


def test_deterministic():
    assert make_deterministic(1).mean == 1
    d3 = make_deterministic(3)
    assert d3.tail(2) == 1.0 and d3.tail(3) == 0.0
    assert moments(make_deterministic(2))[1] == 4
    with pytest.raises(ParameterError):
        make_deterministic(0)


def test_explicit():
    d = make_explicit([1, 1])
    assert d.pmf(1) == d.pmf(2) == 0.5
    d = make_explicit([2, 0, 2])
    assert d.pmf(2) == 0.0 and d.pmf(3) == 0.5
    assert make_explicit([0.5, 0.5]).hazard(2) == 1.0


@pytest.mark.parametrize("weights", [[0, 0], [1, -1], []])
def test_explicit_rejects_bad_weights(weights):
    with pytest.raises(ParameterError):
        make_explicit(weights)


def test_tail_examples():
    g = make_geometric(0.5)
    assert tail(g, 0) == 1.0
    assert tail(g, 2) == pytest.approx(0.25)
    assert tail(make_explicit([0.5, 0.5]), 1) == 0.5


def test_hazard_examples():
    for n in (1, 2, 7, 40):
        assert hazard(make_geometric(0.3), n) == pytest.approx(0.3, abs=1e-14)
    d3 = make_deterministic(3)
    assert hazard(d3, 3) == 1.0
    assert hazard(d3, 2) == 0.0
    assert hazard(make_explicit([0.2, 0.3, 0.5]), 2) == pytest.approx(0.375, abs=1e-15)


def test_hazard_beyond_support_is_domain_error():
    with pytest.raises(DomainError):
        hazard(make_deterministic(2), 3)
    with pytest.raises(DomainError):
        hazard(make_geometric(1.0), 2)


def test_pgf_examples():
    for d in (make_geometric(0.3), make_deterministic(4), make_explicit([1, 2, 3])):
        assert pgf_eval(d, 1.0) == pytest.approx(1.0, abs=1e-15)
    assert pgf_eval(make_geometric(0.5), 0.5) == pytest.approx(1 / 3, abs=1e-15)
    partial = sum(0.5 ** j * 0.5 * 0.5 ** (j - 1) for j in range(1, 200))
    assert partial == pytest.approx(1 / 3, abs=1e-15)
    assert pgf_eval(make_deterministic(2), 0.3) == pytest.approx(0.09, abs=1e-15)
    with pytest.raises(DomainError):
        pgf_eval(make_geometric(0.5), 1.2)


def test_moments_examples():
    m1, m2 = moments(make_geometric(0.5))
    assert (m1, m2) == (pytest.approx(2.0), pytest.approx(6.0))
    j = np.arange(1, 400)
    pj = 0.5 ** j
    assert float(np.dot(j, pj)) == pytest.approx(m1, abs=1e-12)
    assert float(np.dot(j * j, pj)) == pytest.approx(m2, abs=1e-12)
    assert moments(make_deterministic(4)) == (4, 16)
    assert moments(make_explicit([0.5, 0.5])) == (pytest.approx(1.5), pytest.approx(2.5))


def test_parse_round_trip():
    for text in ("geometric:0.25", "deterministic:3", "explicit:0.2,0.3,0.5"):
        d = parse_dist(text)
        assert parse_dist(d.spec_string()) == d
    for bad in ("poisson:1", "geometric:x", "explicit:", "deterministic:1.5", "geometric"):
        with pytest.raises(ParameterError):
            parse_dist(bad)


def test_sampling_matches_pmf():
    rng = np.random.default_rng(7)
    for d in (make_geometric(0.4), make_explicit([0.2, 0.3, 0.5]), make_deterministic(3)):
        x = d.sample(rng, 200_000)
        assert x.min() >= 1
        freq = np.bincount(x, minlength=8)[1:8] / x.size
        want = np.array([d.pmf(j) for j in range(1, 8)])
        assert np.max(np.abs(freq - want)) < 5e-3


weights = st.lists(st.floats(0, 10, allow_nan=False), min_size=1, max_size=8).filter(lambda w: sum(w) > 1e-3)


@settings(max_examples=60, deadline=None)
@given(weights)
def test_explicit_is_normalised_and_tails_consistent(w):
    d = make_explicit(w)
    total = sum(d.pmf(j) for j in range(1, len(w) + 1))
    assert total == pytest.approx(1.0, abs=1e-12)
    for n in range(0, len(w) + 2):
        assert d.tail(n) == pytest.approx(sum(d.pmf(j) for j in range(n + 1, len(w) + 1)), abs=1e-12)
        if n >= 1 and d.tail(n - 1) > 0:
            assert 0.0 <= d.hazard(n) <= 1.0 + 1e-12


@settings(max_examples=60, deadline=None)
@given(st.floats(0.01, 1.0), st.floats(0.0, 1.0))
def test_geometric_pgf_closed_form(p, z):
    want = p * z / (1 - (1 - p) * z)
    assert pgf_eval(make_geometric(p), z) == pytest.approx(want, rel=1e-12, abs=1e-15)
    m1, m2 = moments(make_geometric(p))
    assert m1 == pytest.approx(1 / p, rel=1e-12)
    assert m2 == pytest.approx((2 - p) / p ** 2, rel=1e-12)
    assert math.isfinite(make_geometric(p).pgf_derivative(z))
