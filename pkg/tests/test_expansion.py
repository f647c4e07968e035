import math
from fractions import Fraction as Fr

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ergolab import conditions, expansion
from ergolab.errors import BoundaryHit, ErgolabError
from ergolab.expansion import (check_orbital_nue, expanding_fraction, hyperbolic_frequency, iterate, itinerary,
                               orbit, pliss_bound, pliss_times, pliss_times_bruteforce)
from ergolab.symbolic import iid_uniform, itinerary_stream, periodic

LN2 = math.log(2)


def test_third_is_period_two_exactly(doubling):
    rec = iterate(doubling, [Fr(1, 3)], None, 4)
    assert rec.exact_points() == [(Fr(1, 3),), (Fr(2, 3),), (Fr(1, 3),), (Fr(2, 3),), (Fr(1, 3),)]
    assert np.allclose(rec.a, -LN2)


def test_iterate_zero_steps(doubling):
    rec = iterate(doubling, [0.3], None, 0)
    assert rec.n == 0 and len(rec.points) == 1


def test_replay_and_region_membership(q1):
    x = q1.space.sample(1, np.random.default_rng(3))[0]
    rec = iterate(q1, x, None, 200)
    for j in range(rec.n):
        f = q1.maps[rec.symbols[j]]
        assert np.allclose(f.evaluate(rec.points[j:j + 1])[0], rec.points[j + 1], atol=1e-10)
        assert q1.partition.regions[rec.symbols[j]].contains(rec.points[j:j + 1], 1e-12)[0]


def test_a_depends_only_on_region_for_affine(q1):
    rec = iterate(q1, q1.space.sample(1, np.random.default_rng(4))[0], None, 500)
    by_region = {}
    for r, a in zip(rec.regions[:rec.n], rec.a):
        by_region.setdefault(int(r), set()).add(round(float(a), 14))
    assert all(len(v) == 1 for v in by_region.values())


def test_iid_stream_orbit(doubling):
    s = iid_uniform(2, 5)
    rec = iterate(doubling, [0.3], s, 100)
    assert rec.symbols.symbols == tuple(s.symbols(0, 100).tolist())


def test_itinerary_examples(doubling):
    assert itinerary(doubling, None, [Fr(1, 3)], 4).symbols == (0, 1, 0, 1)
    assert itinerary(doubling, None, [0.3], 3).symbols == (0, 1, 0)


def test_quarter_hits_skeleton(doubling):
    with pytest.raises(BoundaryHit) as e:
        itinerary(doubling, None, [0.25], 3)
    assert e.value.code == "boundary-hit" and e.value.step == 1


def test_boundary_start(doubling):
    with pytest.raises(BoundaryHit) as e:
        iterate(doubling, [0.5], None, 3)
    assert e.value.code == "boundary-start"
    assert orbit(doubling, [0.5], 3).status == "boundary-start"


def test_itinerary_stream_drives_same_orbit(doubling):
    s = itinerary_stream(doubling, [0.123])
    assert iterate(doubling, [0.123], s, 50).symbols == itinerary(doubling, None, [0.123], 50)


def test_pliss_examples():
    for fn in (pliss_times, pliss_times_bruteforce):
        assert fn([-1, -1, -1, -1], 1).tolist() == [1, 2, 3, 4]
        assert fn([-1, 2, -1, -1], 0.5).tolist() == [1]
        assert fn([], 1).tolist() == []
        assert fn([-3], 1).tolist() == [1]


def test_pliss_rejects_nonpositive_c():
    with pytest.raises(ErgolabError):
        pliss_times([-1], 0)


@settings(max_examples=300, deadline=None)
@given(st.lists(st.floats(-3, 3, allow_nan=False), max_size=60), st.sampled_from([0.1, 0.5, 1.0]))
def test_pliss_matches_bruteforce(a, c):
    assert pliss_times(a, c).tolist() == pliss_times_bruteforce(a, c).tolist()


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(-4, 3), max_size=40), st.sampled_from([0.5, 1.0]))
def test_pliss_ties_count_on_integer_data(a, c):
    # integer data with c in {1/2, 1} makes exact ties common
    assert pliss_times(a, c).tolist() == pliss_times_bruteforce(a, c).tolist()


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-2, 1, allow_nan=False), min_size=2, max_size=80), st.sampled_from([0.1, 0.5]))
def test_shift_property(a, c):
    H = pliss_times(a, c)
    for n in H.tolist():
        for s in range(1, n):
            assert (n - s) in pliss_times(a[s:], c)


def test_pliss_density_bound():
    rng = np.random.default_rng(99)
    A, c = 2.0, 0.4
    tested = 0
    while tested < 1000:
        N = int(rng.integers(1, 400))
        a = rng.uniform(-A, 1.0, N)
        if a.mean() > -c:
            continue
        tested += 1
        f = hyperbolic_frequency(pliss_times(a, c / 2), N)
        assert f >= pliss_bound(c, A) - 1e-12


def test_frequency_examples():
    assert hyperbolic_frequency(pliss_times([-1] * 100, 1), 100) == 1.0
    assert hyperbolic_frequency(pliss_times([-1, 2, -1, -1], 0.5), 4) == 0.25


def test_doubling_frequency_is_one(doubling):
    rec = orbit(doubling, [0.1234], 1000)
    assert hyperbolic_frequency(pliss_times(rec.a, LN2 / 2), 1000) == 1.0 >= 0.5


def test_expanding_fraction_q0_and_neutral_only(triangle, q1):
    rec = orbit(triangle, triangle.space.sample(1, np.random.default_rng(1))[0], 500)
    assert expanding_fraction(rec, triangle.p) == 1.0
    # a record that only visits the near-neutral region
    x = q1.partition.regions[12].sample(1, np.random.default_rng(2))[0]
    rec = orbit(q1, x, 1)
    assert expanding_fraction(rec, q1.p) == 0.0


def test_orbital_nue(doubling, rotations):
    rep = check_orbital_nue(orbit(doubling, [0.3], 1000), 0.3)
    assert rep["pass"] and rep["final_average"] == pytest.approx(-LN2)
    rec = iterate(rotations, [0.1], iid_uniform(2, 1), 1000)
    rep = check_orbital_nue(rec, 0.1)
    assert not rep["pass"] and rep["final_average"] == 0.0


def test_orbital_nue_q1_sampled(q1):
    c = conditions.constants_sheet(q1).c
    rng = np.random.default_rng(7)
    ok = [check_orbital_nue(orbit(q1, x, 10000), c)["pass"] for x in q1.space.sample(200, rng)]
    assert np.mean(ok) >= 0.99


def test_expanding_fraction_q1_above_epsilon0(q1):
    res = expansion.hyperbolic_frequency_experiment(q1, 200, 10000, q1.meta["c"], seed=3)
    assert res["boundary_hits"] == 0
    assert res["expanding_fractions"].min() >= q1.meta["epsilon0"]
