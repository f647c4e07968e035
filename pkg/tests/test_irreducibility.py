import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ergolab import systems
from ergolab.errors import ErgolabError
from ergolab.geometry import Region, interval
from ergolab.irreducibility import (contractivity_probe, default_test_set, eps_density, orbit_tree,
                                    residual_density_probe, transitivity_matrix, weak_cycle_test)


def test_dyadic_backward_tree(doubling):
    t = orbit_tree(doubling, [0.0], "backward", 3)
    got = sorted(float(v) % 1 for v in t.nodes[:, 0])
    assert np.allclose(got, [j / 8 for j in range(8)])
    assert t.level.max() == 3


def test_depth_zero_is_root(triangle):
    t = orbit_tree(triangle, [0.2, 0.1], "backward", 0)
    assert len(t) == 1 and np.allclose(t.nodes[0], [0.2, 0.1])


def test_fixed_point_forward_tree(doubling):
    t = orbit_tree(doubling, [0.0], "forward", 10)
    assert len(t) == 1


def test_tree_words_replay(doubling):
    t = orbit_tree(doubling, [0.3], "forward", 5)
    for i in range(len(t)):
        y = np.array([[0.3]])
        for s in t.word(i):
            y = doubling.maps[s].evaluate(y)
        assert doubling.space.distance(y[0], t.nodes[i]) < 1e-9


def test_backward_nodes_map_to_root(triangle):
    x = np.array([0.3, 0.2])
    t = orbit_tree(triangle, x, "backward", 2)
    for i in range(1, len(t)):
        z = t.nodes[i:i + 1]
        for s in t.word(i)[::-1]:
            z = triangle.maps[s].evaluate(z)
        assert np.allclose(z[0], x, atol=1e-9)


def test_bad_parameters(doubling):
    with pytest.raises(ErgolabError):
        orbit_tree(doubling, [0.1], "sideways", 2)
    with pytest.raises(ErgolabError):
        orbit_tree(doubling, [0.1], "backward", -1)
    t = orbit_tree(doubling, [0.1], "backward", 2)
    with pytest.raises(ErgolabError):
        eps_density(t, 0.0, space=doubling.space)


@pytest.mark.parametrize("D", [4, 8, 12])
def test_backward_density_doubling(doubling, D):
    t = orbit_tree(doubling, [0.0], "backward", D)
    assert eps_density(t, 2.0 ** (-D + 1), 5000, 0, doubling.space) == 1.0


def test_small_tree_not_dense(doubling):
    t = orbit_tree(doubling, [0.0], "backward", 2)
    assert eps_density(t, 0.01, 5000, 0, doubling.space) < 0.2


def test_truncation_flag(doubling):
    t = orbit_tree(doubling, [0.123], "backward", 12, budget=50)
    assert t.truncated and len(t) <= 50


def test_weak_cycle_doubling(doubling):
    rep = weak_cycle_test(doubling, default_test_set(doubling.space), 300, 8)
    assert rep["hit_fraction"] == 1.0 and not rep["flagged"]
    for c in rep["certificates"]:
        z = np.array([c["z"]])
        for s in c["word"][::-1]:
            z = doubling.maps[s].evaluate(z)
        assert doubling.space.distance(z[0], c["x"]) < 1e-9


def test_weak_cycle_full_set(doubling):
    rep = weak_cycle_test(doubling, Region([interval(0, 1)]), 100, 0)
    assert rep["hit_fraction"] == 1.0


def test_weak_cycle_monotone(triangle):
    rep = weak_cycle_test(triangle, default_test_set(triangle.space, 0.02), 100, 6)
    assert np.all(np.diff(rep["hit_fraction_by_depth"]) >= 0)
    assert rep["hit_fraction_by_depth"][-1] == rep["hit_fraction"]


def test_weak_cycle_control_flagged(control):
    rep = weak_cycle_test(control, default_test_set(control.space), 200, 8)
    assert rep["flagged"] and rep["hit_fraction"] < 0.6


def test_weak_cycle_degenerate(doubling):
    with pytest.raises(ErgolabError) as e:
        weak_cycle_test(doubling, Region([interval(0.2, 0.2)]))
    assert e.value.code == "degenerate-set"


def test_contractivity_inverse_family(doubling, rotations):
    inv = systems.inverse_family(doubling)
    rep = contractivity_probe(inv, [0.4], 6, 0.05)
    assert rep["contractive"]
    assert rep["decay_rate"] == pytest.approx(-math.log(2), abs=0.05)
    iso = contractivity_probe(rotations, [0.4], 6, 0.05)
    assert not iso["contractive"]
    assert np.allclose(iso["diameters"], iso["diameters"][0])


def test_contractivity_expanding_not_contractive(doubling):
    assert not contractivity_probe(doubling, [0.4], 4, 0.01)["contractive"]


def test_transitivity(doubling, control):
    T0 = transitivity_matrix(doubling, depth=0)
    assert np.array_equal(T0, np.eye(2, dtype=bool))
    assert transitivity_matrix(doubling, depth=2).all()
    Tc = transitivity_matrix(control, depth=4)
    assert not Tc.all()
    # the two invariant arcs never communicate
    comp = Tc | Tc.T
    assert np.array_equal(comp, comp @ comp | comp)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 4))
def test_transitivity_monotone_in_depth(d):
    F = systems.triangle_family(1)
    a = transitivity_matrix(F, depth=d, samples=16)
    b = transitivity_matrix(F, depth=d + 1, samples=16)
    assert np.all(b | ~a)


def test_residual_density_probe(doubling):
    rep = residual_density_probe(doubling, 1 / 16, 6, samples=30, probes=2000)
    assert rep["premise"] in (True, False)
    if rep["premise"]:
        assert 0.0 <= rep["fraction"] <= 1.0


def test_default_test_set_measure(doubling, triangle, q1):
    for F in (doubling, triangle, q1):
        B = default_test_set(F.space, 0.1)
        assert F.space.measure(B.volume) == pytest.approx(0.1, rel=1e-9)
