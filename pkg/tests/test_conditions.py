import math
from fractions import Fraction as Fr

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ergolab import conditions, systems
from ergolab.errors import ErgolabError
from ergolab.geometry import AffineMap, PhaseSpace, intervals_partition


def _shift_family(shift):
    """R0 = (0,1/2), R1 = (1/2,1); generator 0 is the rotation x + shift, generator 1 doubles."""
    sp = PhaseSpace.torus(1)
    rot = systems.PiecewiseAffineMap([systems.AffineBranch(sp.cells[0], AffineMap.make([[1]], [shift]))], sp, "rot")
    dbl = systems.doubling_family().maps[0]
    return systems.MapFamily([rot, dbl], intervals_partition([0, Fr(1, 2), 1]), 2, 0, "shift")


def test_markov_doubling_exact(doubling):
    rep = conditions.check_markov(doubling.partition, doubling)
    assert rep["pass"] and rep["method"] == "exact"
    assert rep["status"] == [["contains", "contains"], ["contains", "contains"]]


def test_markov_violation_for_quarter_shift():
    F = _shift_family(Fr(1, 4))
    rep = conditions.check_markov(F.partition, F)
    assert not rep["pass"]
    assert rep["status"][0] == ["VIOLATION", "VIOLATION"]


@pytest.mark.parametrize("depth", [1, 2, 3])
def test_markov_monotone_under_refinement_torus(depth):
    F, P = systems.build_expanding_family(PhaseSpace.torus(1), depth)
    assert conditions.check_markov(P, F)["pass"]


@pytest.mark.parametrize("depth", [1, 2])
def test_markov_triangle_builder(depth):
    F = systems.triangle_family(depth)
    rep = conditions.check_markov(F.partition, F)
    assert rep["pass"] and rep["method"] == "exact"


def test_markov_q1_builder(q1):
    assert conditions.check_markov(q1.partition, q1)["pass"]


def test_markov_perturbed_sampled(perturbed):
    rep = conditions.check_markov(perturbed.partition, perturbed)
    assert rep["pass"] and rep["method"].startswith("sampled")


def test_nfold_markov_family_holds(doubling):
    r = conditions.check_nfold_intersection(doubling.partition, doubling, [0, 1, 1, 0])
    assert r.holds and not r.vacuous


def test_nfold_violation_family_fails_with_chain():
    F = _shift_family(Fr(1, 4))
    r = conditions.check_nfold_intersection(F.partition, F, [0, 0, 0], samples=20000)
    assert not r.holds
    assert [c["status"] for c in r.chain] == ["VIOLATION", "VIOLATION"]


def test_nfold_vacuous():
    F = _shift_family(Fr(1, 2))
    r = conditions.check_nfold_intersection(F.partition, F, [0, 0, 0])
    assert r.holds and r.vacuous


def test_nfold_word_too_short(doubling):
    with pytest.raises(ErgolabError) as e:
        conditions.check_nfold_intersection(doubling.partition, doubling, [0, 1])
    assert e.value.code == "word-too-short"


def test_sigmas():
    assert conditions.estimate_sigmas(systems.doubling_family()) == (2.0, 1.0)
    F, _ = systems.build_expanding_family(PhaseSpace.torus(1), 2)
    assert conditions.estimate_sigmas(F)[0] == 4.0


def test_sigmas_sample_count_independent_for_affine(q1):
    assert conditions.estimate_sigmas(q1, 10) == conditions.estimate_sigmas(q1, 500)


def test_sigmas_not_expanding(rotations):
    s1, _ = conditions.estimate_sigmas(rotations)
    assert s1 == 1.0
    assert conditions.check_family(rotations, 0.1)["A2"]["flag"] == "not-expanding"


@pytest.mark.parametrize("beta,det", [(Fr(1, 2), 2), (Fr(19, 20), Fr(20, 19))])
def test_det_condition_q1(beta, det):
    F, P = systems.build_mostly_expanding_family(None, beta)
    (b, _), = F.region_branches(12)
    assert abs(b.amap.det) == det
    assert conditions.check_det_condition(F)


def test_det_condition_fails_for_volume_preserving_neutral_map():
    P = intervals_partition([0, Fr(1, 2), 1])
    sp = P.space
    ident = systems.PiecewiseAffineMap([systems.AffineBranch(sp.cells[0], AffineMap.identity(1))], sp, "id")
    F = systems.MapFamily([systems.doubling_family().maps[0], ident], P, 1, 1, "det-one")
    assert not conditions.check_det_condition(F)


def test_derive_epsilon0_examples():
    assert conditions.derive_epsilon0(2, 1, math.log(2) / 2) == pytest.approx(0.5, abs=1e-12)
    assert conditions.derive_epsilon0(2, 1, math.log(2)) is None
    e = conditions.derive_epsilon0(4, 1.1, 0.2)
    assert e == pytest.approx((0.2 + math.log(1.1)) / (math.log(4) + math.log(1.1)))
    assert e == pytest.approx(0.199, abs=5e-4)


def test_derive_epsilon0_bad_constants():
    with pytest.raises(ErgolabError) as e:
        conditions.derive_epsilon0(1, 1, 0.1)
    assert e.value.code == "bad-constants"


@settings(max_examples=200, deadline=None)
@given(st.floats(1.01, 10), st.floats(1, 3), st.floats(1e-3, 2))
def test_derive_epsilon0_tight(s1, s2, c):
    e = conditions.derive_epsilon0(s1, s2, c)
    if e is None:
        return
    lhs = -e * math.log(s1) + (1 - e) * math.log(s2)
    assert lhs == pytest.approx(-c, abs=1e-12)
    assert lhs <= -c + 1e-12


def test_l1_bound_examples():
    assert conditions.L1_bound(0, 1, 5, 0.3) == 1
    assert conditions.L1_bound(1, 1, 1, 2 * math.log(2)) == pytest.approx(math.e ** 2)
    with pytest.raises(ErgolabError):
        conditions.L1_bound(1, 1, 1, 0)


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 2), st.floats(0.1, 3), st.floats(0.05, 2), st.floats(0.05, 1))
def test_l1_bound_monotone(C0, K2, c, alpha):
    base = conditions.L1_bound(C0, alpha, K2, c)
    assert conditions.L1_bound(C0 + 0.1, alpha, K2, c) >= base
    assert conditions.L1_bound(C0, alpha, K2 + 0.1, c) >= base
    assert conditions.L1_bound(C0, alpha, K2, c + 0.1) <= base


def test_constants_sheet_doubling(doubling):
    sh = conditions.constants_sheet(doubling, math.log(2) / 2)
    assert sh.sigma1 == 2.0 and sh.sigma2 == 1.0
    assert sh.epsilon0 == pytest.approx(0.5, abs=1e-12)
    assert sh.K1 == pytest.approx(0.5, abs=1e-12)
    assert sh.max_norm == 2.0 and sh.K2 == pytest.approx(1.0, abs=1e-12)
    assert sh.L1 == 1.0 and sh.L2 == 1.0
    assert all(sh.recheck().values())
    assert sh.to_dict()["c"]["provenance"] == "configured"


def test_constants_sheet_q1(q1):
    sh = conditions.constants_sheet(q1)
    assert sh.c == pytest.approx(q1.meta["c"])
    assert 0 < sh.epsilon0 < 1
    assert all(sh.recheck().values())


def test_default_c_q0_is_half_log_sigma1(triangle):
    c, eps_hat = conditions.default_c(triangle)
    assert eps_hat == 1.0 and c == pytest.approx(math.log(math.sqrt(2)) / 2)


def test_check_family_doubling_and_boundary_c(doubling):
    assert conditions.check_family(doubling)["pass"]
    rep = conditions.check_family(doubling, math.log(2))
    assert not rep["pass"] and rep["A2"]["flag"] == "no-epsilon0"
