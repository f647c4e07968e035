"""Acceptance suite. Each criterion prints one PASS/FAIL line."""
import math
import time
from fractions import Fraction

import numpy as np
import pytest

from ergolab import conditions, cylinders, ergodicity, expansion, irreducibility, systems

LN2 = math.log(2)


def report(capsys, n, name, ok, detail):
    with capsys.disabled():
        print(f"\n[criterion {n}] {'PASS' if ok else 'FAIL'} {name}: {detail}")
    assert ok, detail


def _oracle(a, c):
    # O(N^2) direct check of: for all 0 <= i < n, sum_{j=i}^{n-1} a_j <= -c (n - i)
    out = []
    for n in range(1, len(a) + 1):
        ok = True
        s = 0.0
        for i in range(n - 1, -1, -1):
            s += a[i]
            if s > -c * (n - i) + 1e-9 * (n - i):
                ok = False
                break
        if ok:
            out.append(n)
    return out


def test_criterion_1_pliss_oracle(capsys):
    rng = np.random.default_rng(1)
    seqs = []
    for _ in range(10 ** 4):
        N = int(rng.integers(1, 501))
        c = float(rng.choice([0.1, 0.5, 1.0]))
        a = np.round(rng.normal(-0.6, 1.5, N), 6)
        seqs.append((a, c))
    expansion.pliss_times(seqs[0][0], seqs[0][1])  # warm the compiled kernel
    t0 = time.perf_counter()
    got = [expansion.pliss_times(a, c).times for a, c in seqs]
    elapsed = time.perf_counter() - t0
    # the pure-Python oracle is slow, so it checks a 1000-sequence subsample plus the package brute force on all
    mism = sum(not np.array_equal(g, expansion.pliss_times_bruteforce(a, c).times) for g, (a, c) in zip(got, seqs))
    mism += sum(list(got[i]) != _oracle(list(seqs[i][0]), seqs[i][1]) for i in range(0, 10 ** 4, 10))
    report(capsys, 1, "Pliss oracle equivalence", mism == 0 and elapsed < 10,
           f"{mism} mismatches over 10^4 sequences, {elapsed:.2f} s")


def test_criterion_2_builder_exactness(capsys):
    F = systems.triangle_family(1)
    pieces = len(F.partition)
    f = F.maps[0]
    dets_all = [abs(b.amap.det) for b in f.branches[:pieces]]
    exact_types = all(isinstance(d, (int, Fraction)) for d in dets_all)
    mk = conditions.check_markov(F.partition, F)
    ok = pieces == 6 and set(dets_all) == {6} and exact_types and mk["pass"] and mk["method"] == "exact"
    report(capsys, 2, "m=2 builder exactness", ok,
           f"pieces={pieces}, |det|={sorted(set(map(str, dets_all)))}, markov={mk['method']}/{mk['pass']}")


def test_criterion_3_constants_chain(capsys):
    F = systems.doubling_family()
    sh = conditions.constants_sheet(F, LN2 / 2)
    eps0 = conditions.derive_epsilon0(2, 1, LN2 / 2)
    ok = (sh.sigma1 == 2 and abs(eps0 - 0.5) <= 1e-12 and sh.K1 == 0.5 and sh.max_norm == 2
          and sh.K2 == 1 and sh.C0 == 0 and sh.L1 == 1)
    report(capsys, 3, "doubling constants chain", ok,
           f"sigma1={sh.sigma1}, eps0={eps0!r}, K1={sh.K1}, max|Df|={sh.max_norm}, K2={sh.K2}, L1={sh.L1}")


@pytest.mark.parametrize("name", ["doubling", "q1"])
def test_criterion_4_cylinder_contraction(capsys, name):
    F = systems.doubling_family() if name == "doubling" else systems.mostly_expanding_family()
    sh = conditions.constants_sheet(F)
    cyls = cylinders.random_hyperbolic_cylinders(F, 100, 12, sh.c, seed=4)
    viol = 0
    for cyl in cyls:
        rep = cylinders.diameter_decay_check(cyl, sh.c, sh.K2)
        viol += sum(r["diameter"] > r["bound"] + 1e-9 for r in rep["rows"])
    report(capsys, 4, f"cylinder contraction ({name})", len(cyls) == 100 and viol == 0,
           f"{len(cyls)} cylinders, c={sh.c:.6g}, K2={sh.K2:.6g}, {viol} violations")


def test_criterion_5_distortion(capsys):
    aff = systems.triangle_family(1)
    rng = np.random.default_rng(5)
    affine_bad = 0
    for _ in range(20):
        word = tuple(int(v) for v in rng.integers(0, aff.k, int(rng.integers(1, 5))))
        cyl = cylinders.cylinder(aff, word)
        r = cylinders.distortion_ratio(aff, word, cyl.samples[:500], cyl.samples[500:1000], cyl)
        affine_bad += int(np.sum(r != 1.0))
    F = systems.perturbed_doubling_family(0.01)
    L1 = conditions.constants_sheet(F).L1
    viol, words = 0, 0
    for _ in range(20):
        word = tuple(int(v) for v in rng.integers(0, 2, int(rng.integers(1, 9))))
        rep = cylinders.distortion_check(F, word, 1000, L1, seed=words)
        viol += rep["violations"]
        words += 1
    report(capsys, 5, "bounded distortion", affine_bad == 0 and viol == 0,
           f"affine non-unit ratios={affine_bad}; perturbed L1={L1:.6g}, {words} cylinders x 1000 pairs, "
           f"{viol} violations")


def test_criterion_6_hyperbolic_frequency(capsys):
    F = systems.mostly_expanding_family()
    c, eps0 = F.meta["c"], F.meta["epsilon0"]
    exp = expansion.hyperbolic_frequency_experiment(F, 1000, 10 ** 4, c, seed=6)
    good = int(np.sum(exp["frequencies"] >= eps0))
    frac = good / 1000
    report(capsys, 6, "hyperbolic-time frequency (q=1)", frac >= 0.99,
           f"c={c:.6g}, eps0={eps0:.6g}, {good}/1000 starts reach eps0 "
           f"(boundary hits {exp['boundary_hits']}, min freq {exp['frequencies'].min():.4f})")


def test_criterion_7_weak_cycle(capsys):
    fams = {"doubling": systems.doubling_family(), "triangle": systems.triangle_family(1),
            "q1": systems.mostly_expanding_family()}
    fr = {}
    for k, F in fams.items():
        B = irreducibility.default_test_set(F.space, 0.1)
        fr[k] = irreducibility.weak_cycle_test(F, B, 1000, 10, seed=7)["hit_fraction"]
    ctl = systems.two_arc_control()
    crep = irreducibility.weak_cycle_test(ctl, irreducibility.default_test_set(ctl.space, 0.1), 1000, 10, seed=7)
    ok = all(v == 1.0 for v in fr.values()) and crep["hit_fraction"] < 0.6 and crep["flagged"]
    report(capsys, 7, "weak cycle", ok,
           ", ".join(f"{k}={v}" for k, v in fr.items()) + f", control={crep['hit_fraction']} "
           f"(flagged={crep['flagged']})")


def test_criterion_8_ergodicity(capsys):
    t0 = time.perf_counter()
    fams = {"triangle(q=0)": systems.triangle_family(1), "q1": systems.mostly_expanding_family()}
    res = {k: ergodicity.ergodicity_experiment(F, starts=20, n=10 ** 6, seed=8) for k, F in fams.items()}
    ctl = systems.two_arc_control()
    cres = ergodicity.ergodicity_experiment(ctl, starts=20, n=10 ** 6, seed=8)
    g = 256
    probes = {k: ergodicity.invariant_set_probe(F, g) for k, F in fams.items()}
    cprobe = ergodicity.invariant_set_probe(ctl, g)
    ok_exp = all(r.passed for r in res.values()) and not cres.passed
    ok_probe = all(p["pass"] for p in probes.values()) and len(cprobe["measures"]) == 2 and all(
        abs(m - 0.5) <= 2 / g for m in cprobe["measures"])
    elapsed = time.perf_counter() - t0
    detail = (", ".join(f"{k}: max std={r.std.max():.2e} max dev={r.deviation.max():.2e}"
                        for k, r in res.items())
              + f", control pass={cres.passed}; probe measures "
              + ", ".join(f"{k}={p['measures']}" for k, p in probes.items())
              + f", control={cprobe['measures']}; {elapsed:.0f} s. {ergodicity.FALSIFICATION}")
    report(capsys, 8, "ergodicity falsification", ok_exp and ok_probe, detail)
