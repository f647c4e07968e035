"""Orbits, itineraries, log-expansion sums and hyperbolic times."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from numba import njit

from ._engine import compiled
from .errors import BoundaryHit, ErgolabError
from .symbolic import SymbolStream, Word


@dataclass
class OrbitRecord:
    """A realized orbital branch: y_0 = x, y_{j+1} = f_{w_j}(y_j), a_j = log ||Df_{w_j}(y_j)^{-1}||."""

    start: np.ndarray
    symbols: Word
    points: np.ndarray
    a: np.ndarray
    regions: np.ndarray
    status: str = "ok"
    lattice: tuple | None = field(default=None, repr=False)

    @property
    def n(self):
        return len(self.symbols)

    def exact_points(self):
        """Orbit points as Fractions (only for lattice-backed records)."""
        if self.lattice is None:
            raise ErgolabError("not-exact", "record was computed in floating point")
        X, Q = self.lattice
        return [tuple(Fraction(int(v), Q) for v in row) for row in X]

    def partial_sums(self):
        return np.concatenate([[0.0], np.cumsum(self.a)])


def _record(x, raw, k):
    return OrbitRecord(np.atleast_1d(np.asarray(x, dtype=float)), Word(tuple(raw["symbols"].tolist()), k),
                       raw["points"], raw["a"], raw["regions"], raw["status"], raw.get("lattice"))


def _family_for(F, P):
    if P is None or P is F.partition:
        return F
    from .systems import MapFamily
    return MapFamily(F.maps, P, F.p, F.q, F.name, dict(F.meta))


def iterate(F, x, s: SymbolStream | None, n: int) -> OrbitRecord:
    """Orbit of ``x`` under the symbols of ``s`` (``None`` or an itinerary stream: itinerary rule)."""
    if n < 0:
        raise ErgolabError("bad-parameter", "n must be >= 0")
    cf = compiled(F)
    itin = s is None or (s.kind == "itinerary" and s.family is F and s.offset == 0
                         and np.allclose(np.asarray(s.start, dtype=float), np.atleast_1d(np.asarray(x, dtype=float))))
    syms = None if itin else s.symbols(0, n)
    raw = cf.run(x, n, syms)
    rec = _record(x, raw, F.k)
    if raw["status"] == "boundary-start":
        raise BoundaryHit(0, rec, code="boundary-start")
    if raw["status"] == "boundary-hit":
        raise BoundaryHit(raw["steps"], rec)
    if raw["status"] != "ok":
        raise ErgolabError(raw["status"], f"orbit left the modeled domain at step {raw['steps']}")
    return rec


def orbit(F, x, n, symbols=None) -> OrbitRecord:
    """Like :func:`iterate` but never raises on skeleton hits; the record's status tells."""
    raw = compiled(F).run(x, n, symbols)
    return _record(x, raw, F.k)


def itinerary(F, P, x, n: int) -> Word:
    """Symbols (w_0..w_{n-1}) with y_j in R_{w_j} and y_{j+1} = f_{w_j}(y_j)."""
    fam = _family_for(F, P)
    raw = compiled(fam).run(x, n, None)
    if raw["status"] != "ok":
        raise BoundaryHit(raw["steps"], _record(x, raw, fam.k),
                          code="boundary-hit" if raw["status"].startswith("boundary") else raw["status"])
    return Word(tuple(raw["symbols"].tolist()), fam.k)


# --------------------------------------------------------------------------
# Hyperbolic times
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class HyperbolicTimeSet:
    c: float
    times: np.ndarray
    horizon: int

    def __contains__(self, n):
        return bool(np.isin(n, self.times))

    def __len__(self):
        return len(self.times)

    def tolist(self):
        return self.times.tolist()


def pliss_times(a, c) -> HyperbolicTimeSet:
    """All n with sum_{j=n-k}^{n-1} a_j <= -c k for every 1 <= k <= n.

    With T_i = S_i + c i (S the partial sums) the condition reads T_n <= min_{i<n} T_i,
    so one running-minimum pass decides every n.
    """
    if not c > 0:
        raise ErgolabError("bad-parameter", "c must be positive")
    a = np.asarray(a, dtype=float)
    N = len(a)
    if N == 0:
        return HyperbolicTimeSet(float(c), np.zeros(0, dtype=np.int64), 0)
    T = np.concatenate([[0.0], np.cumsum(a)]) + c * np.arange(N + 1)
    prior_min = np.minimum.accumulate(T[:-1])
    times = np.flatnonzero(T[1:] <= prior_min) + 1
    return HyperbolicTimeSet(float(c), times.astype(np.int64), N)


@njit(cache=True)
def _brute(a, c, out):
    N = a.shape[0]
    for n in range(1, N + 1):
        ok = True
        for k in range(1, n + 1):
            s = 0.0
            for j in range(n - k, n):
                s += a[j]
            if s > -c * k:
                ok = False
                break
        out[n - 1] = ok


def pliss_times_bruteforce(a, c) -> HyperbolicTimeSet:
    """Literal double loop over (n, k), recomputing each window sum."""
    if not c > 0:
        raise ErgolabError("bad-parameter", "c must be positive")
    a = np.ascontiguousarray(a, dtype=float)
    out = np.zeros(len(a), dtype=np.bool_)
    if len(a):
        _brute(a, float(c), out)
    return HyperbolicTimeSet(float(c), (np.flatnonzero(out) + 1).astype(np.int64), len(a))


def hyperbolic_frequency(H: HyperbolicTimeSet, n: int) -> float:
    if n < 1:
        raise ErgolabError("bad-parameter", "horizon must be >= 1")
    return float(np.count_nonzero(H.times <= n)) / n


def expanding_fraction(rec: OrbitRecord, p: int) -> float:
    """Fraction of the steps 0..n-1 spent in the expanding regions R_0..R_{p-1}."""
    regs = np.asarray(rec.regions)[: rec.n]
    if len(regs) == 0:
        return 1.0
    return float(np.count_nonzero(regs < p)) / len(regs)


def nue_ladder(n):
    ladder = [10 ** e for e in range(1, int(math.log10(max(n, 1))) + 1) if 10 ** e < n]
    return ladder + [n]


def check_orbital_nue(rec: OrbitRecord, c) -> dict:
    """Averages S_n/n along a horizon ladder and the flag S_N/N <= -c at the horizon."""
    if rec.n < 1:
        raise ErgolabError("bad-parameter", "record needs n >= 1")
    S = rec.partial_sums()
    ladder = nue_ladder(rec.n)
    avgs = {int(m): float(S[m] / m) for m in ladder}
    final = avgs[rec.n]
    return {"c": float(c), "averages": avgs, "final_average": final, "pass": final <= -c,
            "liminf_over_ladder": min(avgs.values())}


def pliss_bound(c, A):
    """Lower bound on the density of hyperbolic times at level c/2 for averages <= -c with terms >= -A."""
    return (c / 2) / (A - c / 2)


def hyperbolic_frequency_experiment(F, starts, n, c, seed=0):
    """Itinerary orbits from ``starts`` random points: hyperbolic-time frequency and expanding fraction per start."""
    rng = np.random.default_rng(seed)
    pts = F.space.sample(starts, rng)
    freqs, fracs, avgs, hits = [], [], [], 0
    for x in pts:
        rec = orbit(F, x, n)
        if rec.status != "ok":
            hits += 1
            continue
        H = pliss_times(rec.a, c)
        freqs.append(hyperbolic_frequency(H, n))
        fracs.append(expanding_fraction(rec, F.p))
        avgs.append(float(rec.a.mean()))
    return {"c": float(c), "horizon": n, "starts": starts, "boundary_hits": hits,
            "frequencies": np.array(freqs), "expanding_fractions": np.array(fracs), "averages": np.array(avgs)}
