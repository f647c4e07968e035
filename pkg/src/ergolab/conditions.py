"""Partition validity, the Markov property, (A0)-(A3) and the derived constants."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import ErgolabError
from .geometry import Partition, Polytope, box, encode_number, inner_diameter, singular_values

SAMPLED_TOL = 1e-9


def _vol_float(v):
    return float(v)


# --------------------------------------------------------------------------
# Topological partition
# --------------------------------------------------------------------------

def validate_topological_partition(P: Partition, samples: int = 20000, seed: int = 0) -> dict:
    """Open / pairwise disjoint / closures cover M, with witness points for failures."""
    space = P.space
    report = {"open": True, "disjoint": True, "covers": True, "witnesses": {}}
    for i, r in enumerate(P.regions):
        if float(r.volume) <= 0:
            report["open"] = False
            report["witnesses"].setdefault("open", []).append({"region": i})
    cells = P.cell_list
    for (a, i), (b, j) in itertools.combinations(cells, 2):
        if i == j:
            continue
        inter = a.intersect(b)
        if inter is not None:
            report["disjoint"] = False
            report["witnesses"].setdefault("disjoint", []).append(
                {"regions": [i, j], "point": [encode_number(v) for v in inter.centroid]})
    gap = _find_gap(P, samples, seed)
    if gap is not None:
        report["covers"] = False
        report["witnesses"]["covers"] = [{"point": gap}]
    report["pass"] = report["open"] and report["disjoint"] and report["covers"]
    report["method"] = "exact" if all(p.exact for p, _ in cells) else f"sampled(N={samples})"
    return report


def _find_gap(P, samples, seed):
    space = P.space
    if space.dim == 1:
        # exact: walk the complement of the union of closures inside each cell of M
        for cell in space.cells:
            lo, hi = cell.vertices[0][0], cell.vertices[1][0]
            ivs = sorted((p.vertices[0][0], p.vertices[1][0]) for p, _ in P.cell_list)
            cur = lo
            for a, b in ivs:
                if b <= cur:
                    continue
                if a > cur and a > lo:
                    return [encode_number((cur + min(a, hi)) / 2)]
                cur = max(cur, b)
                if cur >= hi:
                    break
            if cur < hi:
                return [encode_number((cur + hi) / 2)]
        return None
    rng = np.random.default_rng(seed)
    pts = space.sample(samples, rng)
    loc = P.locate(pts)
    miss = np.flatnonzero(loc == -2)
    if len(miss):
        return [float(v) for v in pts[miss[0]]]
    return None


# --------------------------------------------------------------------------
# Markov property
# --------------------------------------------------------------------------

def region_image(F, i) -> list[Polytope]:
    """f_i(R_i) as polytopes in the fundamental domain (exact for exact affine data)."""
    space = F.space
    out = []
    for b, piece in F.region_branches(i):
        img = piece.affine_image(b.amap)
        if not space.is_torus:
            out.append(img)
            continue
        unit = box((0,) * space.dim, (1,) * space.dim)
        lo, hi = img.bbox()
        for k in itertools.product(*[range(-math.ceil(h), -math.floor(l) + 1) for l, h in zip(lo, hi)]):
            clipped = img.translate(k).intersect(unit)
            if clipped is not None:
                out.append(clipped)
    return out


def check_markov(P: Partition, F, samples: int = 4000, seed: int = 0) -> dict:
    """Status of every pair (i, j): disjoint, contains (f_i(R_i) > R_j) or VIOLATION."""
    if len(P) != F.k:
        raise ErgolabError("bad-family", "partition and family sizes differ")
    fam = F if P is F.partition else _with_partition(F, P)
    n = len(P)
    status = [[None] * n for _ in range(n)]
    violations = []
    exact = fam.is_affine and all(p.exact for p, _ in P.cell_list) and all(
        b.amap.exact for m in fam.maps for b in m.branches)
    for i in range(n):
        if fam.is_affine:
            images = region_image(fam, i)
            for j, r in enumerate(P.regions):
                covered = 0
                for img in images:
                    for poly in r.polytopes:
                        inter = img.intersect(poly)
                        if inter is not None:
                            covered += inter.volume
                vol = r.volume
                if covered == 0 or (not exact and float(covered) <= SAMPLED_TOL * float(vol)):
                    st = "disjoint"
                elif covered == vol or (not exact and abs(float(covered) - float(vol)) <= SAMPLED_TOL * float(vol)):
                    st = "contains"
                else:
                    st = "VIOLATION"
                status[i][j] = st
        else:
            rng = np.random.default_rng([seed, i])
            for j, r in enumerate(P.regions):
                pts = r.sample(samples // n + 16, rng)
                hit = np.array([bool(fam.maps[i].preimages(y, within=_region_hull(P, i))) for y in pts])
                status[i][j] = "contains" if hit.all() else ("disjoint" if not hit.any() else "VIOLATION")
        for j in range(n):
            if status[i][j] == "VIOLATION":
                violations.append([i, j])
    return {"status": status, "violations": violations, "pass": not violations,
            "method": "exact" if exact else ("vertex-images" if fam.is_affine else
                                             f"sampled(N={samples}, tol={SAMPLED_TOL})")}


def _region_hull(P, i):
    class _Within:
        def contains(self, x):
            return P.regions[i].contains(x)
    return _Within()


def _with_partition(F, P):
    from .systems import MapFamily
    return MapFamily(F.maps, P, F.p, F.q, F.name, dict(F.meta))


@dataclass
class NFoldResult:
    holds: bool
    vacuous: bool
    chain: list
    cylinder_nonempty: bool | None = None

    def __bool__(self):
        return self.holds


def check_nfold_intersection(P: Partition, F, word, samples: int = 100000) -> NFoldResult:
    """Consecutive intersections f_{w_j}(R_{w_j}) n R_{w_{j+1}} nonempty  =>  cylinder C^n[w] nonempty."""
    from .cylinders import cylinder

    w = list(word)
    if len(w) < 3:
        raise ErgolabError("word-too-short", "the n-fold property needs n >= 3")
    fam = F if P is F.partition else _with_partition(F, P)
    markov = check_markov(P, fam)
    chain = []
    for a, b in zip(w, w[1:]):
        st = markov["status"][a][b]
        chain.append({"from": a, "to": b, "status": st})
        if st == "disjoint":
            return NFoldResult(True, True, chain)
    cyl = cylinder(fam, w, samples=samples)
    nonempty = not cyl.empty
    return NFoldResult(nonempty, False, chain, nonempty)


# --------------------------------------------------------------------------
# Expansion constants
# --------------------------------------------------------------------------

def _smin_on_region(F, i, samples, rng):
    f = F.maps[i]
    if f.is_affine:
        return min(b.smin for b, _ in F.region_branches(i))
    pts = F.partition.regions[i].sample(samples, rng)
    jac = f.jacobian(pts)
    return float(singular_values(jac).min(axis=1).min())


def _smax_on_region(F, i, samples, rng):
    f = F.maps[i]
    if f.is_affine:
        return max(b.smax for b, _ in F.region_branches(i))
    pts = F.partition.regions[i].sample(samples, rng)
    jac = f.jacobian(pts)
    return float(singular_values(jac).max(axis=1).max())


def estimate_sigmas(F, samples: int = 1000, seed: int = 0):
    """(sigma1, sigma2): worst expansion over R_0..R_{p-1}, worst inverse contraction over the rest.

    Exact for affine families (constant Jacobians). sigma2 is reported as 1 when q = 0.
    """
    if samples < 1:
        raise ErgolabError("bad-parameter", "samples must be >= 1")
    rng = np.random.default_rng(seed)
    s1 = min(_smin_on_region(F, i, samples, rng) for i in range(F.p)) if F.p else math.inf
    s2 = 1.0
    for j in range(F.p, F.p + F.q):
        s2 = max(s2, 1.0 / _smin_on_region(F, j, samples, rng))
    return float(s1), float(s2)


def check_det_condition(F, samples: int = 1000, seed: int = 0) -> bool:
    """|det Df_{p+j}| > q on R_{p+j} for every near-neutral generator."""
    if F.q < 1:
        raise ErgolabError("bad-parameter", "needs q >= 1")
    rng = np.random.default_rng(seed)
    for j in range(F.p, F.p + F.q):
        f = F.maps[j]
        if f.is_affine:
            if not all(b.abs_det > F.q for b, _ in F.region_branches(j)):
                return False
            continue
        pts = F.partition.regions[j].sample(samples, rng)
        if not np.all(np.exp(f.log_abs_det(pts)) > F.q):
            return False
    return True


def derive_epsilon0(sigma1, sigma2, c):
    """Smallest eps0 with sigma1^-eps0 sigma2^(1-eps0) <= e^-c, or None unless it lies in (0, 1)."""
    if not (sigma1 > 1 and sigma2 >= 1 and c > 0):
        raise ErgolabError("bad-constants", "need sigma1 > 1, sigma2 >= 1, c > 0")
    l1, l2 = math.log(sigma1), math.log(sigma2)
    eps = (c + l2) / (l1 + l2)
    return eps if 0 < eps < 1 else None


def bootstrap_expanding_fraction(F, starts: int = 64, n: int = 4096, seed: int = 20240601) -> float:
    """Smallest fraction of time spent in R_0..R_{p-1} over seeded itinerary orbits."""
    from .expansion import expanding_fraction, orbit

    rng = np.random.default_rng(seed)
    fracs = []
    for x in F.space.sample(starts, rng):
        rec = orbit(F, x, n)
        if rec.n:
            fracs.append(expanding_fraction(rec, F.p))
    return min(fracs) if fracs else 0.0


def default_c(F, sigma1=None, sigma2=None):
    """c = (eps_hat ln sigma1 - (1 - eps_hat) ln sigma2) / 2, with eps_hat the (bootstrapped) expanding fraction.

    Returns ``(c, eps_hat)``; eps_hat = 1 when q = 0.
    """
    if sigma1 is None:
        sigma1, sigma2 = estimate_sigmas(F)
    eps_hat = 1.0 if F.q == 0 else bootstrap_expanding_fraction(F)
    if not sigma1 > 1:
        return 0.0, eps_hat
    c = 0.5 * (eps_hat * math.log(sigma1) - (1 - eps_hat) * math.log(sigma2))
    return c, eps_hat


def K1_bound(F, samples: int = 64):
    """Largest inner diameter over the region closures."""
    return max(inner_diameter(r, samples, space=F.space) for r in F.partition.regions)


def max_derivative_norm(F, samples: int = 1000, seed: int = 0):
    rng = np.random.default_rng(seed)
    return max(_smax_on_region(F, i, samples, rng) for i in range(F.k))


def L1_bound(C0, alpha, K2, c):
    """exp(C0 K2^alpha sum_i e^{-i c alpha / 2}) in closed form."""
    if not (c * alpha > 0):
        raise ErgolabError("bad-constants", "c * alpha must be positive")
    expo = C0 * K2 ** alpha / -math.expm1(-c * alpha / 2)
    return math.exp(expo) if expo < 700 else math.inf


# --------------------------------------------------------------------------
# Constants sheet
# --------------------------------------------------------------------------

@dataclass
class ConstantsSheet:
    values: dict
    provenance: dict = field(default_factory=dict)

    def __getattr__(self, name):
        try:
            return self.__dict__["values"][name]
        except KeyError:
            raise AttributeError(name) from None

    def recheck(self) -> dict:
        v = self.values
        out = {"sigma1>1": v["sigma1"] > 1, "sigma2>=1": v["sigma2"] >= 1}
        out["K2=K1*maxDf"] = math.isclose(v["K2"], v["K1"] * v["max_norm"], rel_tol=1e-12)
        if v["c"] > 0 and v["alpha"] > 0:
            out["L1 formula"] = math.isclose(v["L1"], L1_bound(v["C0"], v["alpha"], v["K2"], v["c"]), rel_tol=1e-12)
        if v["epsilon0"] is not None:
            lhs = -v["epsilon0"] * math.log(v["sigma1"]) + (1 - v["epsilon0"]) * math.log(v["sigma2"])
            out["eps0 inequality"] = lhs <= -v["c"] + 1e-12
        else:
            out["eps0 inequality"] = False
        return out

    def to_dict(self):
        return {k: {"value": self.values[k], **self.provenance.get(k, {"provenance": "exact"})}
                for k in self.values}


def constants_sheet(F, c=None, samples: int = 1000, with_r: bool = False) -> ConstantsSheet:
    c = F.meta.get("c") if c is None else c
    if c is None:
        c, _ = default_c(F)
    sampled = {"provenance": "sampled", "N": samples, "tolerance": SAMPLED_TOL}
    exact = {"provenance": "exact"}
    affine = F.is_affine
    s1, s2 = estimate_sigmas(F, samples)
    K1 = K1_bound(F)
    mx = max_derivative_norm(F, samples)
    K2 = K1 * mx
    C0 = max(getattr(m, "holder_c0", 0.0) for m in F.maps)
    alpha = min(getattr(m, "alpha", 1.0) for m in F.maps)
    eps0 = derive_epsilon0(s1, s2, c) if (s1 > 1 and c > 0) else None
    L1 = L1_bound(C0, alpha, K2, c) if c > 0 else math.inf
    vals = {"sigma1": s1, "sigma2": s2, "c": float(c), "epsilon0": eps0, "K1": K1, "max_norm": mx,
            "K2": K2, "C0": C0, "alpha": alpha, "L1": L1, "L2": L1, "r": None}
    prov = {k: dict(exact if affine else sampled) for k in vals}
    prov["c"] = {"provenance": "configured"}
    prov["epsilon0"] = {"provenance": "derived"}
    prov["L1"] = {"provenance": "derived"}
    prov["L2"] = {"provenance": "derived", "note": "taken equal to L1"}
    prov["K1"] = {"provenance": "exact" if all(len(r.polytopes) == 1 for r in F.partition.regions) else "sampled"}
    if not affine:
        prov["C0"] = {"provenance": "declared"}
        prov["alpha"] = {"provenance": "declared"}
    if with_r and c > 0:
        from .cylinders import estimate_r
        vals["r"] = estimate_r(F, c)
        prov["r"] = {"provenance": "sampled", "note": "largest dyadic radius passing the derivative comparison"}
    return ConstantsSheet(vals, prov)


def check_family(F, c=None, samples: int = 1000) -> dict:
    """(A0)-(A3) plus the partition checks for a family and its partition."""
    P = F.partition
    part = validate_topological_partition(P)
    report = {"partition": part}
    diam = [inner_diameter(r, 64, space=F.space) for r in P.regions]
    report["A0"] = {"pass": part["pass"] and all(math.isfinite(d) for d in diam),
                    "inner_diameters": diam, "boundary_null": True}
    markov = check_markov(P, F)
    report["A1"] = markov
    c = F.meta.get("c") if c is None else c
    s1, s2 = estimate_sigmas(F, samples)
    eps0 = derive_epsilon0(s1, s2, c) if (s1 > 1 and c is not None and c > 0) else None
    a2 = {"sigma1": s1, "sigma2": s2, "c": c, "epsilon0": eps0, "pass": s1 > 1 and eps0 is not None}
    if not s1 > 1:
        a2["flag"] = "not-expanding"
    elif eps0 is None:
        a2["flag"] = "no-epsilon0"
    report["A2"] = a2
    report["A3"] = {"pass": check_det_condition(F, samples)} if F.q >= 1 else {"pass": True, "note": "q = 0"}
    sheet = constants_sheet(F, c if c and c > 0 else None, samples) if s1 > 1 and c and c > 0 else None
    report["constants"] = sheet.to_dict() if sheet else None
    report["pass"] = all(report[k]["pass"] for k in ("A0", "A1", "A2", "A3"))
    return report
