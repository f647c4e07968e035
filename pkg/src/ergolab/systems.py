"""Generator maps, map families and the triangulation-based example builders."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import ErgolabError
from .geometry import (
    AffineMap,
    Partition,
    PhaseSpace,
    Polytope,
    Region,
    Simplex,
    affine_onto,
    as_number,
    as_point,
    barycentric_subdivision,
    box,
    encode_number,
    intervals_partition,
)


@dataclass(frozen=True)
class AffineBranch:
    """An affine map restricted to a convex cell."""

    cell: Polytope
    amap: AffineMap

    @property
    def singular_values(self):
        return self.amap.singular_values()

    @property
    def smin(self) -> float:
        return float(self.singular_values.min())

    @property
    def smax(self) -> float:
        return float(self.singular_values.max())

    @property
    def log_inv_norm(self) -> float:
        """log ||Df^{-1}|| = -log(smallest singular value)."""
        return -math.log(self.smin)

    @property
    def abs_det(self):
        return abs(self.amap.det)

    def to_dict(self):
        d = self.amap.to_dict()
        d["cell"] = self.cell.to_list()
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(Polytope(tuple(as_point(v) for v in d["cell"])), AffineMap.from_dict(d))


class PiecewiseAffineMap:
    """Globally defined map made of affine branches on convex cells (first matching cell wins).

    On a torus the result is reduced mod 1.
    """

    kind = "piecewise-affine"
    is_affine = True
    alpha = 1.0
    holder_c0 = 0.0

    def __init__(self, branches, space: PhaseSpace, name: str = ""):
        self.branches = tuple(branches)
        self.space = space
        self.name = name
        if not self.branches:
            raise ErgolabError("bad-parameter", "map without branches")

    def __repr__(self):
        return f"PiecewiseAffineMap({self.name!r}, {len(self.branches)} branches)"

    @property
    def dim(self):
        return self.space.dim

    @property
    def exact(self):
        return all(b.amap.exact and b.cell.exact for b in self.branches)

    def branch_index(self, x, tol=1e-12) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.full(len(pts), -1, dtype=np.int64)
        for i, b in enumerate(self.branches):
            free = out < 0
            if not free.any():
                break
            hit = b.cell.contains(pts[free], tol)
            idx = np.flatnonzero(free)[hit]
            out[idx] = i
        if (out < 0).any():
            raise ErgolabError("outside-domain", f"point {pts[out < 0][0]} is in no branch cell")
        return out

    def evaluate(self, x) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        idx = self.branch_index(pts)
        out = np.empty_like(pts)
        for i in np.unique(idx):
            sel = idx == i
            out[sel] = self.branches[i].amap.apply(pts[sel])
        return self.space.wrap(out)

    __call__ = evaluate

    def evaluate_exact(self, point):
        """Exact image of a single rational point (branch chosen by exact containment)."""
        p = as_point(point)
        for b in self.branches:
            if all(sum(n_i * x_i for n_i, x_i in zip(n, p)) <= c for n, c in b.cell.facets):
                y = b.amap(p)
                if self.space.is_torus:
                    y = tuple(v - math.floor(v) for v in y)
                return y
        raise ErgolabError("outside-domain")

    def jacobian(self, x) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        idx = self.branch_index(pts)
        mats = np.stack([b.amap.arrays()[0] for b in self.branches])
        return mats[idx]

    def log_abs_det(self, x) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        vals = np.array([math.log(float(b.abs_det)) for b in self.branches])
        return vals[self.branch_index(pts)]

    def preimages(self, y, within=None):
        """All points x with f(x) = y; ``within`` restricts to points of that Polytope.

        Returns a list of ``(branch index, point array)``.
        """
        yv = np.asarray(y, dtype=float).reshape(-1)
        out = []
        for i, b in enumerate(self.branches):
            inv = b.amap.inverse()
            a_inv, b_inv = inv.arrays()
            shifts = [np.zeros(self.dim)]
            if self.space.is_torus:
                img = b.amap.apply(b.cell.array())
                lo = np.floor(img.min(0) - yv).astype(int)
                hi = np.ceil(img.max(0) - yv).astype(int)
                shifts = [np.array(k, dtype=float) for k in
                          itertools.product(*[range(l, h + 1) for l, h in zip(lo, hi)])]
            for k in shifts:
                x = a_inv @ (yv + k) + b_inv
                if b.cell.contains(x[None, :])[0] and (within is None or within.contains(x[None, :])[0]):
                    if not any(np.allclose(x, o[1], atol=1e-13) for o in out):
                        out.append((i, x))
        return out

    def lattice_compatible(self) -> bool:
        """True when all branch matrices are integer and all data exact (orbits stay on a rational lattice)."""
        if not self.exact:
            return False
        return all(v.denominator == 1 for b in self.branches for row in b.amap.matrix for v in row)

    def to_dict(self):
        return {"kind": self.kind, "name": self.name,
                "branches": [b.to_dict() for b in self.branches]}


class CircleMap:
    """Perturbed doubling x -> 2x + a sin(2 pi x) mod 1 on T^1, a C-infinity expanding map.

    For |a| < 1/(2 pi) it keeps the two full branches [0, 1/2] and [1/2, 1].
    """

    kind = "perturbed-doubling"
    is_affine = False
    alpha = 1.0

    def __init__(self, amplitude: float = 0.01, name: str = ""):
        if not abs(amplitude) < 1 / (2 * math.pi):
            raise ErgolabError("bad-parameter", "amplitude must satisfy |a| < 1/(2 pi)")
        self.amplitude = float(amplitude)
        self.space = PhaseSpace.torus(1)
        self.name = name or f"perturbed-doubling(a={amplitude})"
        self.cells = (box((0,), (Fraction(1, 2),)), box((Fraction(1, 2),), (1,)))

    def __repr__(self):
        return f"CircleMap(a={self.amplitude})"

    dim = 1

    @property
    def holder_c0(self):
        """Lipschitz constant of log|f'|: sup |f''| / inf |f'|."""
        a = abs(self.amplitude)
        return 4 * math.pi ** 2 * a / (2 - 2 * math.pi * a)

    @property
    def smin(self):
        return 2 - 2 * math.pi * abs(self.amplitude)

    @property
    def smax(self):
        return 2 + 2 * math.pi * abs(self.amplitude)

    def _raw(self, x):
        return 2 * x + self.amplitude * np.sin(2 * np.pi * x)

    def evaluate(self, x):
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        return self.space.wrap(self._raw(pts))

    __call__ = evaluate

    def derivative(self, x):
        return 2 + 2 * np.pi * self.amplitude * np.cos(2 * np.pi * np.asarray(x, dtype=float))

    def jacobian(self, x):
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        return self.derivative(pts)[:, :, None]

    def log_abs_det(self, x):
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        return np.log(self.derivative(pts[:, 0]))

    def branch_index(self, x, tol=1e-12):
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        return (pts[:, 0] > 0.5).astype(np.int64)

    def inverse_branch(self, y, branch: int):
        """Solve 2x + a sin(2 pi x) = y + branch for x in the branch cell (vectorized Newton)."""
        target = np.asarray(y, dtype=float) + branch
        x = target / 2
        for _ in range(60):
            step = (self._raw(x) - target) / self.derivative(x)
            x = x - step
            if np.all(np.abs(step) < 1e-16):
                break
        return x

    def preimages(self, y, within=None):
        yv = float(np.asarray(y, dtype=float).reshape(-1)[0])
        out = []
        for br in (0, 1):
            x = np.array([self.inverse_branch(yv, br)])
            if within is None or within.contains(x[None, :])[0]:
                out.append((br, x))
        return out

    def lattice_compatible(self):
        return False

    def to_dict(self):
        return {"kind": self.kind, "name": self.name, "amplitude": self.amplitude}


def map_from_dict(d, space):
    if d["kind"] == "piecewise-affine":
        return PiecewiseAffineMap([AffineBranch.from_dict(b) for b in d["branches"]], space, d.get("name", ""))
    if d["kind"] == "perturbed-doubling":
        return CircleMap(d["amplitude"], d.get("name", ""))
    raise ErgolabError("bad-family", f"unknown map kind {d['kind']!r}")


@dataclass
class MapFamily:
    """Ordered generators f_0..f_{p+q-1}: indices below p expanding, the rest near-neutral.

    Generator i is charted on region i of ``partition``.
    """

    maps: list
    partition: Partition
    p: int
    q: int = 0
    name: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.maps) != self.p + self.q:
            raise ErgolabError("bad-family", "need exactly p+q generators")
        if self.partition is not None and len(self.partition) != len(self.maps):
            raise ErgolabError("bad-family", "generator count must equal region count")

    @property
    def k(self):
        return len(self.maps)

    @property
    def space(self) -> PhaseSpace:
        if self.partition is not None:
            return self.partition.space
        return self.maps[0].space

    @property
    def dim(self):
        return self.space.dim

    @property
    def is_affine(self):
        return all(m.is_affine for m in self.maps)

    def lattice_compatible(self):
        return all(m.lattice_compatible() for m in self.maps)

    def region_branches(self, i):
        """Branches of generator i that meet region i (its chart)."""
        f = self.maps[i]
        region = self.partition.regions[i]
        total = region.volume
        out, covered = [], 0
        # branch cells before any identity fallback are disjoint, so volumes add up;
        # once the region is covered, later (fallback) branches never fire there
        for b in f.branches:
            for poly in region.polytopes:
                piece = b.cell.intersect(poly)
                if piece is not None:
                    out.append((b, piece))
                    covered += piece.volume
            if covered == total or abs(float(covered) - float(total)) <= 1e-12 * float(total):
                break
        return out

    def to_dict(self):
        seen = {}
        maps = []
        for i, m in enumerate(self.maps):
            if id(m) in seen:
                maps.append({"same_as": seen[id(m)]})
            else:
                seen[id(m)] = i
                maps.append(m.to_dict())
        return {"name": self.name, "p": self.p, "q": self.q, "maps": maps,
                "partition": self.partition.to_dict(),
                "meta": {k: _jsonable(v) for k, v in self.meta.items()}}

    @classmethod
    def from_dict(cls, d):
        partition = Partition.from_dict(d["partition"])
        maps = []
        for m in d["maps"]:
            maps.append(maps[m["same_as"]] if "same_as" in m else map_from_dict(m, partition.space))
        return cls(maps, partition, d["p"], d["q"], d.get("name", ""), dict(d.get("meta", {})))


def _jsonable(v):
    if isinstance(v, Fraction):
        return encode_number(v)
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


# --------------------------------------------------------------------------
# Builders
# --------------------------------------------------------------------------

def validate_triangulation(simplices, space: PhaseSpace | None = None):
    """Raise ``bad-triangulation`` unless the simplices are nondegenerate and meet only in common faces."""
    simp = [s if isinstance(s, Simplex) else Simplex(s) for s in simplices]
    if not simp:
        raise ErgolabError("bad-triangulation", "empty triangulation")
    dim = simp[0].dim
    for s in simp:
        if s.dim != dim:
            raise ErgolabError("bad-triangulation", "mixed dimensions")
        if s.degenerate:
            raise ErgolabError("bad-triangulation", "degenerate simplex")
    for a, b in itertools.combinations(simp, 2):
        if a.polytope().intersect(b.polytope()) is not None:
            raise ErgolabError("bad-triangulation", "simplex interiors overlap")
        pb = b.polytope()
        for v in a.vertices:
            if pb.contains(np.array([v], dtype=float), 1e-12)[0] and v not in b.vertices:
                raise ErgolabError("bad-triangulation", f"vertex {v} lies on a face without being a vertex")
    if space is not None and space.is_torus:
        if sum(s.volume for s in simp) != 1:
            raise ErgolabError("bad-triangulation", "simplices must tile the unit torus")
    return simp


def subdivide(s: Simplex, depth: int) -> list[Simplex]:
    pieces = [s]
    for _ in range(depth):
        pieces = [q for p in pieces for q in barycentric_subdivision(p)]
    return pieces


def best_chart(piece: Simplex, whole: Simplex) -> AffineMap:
    """Orientation-preserving affine map of ``piece`` onto ``whole`` with the largest smallest singular value.

    Ties are broken by permutation order, so the choice is deterministic.
    """
    best, best_s = None, -1.0
    for perm in itertools.permutations(range(len(piece.vertices))):
        cand = piece.reordered(perm)
        if cand.orientation != whole.orientation:
            continue
        amap = affine_onto(cand, whole)
        s = float(amap.singular_values().min())
        if s > best_s + 1e-12:
            best, best_s = amap, s
    return best


def _full_branch_map(pieces_with_maps, space, name):
    branches = [AffineBranch(piece.polytope(), amap) for piece, amap in pieces_with_maps]
    if not space.is_torus:
        # identity fallback keeps the map total on any part of M not covered by pieces
        branches += [AffineBranch(c, AffineMap.identity(space.dim)) for c in space.cells]
    return PiecewiseAffineMap(branches, space, name)


def _space_for(t):
    if isinstance(t, PhaseSpace):
        return t, list(t.simplices)
    simp = [s if isinstance(s, Simplex) else Simplex(s) for s in t]
    return PhaseSpace.complex(simp), simp


def build_expanding_family(t, depth: int = 1, name: str = ""):
    """Expanding family with p = k l generators and q = 0.

    ``t`` is a PhaseSpace (its own triangulation is used) or a list of simplices
    forming a simplex complex. Each simplex is subdivided ``depth`` times; every
    piece gets an affine chart onto its simplex. All generators share the
    same full-branch map (the union of the charts), which is the extension rule.
    """
    if depth < 1:
        raise ErgolabError("bad-parameter", "depth must be >= 1")
    space, simplices = _space_for(t)
    validate_triangulation(simplices, space)
    pairs = []
    for s in simplices:
        for piece in subdivide(s, depth):
            pairs.append((piece, best_chart(piece, s)))
    f = _full_branch_map(pairs, space, "full-branch")
    partition = Partition(space, tuple(Region((piece.polytope(),)) for piece, _ in pairs))
    n = len(pairs)
    family = MapFamily([f] * n, partition, p=n, q=0, name=name or f"expanding(d={depth})")
    _attach_default_constants(family)
    return family, partition


def build_mostly_expanding_family(t=None, beta=Fraction(1, 3), name: str = ""):
    """Triangle family with one near-neutral generator (q = 1) and twelve expanding ones.

    The distinguished piece T* = (P0, P1, A) keeps the whole edge P0P1; its apex A
    sits at fraction ``beta`` of the way from the midpoint of P0P1 to P2. Its chart
    fixes P0, P1 and sends A to P2, so |det| = 1/beta. The remaining two triangles
    are barycentrically subdivided into twelve expanding pieces.
    """
    beta = _as_fraction(beta)
    if not 0 < beta < 1:
        raise ErgolabError("bad-parameter", "beta must lie in (0, 1)")
    if t is None:
        t = [Simplex(((0, 0), (1, 0), (0, 1)))]
    space, simplices = _space_for(t)
    if space.dim != 2:
        raise ErgolabError("bad-parameter", "the near-neutral builder needs m = 2")
    validate_triangulation(simplices, space)
    whole = simplices[0]
    p0, p1, p2 = whole.vertices
    mid = tuple((a + b) / 2 for a, b in zip(p0, p1))
    apex = tuple(m + beta * (c - m) for m, c in zip(mid, p2))
    t_star = Simplex((p0, p1, apex))
    h_star = affine_onto(t_star, whole)
    pairs = []
    for rest in (Simplex((p0, apex, p2)), Simplex((apex, p1, p2))):
        for piece in barycentric_subdivision(rest):
            pairs.append((piece, best_chart(piece, whole)))
    smins = [float(m.singular_values().min()) for _, m in pairs]
    if min(smins) <= 1:
        raise ErgolabError("bad-parameter", f"beta={beta} leaves a non-expanding piece")
    pairs.append((t_star, h_star))
    # further simplices of the complex carry the plain expanding construction
    for s in simplices[1:]:
        for piece in barycentric_subdivision(s):
            pairs.insert(len(pairs) - 1, (piece, best_chart(piece, s)))
    f = _full_branch_map(pairs, space, "full-branch")
    partition = Partition(space, tuple(Region((piece.polytope(),)) for piece, _ in pairs))
    n = len(pairs)
    family = MapFamily([f] * n, partition, p=n - 1, q=1, name=name or f"mostly-expanding(beta={beta})")
    family.meta["beta"] = beta
    _attach_default_constants(family)
    c, eps0, eps_hat = family.meta["c"], family.meta["epsilon0"], family.meta["epsilon0_hat"]
    if c <= 0 or eps0 is None or eps0 >= eps_hat:
        raise ErgolabError("bad-parameter", f"beta={beta}: no admissible (c, epsilon0) pair")
    return family, partition


def _as_fraction(v):
    if isinstance(v, Fraction):
        return v
    if isinstance(v, (int, np.integer, str)):
        return Fraction(v)
    return Fraction(float(v)).limit_denominator(10 ** 6)


def _attach_default_constants(family: MapFamily):
    from .conditions import default_c, derive_epsilon0, estimate_sigmas

    s1, s2 = estimate_sigmas(family)
    c, eps_hat = default_c(family, s1, s2)
    family.meta.update({"sigma1": s1, "sigma2": s2, "c": c, "epsilon0_hat": eps_hat,
                        "epsilon0": derive_epsilon0(s1, s2, c) if c > 0 and s1 > 1 else None})


def extend_map(f: AffineMap, region: Region, space: PhaseSpace, siblings=()) -> PiecewiseAffineMap:
    """Globally defined map agreeing with the affine map ``f`` on ``region``.

    On a torus the affine formula taken mod 1 is already global. On a simplex
    complex the sibling branches (other charts of the containing simplex) are
    used where given and the identity elsewhere.
    """
    if abs(float(f.det)) <= 1e-12:
        raise ErgolabError("not-injective", "singular linear part")
    if space.is_torus:
        if float(abs(f.det) * region.volume) > 1 + 1e-12:
            raise ErgolabError("not-injective", "image wraps over itself")
        return PiecewiseAffineMap([AffineBranch(c, f) for c in space.cells], space, "extended")
    branches = [AffineBranch(p, f) for p in region.polytopes]
    branches += [b if isinstance(b, AffineBranch) else AffineBranch(*b) for b in siblings]
    branches += [AffineBranch(c, AffineMap.identity(space.dim)) for c in space.cells]
    return PiecewiseAffineMap(branches, space, "extended")


# --------------------------------------------------------------------------
# Named families
# --------------------------------------------------------------------------

def doubling_family():
    fam, _ = build_expanding_family(PhaseSpace.torus(1), 1, name="doubling")
    return fam


def triangle_family(depth=1):
    fam, _ = build_expanding_family(PhaseSpace.triangle(), depth, name=f"triangle(d={depth})")
    return fam


def mostly_expanding_family(beta=Fraction(1, 3)):
    fam, _ = build_mostly_expanding_family(None, beta)
    return fam


def two_arc_control():
    """Expanding construction on the interval complex [0,1/2] u [1/2,1]: each half is invariant."""
    half = Fraction(1, 2)
    fam, _ = build_expanding_family([Simplex(((0,), (half,))), Simplex(((half,), (1,)))], 1,
                                    name="two-arc-control")
    fam.meta["control"] = True
    return fam


def perturbed_doubling_family(amplitude=0.01):
    f = CircleMap(amplitude)
    part = intervals_partition([0, Fraction(1, 2), 1])
    fam = MapFamily([f, f], part, p=2, q=0, name=f.name)
    c = math.log(f.smin) / 2
    fam.meta.update({"sigma1": f.smin, "sigma2": 1.0, "c": c, "epsilon0_hat": 1.0,
                     "epsilon0": None, "C0": f.holder_c0, "alpha": 1.0})
    from .conditions import derive_epsilon0
    fam.meta["epsilon0"] = derive_epsilon0(f.smin, 1.0, c)
    return fam


def rotation_family(angles=(Fraction(1, 4), Fraction(1, 2))):
    """Isometric control: rigid rotations of T^1 (not expanding, not ergodic for rational angles)."""
    space = PhaseSpace.torus(1)
    maps = [PiecewiseAffineMap([AffineBranch(space.cells[0], AffineMap.make([[1]], [as_number(a)]))],
                               space, f"rotation({a})") for a in angles]
    part = intervals_partition([Fraction(i, len(maps)) for i in range(len(maps) + 1)])
    return MapFamily(maps, part, p=len(maps), q=0, name="rotation-control",
                     meta={"control": True, "c": 0.1})


def identity_family(partition: Partition):
    space = partition.space
    f = PiecewiseAffineMap([AffineBranch(c, AffineMap.identity(space.dim)) for c in space.cells], space, "identity")
    return MapFamily([f] * len(partition), partition, p=len(partition), q=0, name="identity")


def inverse_family(family: MapFamily):
    """Generators are the inverse branches of the distinct maps of ``family`` (one generator per branch).

    Each inverse is defined on the image of its branch cell and extended by the identity.
    """
    space = family.space
    gens = []
    seen = set()
    for m in family.maps:
        if id(m) in seen:
            continue
        seen.add(id(m))
        for b in m.branches:
            if b.amap.det == 1 and all(v == (1 if i == j else 0) for i, row in enumerate(b.amap.matrix)
                                       for j, v in enumerate(row)):
                continue
            inv = b.amap.inverse()
            brs = [AffineBranch(b.cell.affine_image(b.amap), inv)]
            brs += [AffineBranch(c, AffineMap.identity(space.dim)) for c in space.cells]
            gens.append(PiecewiseAffineMap(brs, space, "inverse"))
    return MapFamily(gens, None, p=len(gens), q=0, name=f"inverse({family.name})")
