"""Flat phase spaces, convex polytopes, partitions and barycentric subdivision.

Coordinates may be ``fractions.Fraction`` (exact) or ``float``. Every routine
that only adds, multiplies and compares works for both, so the family builders keep
exact vertex arithmetic while the simulation code runs on floats.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import ErgolabError

BOUNDARY_TOL = 1e-12
_VOLUME_EPS = 1e-14


def as_number(v):
    """Coerce to Fraction when the value is exactly representable as such, else float."""
    if isinstance(v, Fraction):
        return v
    if isinstance(v, (bool, np.bool_)):
        raise TypeError("boolean is not a coordinate")
    if isinstance(v, (int, np.integer)):
        return Fraction(int(v))
    if isinstance(v, str):
        return Fraction(v)
    return float(v)


def as_point(p) -> tuple:
    if isinstance(p, (int, float, Fraction, str, np.integer, np.floating)):
        return (as_number(p),)
    return tuple(as_number(c) for c in p)


def is_exact(values: Iterable) -> bool:
    return all(isinstance(v, Fraction) for v in values)


def encode_number(v):
    """JSON-friendly encoding: exact rationals as ``"p/q"`` strings."""
    if isinstance(v, Fraction):
        return v.numerator if v.denominator == 1 else f"{v.numerator}/{v.denominator}"
    return float(v)


def _dot(a, b):
    return sum(x * y for x, y in zip(a, b))


def _sub(a, b):
    return tuple(x - y for x, y in zip(a, b))


def _det(rows: Sequence[Sequence]):
    n = len(rows)
    if n == 1:
        return rows[0][0]
    if n == 2:
        return rows[0][0] * rows[1][1] - rows[0][1] * rows[1][0]
    raise ValueError("only dimensions 1 and 2 are supported")


def singular_values(a) -> np.ndarray:
    """Singular values of one or a stack of 1x1 / 2x2 matrices, largest first, in closed form."""
    a = np.asarray(a, dtype=float)
    if a.shape[-2:] == (1, 1):
        return np.abs(a[..., 0, :])
    if a.shape[-2:] != (2, 2):
        raise ErgolabError("bad-parameter", "singular values only for 1x1 and 2x2 matrices")
    fro = (a ** 2).sum(axis=(-2, -1))
    det = np.abs(a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0])
    # s1^2 + s2^2 = |A|_F^2 and s1 s2 = |det A|
    gap = np.sqrt(np.maximum(fro ** 2 - 4 * det ** 2, 0.0))
    s1 = np.sqrt((fro + gap) / 2)
    s2 = np.where(s1 > 0, det / np.where(s1 > 0, s1, 1.0), 0.0)
    return np.stack([s1, s2], axis=-1)


def mat_inverse(m: Sequence[Sequence]):
    """Gauss-Jordan inverse, exact for Fraction entries."""
    n = len(m)
    aug = [list(row) + [Fraction(int(i == j)) for j in range(n)] for i, row in enumerate(m)]
    for col in range(n):
        piv = max(range(col, n), key=lambda r: abs(aug[r][col]))
        if aug[piv][col] == 0:
            raise ErgolabError("singular-matrix")
        aug[col], aug[piv] = aug[piv], aug[col]
        p = aug[col][col]
        aug[col] = [v / p for v in aug[col]]
        for r in range(n):
            if r != col and aug[r][col] != 0:
                f = aug[r][col]
                aug[r] = [a - f * b for a, b in zip(aug[r], aug[col])]
    return tuple(tuple(row[n:]) for row in aug)


def mat_mul(a, b):
    return tuple(tuple(sum(a[i][k] * b[k][j] for k in range(len(b))) for j in range(len(b[0])))
                 for i in range(len(a)))


def mat_vec(a, v):
    return tuple(sum(a[i][k] * v[k] for k in range(len(v))) for i in range(len(a)))


# --------------------------------------------------------------------------
# Affine maps
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class AffineMap:
    """x -> matrix @ x + offset, stored exactly when built from exact data."""

    matrix: tuple
    offset: tuple

    @classmethod
    def make(cls, matrix, offset):
        mat = tuple(tuple(as_number(v) for v in row) for row in np.atleast_2d(np.asarray(matrix, dtype=object)))
        off = as_point(offset)
        return cls(mat, off)

    @classmethod
    def identity(cls, dim):
        return cls(tuple(tuple(Fraction(int(i == j)) for j in range(dim)) for i in range(dim)),
                   tuple(Fraction(0) for _ in range(dim)))

    @property
    def dim(self):
        return len(self.offset)

    @property
    def exact(self):
        return is_exact(itertools.chain(self.offset, *self.matrix))

    @property
    def det(self):
        return _det(self.matrix)

    def __call__(self, point):
        return tuple(a + b for a, b in zip(mat_vec(self.matrix, as_point(point)), self.offset))

    def apply(self, x: np.ndarray) -> np.ndarray:
        a, b = self.arrays()
        return np.asarray(x, dtype=float) @ a.T + b

    def arrays(self):
        return (np.array(self.matrix, dtype=float), np.array(self.offset, dtype=float))

    def inverse(self) -> "AffineMap":
        inv = mat_inverse(self.matrix)
        return AffineMap(inv, tuple(-v for v in mat_vec(inv, self.offset)))

    def compose(self, inner: "AffineMap") -> "AffineMap":
        """Return self o inner."""
        return AffineMap(mat_mul(self.matrix, inner.matrix),
                         tuple(a + b for a, b in zip(mat_vec(self.matrix, inner.offset), self.offset)))

    def singular_values(self) -> np.ndarray:
        return singular_values(self.arrays()[0])

    def to_dict(self):
        return {"matrix": [[encode_number(v) for v in row] for row in self.matrix],
                "offset": [encode_number(v) for v in self.offset]}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(tuple(as_number(v) for v in row) for row in d["matrix"]),
                   tuple(as_number(v) for v in d["offset"]))


# --------------------------------------------------------------------------
# Convex polytopes (dimension 1 or 2)
# --------------------------------------------------------------------------

def _order_ccw(verts):
    if len(verts) < 3:
        return verts
    cx = sum(float(v[0]) for v in verts) / len(verts)
    cy = sum(float(v[1]) for v in verts) / len(verts)
    return sorted(verts, key=lambda v: math.atan2(float(v[1]) - cy, float(v[0]) - cx))


def _dedupe_cycle(verts):
    out = []
    for v in verts:
        if not out or v != out[-1]:
            out.append(v)
    while len(out) > 1 and out[0] == out[-1]:
        out.pop()
    return out


@dataclass(frozen=True)
class Polytope:
    """Convex polytope given by its vertices (an interval in 1D, a CCW polygon in 2D)."""

    vertices: tuple

    def __post_init__(self):
        verts = [as_point(v) for v in self.vertices]
        if not verts:
            raise ErgolabError("empty-region", "polytope without vertices")
        dim = len(verts[0])
        if dim == 1:
            lo = min(verts, key=lambda v: v[0])
            hi = max(verts, key=lambda v: v[0])
            verts = [lo, hi]
        elif dim == 2:
            verts = _dedupe_cycle(verts)
            if _signed_area(verts) < 0:
                verts = verts[::-1]
            if len(verts) > 3 and not _is_ccw_convex(verts):
                verts = _order_ccw(verts)
        else:
            raise ErgolabError("dimension-mismatch", "only 1D and 2D polytopes are supported")
        object.__setattr__(self, "vertices", tuple(verts))

    @property
    def dim(self):
        return len(self.vertices[0])

    @property
    def exact(self):
        return is_exact(itertools.chain(*self.vertices))

    @cached_property
    def volume(self):
        if self.dim == 1:
            return self.vertices[1][0] - self.vertices[0][0]
        return _signed_area(self.vertices)

    @property
    def centroid(self):
        n = len(self.vertices)
        return tuple(sum(v[i] for v in self.vertices) / n for i in range(self.dim))

    def as_float(self) -> "Polytope":
        return Polytope(tuple(tuple(float(c) for c in v) for v in self.vertices))

    def array(self) -> np.ndarray:
        return np.array(self.vertices, dtype=float)

    @cached_property
    def facets(self):
        """Half-spaces ``(normal, offset)`` with ``normal . x <= offset`` describing the polytope."""
        if self.dim == 1:
            lo, hi = self.vertices[0][0], self.vertices[1][0]
            return ((( -1,), -lo), ((1,), hi))
        out = []
        vs = self.vertices
        for a, b in zip(vs, vs[1:] + vs[:1]):
            n = (b[1] - a[1], a[0] - b[0])
            out.append((n, _dot(n, a)))
        return tuple(out)

    def facet_arrays(self):
        """Unit outward normals and offsets as float arrays."""
        normals = np.array([f[0] for f in self.facets], dtype=float)
        offsets = np.array([float(f[1]) for f in self.facets])
        norm = np.linalg.norm(normals, axis=1)
        return normals / norm[:, None], offsets / norm

    def contains(self, points, tol=BOUNDARY_TOL) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        n, c = self.facet_arrays()
        return np.all(pts @ n.T - c <= tol, axis=1)

    def signed_distance(self, points) -> np.ndarray:
        """Per facet: positive inside. Shape (N, facets)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        n, c = self.facet_arrays()
        return c - pts @ n.T

    def clip(self, normal, offset) -> "Polytope | None":
        """Intersection with the half-space ``normal . x <= offset`` (None if it has no volume)."""
        if self.dim == 1:
            lo, hi = self.vertices[0][0], self.vertices[1][0]
            a = normal[0]
            if a == 0:
                return self if offset >= 0 else None
            bound = offset / a
            if a > 0:
                hi = min(hi, bound)
            else:
                lo = max(lo, bound)
            return _make_or_none([(lo,), (hi,)])
        out = []
        vs = self.vertices
        for p, q in zip(vs, vs[1:] + vs[:1]):
            sp = offset - _dot(normal, p)
            sq = offset - _dot(normal, q)
            if sp >= 0:
                out.append(p)
            if (sp > 0 and sq < 0) or (sp < 0 and sq > 0):
                t = sp / (sp - sq)
                out.append(tuple(pi + (qi - pi) * t for pi, qi in zip(p, q)))
        return _make_or_none(out)

    def intersect(self, other: "Polytope") -> "Polytope | None":
        cur = self
        for n, c in other.facets:
            cur = cur.clip(n, c)
            if cur is None:
                return None
        return cur

    def affine_image(self, amap: AffineMap) -> "Polytope":
        return Polytope(tuple(amap(v) for v in self.vertices))

    def translate(self, shift) -> "Polytope":
        s = as_point(shift)
        return Polytope(tuple(tuple(a + b for a, b in zip(v, s)) for v in self.vertices))

    def bbox(self):
        lo = tuple(min(v[i] for v in self.vertices) for i in range(self.dim))
        hi = tuple(max(v[i] for v in self.vertices) for i in range(self.dim))
        return lo, hi

    @property
    def diameter(self) -> float:
        pts = self.array()
        d = pts[:, None, :] - pts[None, :, :]
        return float(np.sqrt((d ** 2).sum(-1)).max())

    def sample(self, n, rng) -> np.ndarray:
        pts = self.array()
        if self.dim == 1:
            return rng.uniform(pts[0, 0], pts[1, 0], size=(n, 1))
        tris = [(pts[0], pts[i], pts[i + 1]) for i in range(1, len(pts) - 1)]
        areas = np.array([abs((b - a)[0] * (c - a)[1] - (b - a)[1] * (c - a)[0]) / 2 for a, b, c in tris])
        which = rng.choice(len(tris), size=n, p=areas / areas.sum())
        u = rng.random((n, 2))
        flip = u.sum(1) > 1
        u[flip] = 1 - u[flip]
        a = np.array([tris[w][0] for w in which])
        b = np.array([tris[w][1] for w in which])
        c = np.array([tris[w][2] for w in which])
        return a + u[:, :1] * (b - a) + u[:, 1:] * (c - a)

    def to_list(self):
        return [[encode_number(c) for c in v] for v in self.vertices]


def _signed_area(verts):
    s = 0
    for a, b in zip(verts, verts[1:] + verts[:1]):
        s += a[0] * b[1] - a[1] * b[0]
    return s / 2


def _is_ccw_convex(verts):
    n = len(verts)
    for i in range(n):
        a, b, c = verts[i], verts[(i + 1) % n], verts[(i + 2) % n]
        if (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0]) < 0:
            return False
    return True


def _make_or_none(verts):
    if not verts:
        return None
    dim = len(verts[0])
    if dim == 1:
        lo, hi = verts[0][0], verts[1][0]
        if hi - lo <= 0 or (not is_exact((lo, hi)) and hi - lo < _VOLUME_EPS):
            return None
        return Polytope(((lo,), (hi,)))
    verts = _dedupe_cycle(list(verts))
    if len(verts) < 3:
        return None
    area = _signed_area(verts)
    exact = is_exact(itertools.chain(*verts))
    if area <= 0 if exact else area < _VOLUME_EPS:
        return None
    return Polytope(tuple(verts))


def box(lo, hi) -> Polytope:
    lo, hi = as_point(lo), as_point(hi)
    if len(lo) == 1:
        return Polytope((lo, hi))
    return Polytope(((lo[0], lo[1]), (hi[0], lo[1]), (hi[0], hi[1]), (lo[0], hi[1])))


def interval(a, b) -> Polytope:
    return Polytope(((as_number(a),), (as_number(b),)))


# --------------------------------------------------------------------------
# Simplices
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Simplex:
    """m-simplex with an ordered vertex list (m+1 points in R^m)."""

    vertices: tuple

    def __post_init__(self):
        verts = tuple(as_point(v) for v in self.vertices)
        m = len(verts) - 1
        if m not in (1, 2) or any(len(v) != m for v in verts):
            raise ErgolabError("dimension-mismatch", "simplices must have m+1 vertices in R^m, m in {1,2}")
        object.__setattr__(self, "vertices", verts)

    @property
    def dim(self):
        return len(self.vertices) - 1

    @property
    def signed_volume(self):
        v0 = self.vertices[0]
        edges = [_sub(v, v0) for v in self.vertices[1:]]
        # rows of the edge matrix are edge vectors; det / m! is the signed volume
        return _det(edges) / math.factorial(self.dim)

    @property
    def volume(self):
        return abs(self.signed_volume)

    @property
    def orientation(self) -> int:
        s = self.signed_volume
        return (s > 0) - (s < 0)

    @property
    def degenerate(self) -> bool:
        return abs(float(self.signed_volume)) <= _VOLUME_EPS

    @property
    def barycenter(self):
        n = len(self.vertices)
        return tuple(sum(v[i] for v in self.vertices) / n for i in range(self.dim))

    def polytope(self) -> Polytope:
        return Polytope(self.vertices)

    def reordered(self, perm) -> "Simplex":
        return Simplex(tuple(self.vertices[i] for i in perm))

    def to_list(self):
        return [[encode_number(c) for c in v] for v in self.vertices]


def _barycenter(points):
    n = len(points)
    return tuple(sum(p[i] for p in points) / n for i in range(len(points[0])))


def barycentric_subdivision(s: Simplex) -> list[Simplex]:
    """Split ``s`` into its (m+1)! barycentric pieces.

    The piece for a vertex permutation (p_0, ..., p_m) has vertices
    v_i = barycenter(p_0, ..., p_i); pieces come in ``itertools.permutations`` order.
    """
    if s.degenerate:
        raise ErgolabError("degenerate-simplex")
    verts = s.vertices
    pieces = []
    for perm in itertools.permutations(range(len(verts))):
        pts = [verts[i] for i in perm]
        pieces.append(Simplex(tuple(_barycenter(pts[: i + 1]) for i in range(len(pts)))))
    return pieces


def affine_onto(sub: Simplex, whole: Simplex) -> AffineMap:
    """The affine map sending vertex i of ``sub`` to vertex i of ``whole``."""
    if sub.dim != whole.dim:
        raise ErgolabError("dimension-mismatch")
    if sub.degenerate or whole.degenerate:
        raise ErgolabError("degenerate-simplex")
    s0, w0 = sub.vertices[0], whole.vertices[0]
    # columns are edge vectors
    s_cols = [_sub(v, s0) for v in sub.vertices[1:]]
    w_cols = [_sub(v, w0) for v in whole.vertices[1:]]
    m = sub.dim
    s_mat = tuple(tuple(s_cols[j][i] for j in range(m)) for i in range(m))
    w_mat = tuple(tuple(w_cols[j][i] for j in range(m)) for i in range(m))
    a = mat_mul(w_mat, mat_inverse(s_mat))
    b = tuple(w - v for w, v in zip(w0, mat_vec(a, s0)))
    return AffineMap(a, b)


# --------------------------------------------------------------------------
# Regions, phase spaces, partitions
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Region:
    """Open region: the interior of a finite union of convex polytopes."""

    polytopes: tuple

    def __post_init__(self):
        polys = tuple(p if isinstance(p, Polytope) else Polytope(p) for p in self.polytopes)
        if not polys:
            raise ErgolabError("empty-region")
        object.__setattr__(self, "polytopes", polys)

    @property
    def dim(self):
        return self.polytopes[0].dim

    @property
    def volume(self):
        return sum(p.volume for p in self.polytopes)

    @property
    def exact(self):
        return all(p.exact for p in self.polytopes)

    def contains(self, points, tol=BOUNDARY_TOL) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.zeros(len(pts), dtype=bool)
        for p in self.polytopes:
            out |= p.contains(pts, tol)
        return out

    def sample(self, n, rng) -> np.ndarray:
        vols = np.array([float(p.volume) for p in self.polytopes])
        which = rng.choice(len(vols), size=n, p=vols / vols.sum())
        out = np.empty((n, self.dim))
        for i, p in enumerate(self.polytopes):
            idx = np.flatnonzero(which == i)
            if len(idx):
                out[idx] = p.sample(len(idx), rng)
        return out

    def to_dict(self):
        return {"polytopes": [p.to_list() for p in self.polytopes]}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(Polytope(tuple(as_point(v) for v in poly)) for poly in d["polytopes"]))


@dataclass(frozen=True)
class PhaseSpace:
    """A flat model space: the torus T^m or an embedded simplex complex (m in {1, 2}).

    ``simplices`` is the triangulation used by the builders; a torus carries the
    unit simplex (T^1) or the two half-squares (T^2) by default.
    """

    kind: str
    dim: int
    simplices: tuple = ()

    def __post_init__(self):
        if self.kind not in ("torus", "simplex-complex"):
            raise ErgolabError("bad-parameter", f"unknown space kind {self.kind!r}")
        if self.dim not in (1, 2):
            raise ErgolabError("dimension-mismatch")
        simp = tuple(s if isinstance(s, Simplex) else Simplex(s) for s in self.simplices)
        object.__setattr__(self, "simplices", simp)
        if self.kind == "simplex-complex" and not simp:
            raise ErgolabError("bad-triangulation", "a simplex complex needs simplices")

    @classmethod
    def torus(cls, dim=1):
        if dim == 1:
            tri = (Simplex(((0,), (1,))),)
        else:
            tri = (Simplex(((0, 0), (1, 0), (0, 1))), Simplex(((1, 1), (0, 1), (1, 0))))
        return cls("torus", dim, tri)

    @classmethod
    def complex(cls, simplices):
        simp = tuple(s if isinstance(s, Simplex) else Simplex(s) for s in simplices)
        return cls("simplex-complex", simp[0].dim, simp)

    @classmethod
    def triangle(cls):
        return cls.complex([Simplex(((0, 0), (1, 0), (0, 1)))])

    @property
    def is_torus(self):
        return self.kind == "torus"

    @cached_property
    def total_volume(self):
        if self.is_torus:
            return Fraction(1)
        return sum(s.volume for s in self.simplices)

    def measure(self, volume) -> float:
        """Normalized Lebesgue measure of a set of the given ambient volume."""
        return float(volume) / float(self.total_volume)

    @cached_property
    def cells(self) -> tuple:
        """Convex pieces whose union is M (the unit box for a torus)."""
        if self.is_torus:
            return (box((0,) * self.dim, (1,) * self.dim),)
        return tuple(s.polytope() for s in self.simplices)

    def wrap(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if not self.is_torus:
            return x
        y = x - np.floor(x)
        y[y >= 1.0] = 0.0
        return y

    def displacement(self, x, y) -> np.ndarray:
        """y - x, using the minimal image on a torus."""
        d = np.asarray(y, dtype=float) - np.asarray(x, dtype=float)
        if self.is_torus:
            d = d - np.round(d)
        return d

    def distance(self, x, y) -> np.ndarray:
        return np.linalg.norm(np.atleast_2d(self.displacement(x, y)), axis=-1)

    @property
    def diameter(self) -> float:
        if self.is_torus:
            return math.sqrt(self.dim) / 2
        pts = np.array([v for s in self.simplices for v in s.vertices], dtype=float)
        d = pts[:, None, :] - pts[None, :, :]
        return float(np.sqrt((d ** 2).sum(-1)).max())

    def contains(self, points, tol=BOUNDARY_TOL) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.zeros(len(pts), dtype=bool)
        for c in self.cells:
            out |= c.contains(pts, tol)
        return out

    def sample(self, n, rng) -> np.ndarray:
        if self.is_torus:
            return rng.random((n, self.dim))
        return Region(self.cells).sample(n, rng)

    def to_dict(self):
        d = {"kind": self.kind, "dim": self.dim}
        d["simplices"] = [s.to_list() for s in self.simplices]
        return d

    @classmethod
    def from_dict(cls, d):
        simp = tuple(Simplex(tuple(as_point(v) for v in s)) for s in d.get("simplices", ()))
        if d["kind"] == "torus" and not simp:
            return cls.torus(d["dim"])
        return cls(d["kind"], d["dim"], simp)


@dataclass(frozen=True)
class Partition:
    """Topological partition of a phase space into open polytope-backed regions."""

    space: PhaseSpace
    regions: tuple

    def __post_init__(self):
        regs = tuple(r if isinstance(r, Region) else Region(tuple(r)) for r in self.regions)
        object.__setattr__(self, "regions", regs)

    def __len__(self):
        return len(self.regions)

    @cached_property
    def cell_list(self) -> list:
        """Flattened ``(polytope, region index)`` pairs."""
        return [(p, i) for i, r in enumerate(self.regions) for p in r.polytopes]

    @cached_property
    def skeleton_flags(self) -> list:
        """For each cell, which facets lie on the true skeleton (not internal to the region)."""
        flags = []
        for poly, ridx in self.cell_list:
            n, c = poly.facet_arrays()
            pf = poly.as_float().array()
            cell_flags = []
            for k in range(len(c)):
                if poly.dim == 1:
                    mid = np.array([c[k] * n[k, 0]])
                else:
                    a, b = pf[k], pf[(k + 1) % len(pf)]
                    mid = (a + b) / 2
                probe = self.space.wrap((mid + 1e-7 * n[k])[None, :])
                inside_same = any(
                    q.contains(probe, -1e-12)[0]
                    for q, j in self.cell_list if j == ridx)
                cell_flags.append(not inside_same)
            flags.append(np.array(cell_flags))
        return flags

    def locate(self, points, tol=BOUNDARY_TOL) -> np.ndarray:
        """Region index per point; -1 on the skeleton (within ``tol``), -2 if uncovered."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.full(len(pts), -2, dtype=np.int64)
        for (poly, ridx), flags in zip(self.cell_list, self.skeleton_flags):
            sd = poly.signed_distance(pts)
            inside = np.all(sd >= -tol, axis=1) & (out == -2)
            on_skel = inside & np.any((sd <= tol) & flags[None, :], axis=1)
            out[inside] = ridx
            out[on_skel] = -1
        return out

    def measures(self) -> list[float]:
        return [self.space.measure(r.volume) for r in self.regions]

    def to_dict(self):
        return {"space": self.space.to_dict(), "regions": [r.to_dict() for r in self.regions]}

    @classmethod
    def from_dict(cls, d):
        return cls(PhaseSpace.from_dict(d["space"]), tuple(Region.from_dict(r) for r in d["regions"]))


def intervals_partition(breaks, space=None) -> Partition:
    """Partition of T^1 (or an interval complex) into consecutive open intervals."""
    space = space or PhaseSpace.torus(1)
    bs = [as_number(b) for b in breaks]
    return Partition(space, tuple(Region((interval(a, b),)) for a, b in zip(bs, bs[1:])))


# --------------------------------------------------------------------------
# Inner diameter
# --------------------------------------------------------------------------

def _merge_intervals_1d(polys, torus):
    ivs = sorted((p.vertices[0][0], p.vertices[1][0]) for p in polys)
    merged = [list(ivs[0])]
    for lo, hi in ivs[1:]:
        if lo <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    if torus and len(merged) > 1 and merged[0][0] == 0 and merged[-1][1] == 1:
        last = merged.pop()
        merged[0] = [last[0] - 1, merged[0][1]]
    return merged


def inner_diameter(region: Region, samples: int = 64, seed: int = 0, space: PhaseSpace | None = None) -> float:
    """Largest shortest-path distance inside the closure of ``region`` over sampled pairs.

    Polytope vertices are always among the sampled points, so convex regions
    get their exact Euclidean diameter. Returns ``inf`` for a disconnected closure.
    """
    if samples < 2:
        raise ErgolabError("bad-parameter", "samples must be >= 2")
    if region is None or not region.polytopes:
        raise ErgolabError("empty-region")
    polys = region.polytopes
    if len(polys) == 1:
        return polys[0].diameter
    if region.dim == 1:
        merged = _merge_intervals_1d(polys, space is not None and space.is_torus)
        if len(merged) > 1:
            return math.inf
        return float(merged[0][1] - merged[0][0])
    return _polygon_path_diameter(region, samples, seed)


def _polygon_path_diameter(region, samples, seed):
    import shapely
    from scipy.sparse.csgraph import shortest_path

    shape = shapely.union_all([shapely.Polygon(p.as_float().array()) for p in region.polytopes])
    if shape.geom_type != "Polygon":
        return math.inf
    rng = np.random.default_rng(seed)
    verts = np.unique(np.concatenate([p.as_float().array() for p in region.polytopes]), axis=0)
    pts = np.concatenate([verts, region.sample(samples, rng)])
    fat = shape.buffer(1e-9)
    n = len(pts)
    dist = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            seg = shapely.LineString([pts[i], pts[j]])
            if fat.covers(seg):
                dist[i, j] = dist[j, i] = np.linalg.norm(pts[i] - pts[j])
    sp = shortest_path(dist, directed=False)
    return float(sp.max())
