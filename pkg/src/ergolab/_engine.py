"""Compiled orbit iteration.

A family is flattened into padded facet arrays. Piecewise-affine families run in
a numba kernel. Families whose linear parts are integer matrices with rational
data run on an exact integer lattice X/Q: float64 would collapse orbits of maps
like x -> 2x mod 1 to 0 within about 53 steps.
"""
from __future__ import annotations

import math
from fractions import Fraction
from functools import reduce

import numpy as np
from numba import njit

from .errors import BoundaryHit, ErgolabError
from .geometry import singular_values

# prime with 2, 3 and 5 as primitive roots: multiplication by small integers has long cycles mod P
LATTICE_PRIME = 2147483477
_INT_LIMIT = 2 ** 62

OK, BOUNDARY, NO_BRANCH, UNCOVERED = 0, 1, 2, 3


@njit(cache=True, nogil=True)
def _locate_f(x, cN, cC, cF, cSk, cReg, tol):
    dim = x.shape[0]
    for c in range(cReg.shape[0]):
        inside = True
        skel = False
        for k in range(cF[c]):
            s = cC[c, k]
            for d in range(dim):
                s -= cN[c, k, d] * x[d]
            if s < -tol:
                inside = False
                break
            if s <= tol and cSk[c, k]:
                skel = True
        if inside:
            if skel:
                return -1
            return cReg[c]
    return -2


@njit(cache=True, nogil=True)
def _run_float(x0, syms, itin, n, torus, gen_map, mstart, mcount, bN, bC, bF, bA, bb,
               cN, cC, cF, cSk, cReg, tol, pts, regs, used, brs):
    dim = x0.shape[0]
    x = x0.copy()
    y = np.empty(dim)
    for step in range(n + 1):
        for d in range(dim):
            pts[step, d] = x[d]
        r = _locate_f(x, cN, cC, cF, cSk, cReg, tol)
        regs[step] = r
        if r == -1:
            return step, 1
        if r == -2:
            return step, 3
        if step == n:
            break
        s = r if itin else syms[step]
        used[step] = s
        m = gen_map[s]
        found = -1
        for b in range(mstart[m], mstart[m] + mcount[m]):
            ok = True
            for k in range(bF[b]):
                v = bC[b, k]
                for d in range(dim):
                    v -= bN[b, k, d] * x[d]
                if v < -tol:
                    ok = False
                    break
            if ok:
                found = b
                break
        if found < 0:
            return step, 2
        brs[step] = found
        for i in range(dim):
            acc = bb[found, i]
            for j in range(dim):
                acc += bA[found, i, j] * x[j]
            y[i] = acc
        for i in range(dim):
            v = y[i]
            if torus:
                v = v - math.floor(v)
                if v >= 1.0:
                    v = 0.0
            x[i] = v
    return n, 0


@njit(cache=True, nogil=True)
def _locate_i(X, cN, cC, cF, cSk, cReg):
    dim = X.shape[0]
    for c in range(cReg.shape[0]):
        inside = True
        skel = False
        for k in range(cF[c]):
            s = cC[c, k]
            for d in range(dim):
                s -= cN[c, k, d] * X[d]
            if s < 0:
                inside = False
                break
            if s == 0 and cSk[c, k]:
                skel = True
        if inside:
            if skel:
                return -1
            return cReg[c]
    return -2


@njit(cache=True, nogil=True)
def _run_lattice(X0, Q, syms, itin, n, torus, gen_map, mstart, mcount, bN, bC, bF, bA, bb,
                 cN, cC, cF, cSk, cReg, pts, regs, used, brs):
    dim = X0.shape[0]
    X = X0.copy()
    Y = np.empty(dim, dtype=np.int64)
    for step in range(n + 1):
        for d in range(dim):
            pts[step, d] = X[d]
        r = _locate_i(X, cN, cC, cF, cSk, cReg)
        regs[step] = r
        if r == -1:
            return step, 1
        if r == -2:
            return step, 3
        if step == n:
            break
        s = r if itin else syms[step]
        used[step] = s
        m = gen_map[s]
        found = -1
        for b in range(mstart[m], mstart[m] + mcount[m]):
            ok = True
            for k in range(bF[b]):
                v = bC[b, k]
                for d in range(dim):
                    v -= bN[b, k, d] * X[d]
                if v < 0:
                    ok = False
                    break
            if ok:
                found = b
                break
        if found < 0:
            return step, 2
        brs[step] = found
        for i in range(dim):
            acc = bb[found, i]
            for j in range(dim):
                acc += bA[found, i, j] * X[j]
            Y[i] = acc
        for i in range(dim):
            v = Y[i]
            if torus:
                v = v % Q
            X[i] = v
    return n, 0


def _lcm(a, b):
    return a * b // math.gcd(a, b)


def _int_facet(normal, offset):
    """Scale ``normal . x <= offset`` so the normal is an integer vector."""
    den = reduce(_lcm, (Fraction(v).denominator for v in normal), 1)
    n_int = [int(Fraction(v) * den) for v in normal]
    g = reduce(math.gcd, (abs(v) for v in n_int), 0) or 1
    return [v // g for v in n_int], Fraction(offset) * den / g


class CompiledFamily:
    """Flattened arrays for a piecewise-affine family plus (when possible) the integer lattice twin."""

    def __init__(self, family, lattice=None):
        from .systems import PiecewiseAffineMap

        self.family = family
        space = family.space
        self.dim = space.dim
        self.torus = space.is_torus
        self.affine = all(isinstance(m, PiecewiseAffineMap) for m in family.maps)
        distinct, gen_map = [], []
        for m in family.maps:
            for i, d in enumerate(distinct):
                if d is m:
                    gen_map.append(i)
                    break
            else:
                gen_map.append(len(distinct))
                distinct.append(m)
        self.maps = distinct
        self.gen_map = np.array(gen_map, dtype=np.int64)
        partition = family.partition
        self.cells = partition.cell_list
        self.c_skel = partition.skeleton_flags
        if not self.affine:
            self.lattice = False
            return
        self.branches = [b for m in distinct for b in m.branches]
        counts = [len(m.branches) for m in distinct]
        self.mcount = np.array(counts, dtype=np.int64)
        self.mstart = np.concatenate([[0], np.cumsum(counts)[:-1]]).astype(np.int64)
        self.b_a = np.array([b.log_inv_norm for b in self.branches])
        self.b_logdet = np.array([math.log(float(b.abs_det)) for b in self.branches])
        self.b_smax = np.array([b.smax for b in self.branches])
        polys_b = [b.cell for b in self.branches]
        polys_c = [p for p, _ in self.cells]
        self.bN, self.bC, self.bF = _pad_float(polys_b, self.dim)
        self.cN, self.cC, self.cF = _pad_float(polys_c, self.dim)
        self.cSk = _pad_flags(self.c_skel)
        self.cReg = np.array([r for _, r in self.cells], dtype=np.int64)
        self.bA = np.stack([b.amap.arrays()[0] for b in self.branches])
        self.bb = np.stack([b.amap.arrays()[1] for b in self.branches])
        want = family.lattice_compatible() and all(p.exact for p in polys_c) if lattice is None else lattice
        self.lattice = bool(want) and self._build_lattice(polys_b, polys_c)

    def _build_lattice(self, polys_b, polys_c):
        bf = [[_int_facet(n, c) for n, c in p.facets] for p in polys_b]
        cf = [[_int_facet(n, c) for n, c in p.facets] for p in polys_c]
        # 6 covers barycenters; 2^10 keeps short dyadic starts such as 1/4 exact
        dens = {6, 1024}
        for fl in bf + cf:
            dens.update(c.denominator for _, c in fl)
        for b in self.branches:
            dens.update(Fraction(v).denominator for v in b.amap.offset)
        base = reduce(_lcm, dens, 1)
        Q = base * LATTICE_PRIME
        nmax = max(abs(v) for fl in bf + cf for n, _ in fl for v in n)
        amax = max(abs(int(v)) for b in self.branches for row in b.amap.matrix for v in row)
        if (nmax + amax + 2) * Q * (self.dim + 1) * 4 >= _INT_LIMIT:
            return False
        self.Q = Q
        self.bNi, self.bCi, self.bFi = _pad_int(bf, self.dim, Q)
        self.cNi, self.cCi, self.cFi = _pad_int(cf, self.dim, Q)
        self.bAi = np.array([[[int(v) for v in row] for row in b.amap.matrix] for b in self.branches],
                            dtype=np.int64)
        self.bbi = np.array([[int(Fraction(v) * Q) for v in b.amap.offset] for b in self.branches],
                            dtype=np.int64)
        return True

    def to_lattice(self, x):
        """Nearest lattice point (exact for Fractions whose denominator divides Q)."""
        out = []
        for v in np.atleast_1d(np.asarray(x, dtype=object)):
            fv = v if isinstance(v, Fraction) else Fraction(float(v))
            if (fv * self.Q).denominator == 1:
                out.append(int(fv * self.Q))
            else:
                out.append(int(round(float(v) * self.Q)))
        arr = np.array(out, dtype=np.int64)
        if self.torus:
            arr %= self.Q
        return arr

    def run(self, x, n, symbols=None, raise_on_boundary=False):
        """Iterate ``n`` steps; ``symbols=None`` selects the itinerary rule.

        Returns a dict with points, regions, symbols, branches and a (the log
        expansion terms); on a skeleton hit the arrays are truncated and
        ``status`` is ``"boundary-hit"`` (or ``"boundary-start"`` at step 0).
        """
        if not self.affine:
            return self._run_generic(x, n, symbols, raise_on_boundary)
        itin = symbols is None
        syms = np.zeros(max(n, 1), dtype=np.int64) if itin else np.ascontiguousarray(symbols[:n], dtype=np.int64)
        if not itin and len(syms) < n:
            raise ErgolabError("bad-parameter", "not enough symbols")
        if not itin and n and (syms.min() < 0 or syms.max() >= len(self.gen_map)):
            raise ErgolabError("bad-symbol")
        regs = np.empty(n + 1, dtype=np.int64)
        used = np.empty(n, dtype=np.int64)
        brs = np.empty(n, dtype=np.int64)
        x_f = self.family.space.wrap(np.asarray(np.atleast_1d(x), dtype=float)[None, :])
        if self.family.partition.locate(x_f)[0] == -1:
            out = {"points": x_f, "regions": np.array([-1]), "symbols": used[:0], "branches": brs[:0],
                   "a": np.zeros(0), "status": "boundary-start", "steps": 0}
            if raise_on_boundary:
                raise BoundaryHit(0, out, code="boundary-start")
            return out
        if self.lattice:
            X0 = self.to_lattice(x)
            pts_i = np.empty((n + 1, self.dim), dtype=np.int64)
            steps, status = _run_lattice(X0, self.Q, syms, itin, n, self.torus, self.gen_map, self.mstart,
                                         self.mcount, self.bNi, self.bCi, self.bFi, self.bAi, self.bbi,
                                         self.cNi, self.cCi, self.cFi, self.cSk, self.cReg, pts_i, regs, used, brs)
            pts = pts_i[: steps + 1] / float(self.Q)
        else:
            x0 = np.asarray(np.atleast_1d(x), dtype=float)
            if self.torus:
                x0 = x0 - np.floor(x0)
            pts_f = np.empty((n + 1, self.dim))
            steps, status = _run_float(x0, syms, itin, n, self.torus, self.gen_map, self.mstart, self.mcount,
                                       self.bN, self.bC, self.bF, self.bA, self.bb, self.cN, self.cC, self.cF,
                                       self.cSk, self.cReg, 1e-12, pts_f, regs, used, brs)
            pts_i = None
            pts = pts_f[: steps + 1]
        out = {"points": pts, "regions": regs[: steps + 1], "symbols": used[:steps],
               "branches": brs[:steps], "a": self.b_a[brs[:steps]], "status": _status_name(status, steps),
               "steps": int(steps)}
        if pts_i is not None:
            out["lattice"] = (pts_i[: steps + 1], self.Q)
        if status and raise_on_boundary:
            raise BoundaryHit(steps, out, code=out["status"])
        return out

    def _run_generic(self, x, n, symbols, raise_on_boundary):
        partition = self.family.partition
        pt = np.asarray(np.atleast_1d(x), dtype=float).reshape(1, -1)
        pt = self.family.space.wrap(pt)
        pts = np.empty((n + 1, self.dim))
        regs = np.empty(n + 1, dtype=np.int64)
        used = np.empty(n, dtype=np.int64)
        a = np.empty(n)
        status, steps = 0, n
        for j in range(n + 1):
            pts[j] = pt[0]
            r = int(partition.locate(pt)[0])
            regs[j] = r
            if r < 0:
                status, steps = (1 if r == -1 else 3), j
                break
            if j == n:
                break
            s = r if symbols is None else int(symbols[j])
            used[j] = s
            f = self.family.maps[s]
            jac = f.jacobian(pt)[0]
            a[j] = -math.log(singular_values(jac).min())
            pt = f.evaluate(pt)
        out = {"points": pts[: steps + 1], "regions": regs[: steps + 1], "symbols": used[:steps],
               "branches": None, "a": a[:steps], "status": _status_name(status, steps), "steps": steps}
        if status and raise_on_boundary:
            raise BoundaryHit(steps, out, code=out["status"])
        return out


def _status_name(status, steps):
    if status == OK:
        return "ok"
    if status == BOUNDARY:
        return "boundary-start" if steps == 0 else "boundary-hit"
    if status == NO_BRANCH:
        return "outside-domain"
    return "uncovered"


def _pad_float(polys, dim):
    fmax = max(len(p.facets) for p in polys)
    N = np.zeros((len(polys), fmax, dim))
    C = np.zeros((len(polys), fmax))
    F = np.zeros(len(polys), dtype=np.int64)
    for i, p in enumerate(polys):
        n, c = p.facet_arrays()
        N[i, : len(c)] = n
        C[i, : len(c)] = c
        F[i] = len(c)
    return N, C, F


def _pad_flags(flags):
    fmax = max(len(f) for f in flags)
    out = np.zeros((len(flags), fmax), dtype=np.bool_)
    for i, f in enumerate(flags):
        out[i, : len(f)] = f
    return out


def _pad_int(facet_lists, dim, Q):
    fmax = max(len(f) for f in facet_lists)
    N = np.zeros((len(facet_lists), fmax, dim), dtype=np.int64)
    C = np.zeros((len(facet_lists), fmax), dtype=np.int64)
    F = np.zeros(len(facet_lists), dtype=np.int64)
    for i, fl in enumerate(facet_lists):
        for k, (n, c) in enumerate(fl):
            N[i, k] = n
            rhs = c * Q
            assert rhs.denominator == 1
            C[i, k] = int(rhs)
        F[i] = len(fl)
    return N, C, F


def compiled(family) -> CompiledFamily:
    """Per-family compiled arrays, cached on the family object."""
    cf = getattr(family, "_compiled", None)
    if cf is None:
        cf = CompiledFamily(family)
        try:
            object.__setattr__(family, "_compiled", cf)
        except AttributeError:
            pass
    return cf
