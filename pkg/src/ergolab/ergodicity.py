"""Birkhoff averages against space averages, equidistribution and an invariant-set probe.

None of this proves ergodicity. The checks are built to fail on non-ergodic
controls and pass on expanding families, and every report says so.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._engine import compiled
from .errors import ErgolabError
from .symbolic import iid_uniform

CAVEAT = ("Lebesgue measure is only quasi-invariant in general, so averages need not match the space "
          "average for every observable; cross-start agreement and the invariant-set probe carry the weight.")
FALSIFICATION = ("Falsification suite, not a proof: non-ergodic controls must fail and expanding families "
                 "must pass at the stated thresholds.")


@dataclass
class Observable:
    name: str
    evaluate: object
    integral: float | None = None  # exact normalized Lebesgue integral, when known

    def __call__(self, pts):
        return np.asarray(self.evaluate(np.atleast_2d(pts)), dtype=float)


def constant(c=1.0):
    return Observable(f"const({c})", lambda p: np.full(len(p), float(c)), float(c))


def cosine(freq=1, axis=0):
    return Observable(f"cos(2pi*{freq}*x{axis})", lambda p: np.cos(2 * np.pi * freq * p[:, axis]), None)


def indicator_box(lo, hi, name=None):
    lo, hi = np.atleast_1d(np.asarray(lo, float)), np.atleast_1d(np.asarray(hi, float))
    return Observable(name or f"1[{lo.tolist()},{hi.tolist()})",
                      lambda p: np.all((p >= lo) & (p < hi), axis=1).astype(float), None)


def default_observables(space):
    """A small battery; the fine indicator catches rational rotations."""
    if space.dim == 1:
        obs = [cosine(1), indicator_box(0.0, 0.5), indicator_box(0.0, 0.125)]
        if space.is_torus:
            obs[0].integral, obs[1].integral, obs[2].integral = 0.0, 0.5, 0.125
        return obs
    lo, hi = _bbox(space)
    mid = (lo + hi) / 2
    return [Observable("x0", lambda p: p[:, 0]), Observable("x1", lambda p: p[:, 1]),
            indicator_box(lo, mid, "1[lower-left quadrant]")]


def _bbox(space):
    if space.is_torus:
        return np.zeros(space.dim), np.ones(space.dim)
    v = np.vstack([c.array() for c in space.cells])
    return v.min(0), v.max(0)


def _threads(threads=None):
    if threads is None:
        threads = int(os.environ.get("ERGOLAB_THREADS", "0") or 0) or (os.cpu_count() or 1)
    return max(1, int(threads))


def _stream_seed(seed, i):
    return int(np.random.SeedSequence([int(seed), 7919, int(i)]).generate_state(1)[0])


def birkhoff_average(F, obs, x, s, n: int) -> tuple[float, bool]:
    """(1/n) sum of obs(y_j) for j < n along the orbit driven by stream ``s`` (None: itinerary).

    On a skeleton hit the average runs over the truncated prefix and the flag is True.
    """
    if n < 1:
        raise ErgolabError("bad-parameter", "n must be >= 1")
    syms = None if s is None else s.symbols(0, n)
    raw = compiled(F).run(x, n, syms)
    pts = raw["points"][:n]
    if len(pts) == 0:
        return float("nan"), True
    return float(np.mean(obs(pts))), raw["status"] != "ok"


def lebesgue_integral_mc(space, obs, N: int = 10 ** 6, seed: int = 0) -> tuple[float, float]:
    if N < 1:
        raise ErgolabError("bad-parameter", "N must be >= 1")
    pts = space.sample(N, np.random.default_rng(seed))
    v = obs(pts)
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(N)) if N > 1 else 0.0


@dataclass
class ErgodicityReport:
    family: str
    n: int
    starts: list
    stream: dict
    observables: list
    averages: np.ndarray  # (starts, observables)
    integrals: list
    std: np.ndarray
    deviation: np.ndarray
    tol: float
    flagged: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return bool(np.all(self.std < self.tol) and np.all(self.deviation < self.tol))

    def to_dict(self):
        return {"family": self.family, "n": self.n, "starts": [list(map(float, x)) for x in self.starts],
                "stream": self.stream, "observables": self.observables,
                "averages": self.averages.tolist(), "integrals": self.integrals,
                "std": self.std.tolist(), "deviation": self.deviation.tolist(), "tol": self.tol,
                "flagged_starts": self.flagged, "pass": self.passed,
                "caveat": CAVEAT, "scope": FALSIFICATION}


def ergodicity_experiment(F, observables=None, starts: int = 20, n: int = 10 ** 6, stream: str = "iid",
                          seed: int = 0, threads: int | None = None, mc_samples: int = 10 ** 6) -> ErgodicityReport:
    """Birkhoff averages from several starts, compared across starts and against the space average.

    Passes iff, for every observable, the cross-start standard deviation and the
    largest deviation from the integral are both below max(1e-2, 6/sqrt(n)).
    """
    if starts < 1:
        raise ErgolabError("bad-parameter", "starts must be >= 1")
    if stream not in ("iid", "itinerary"):
        raise ErgolabError("bad-parameter", "stream is iid or itinerary")
    space = F.space
    obs = observables or default_observables(space)
    rng = np.random.default_rng(seed)
    xs = space.sample(starts, rng)
    eng = compiled(F)

    def one(i):
        syms = iid_uniform(F.k, _stream_seed(seed, i)).symbols(0, n) if stream == "iid" else None
        raw = eng.run(xs[i], n, syms)
        pts = raw["points"][:n]
        return [float(np.mean(o(pts))) if len(pts) else float("nan") for o in obs], raw["status"] != "ok"

    with ThreadPoolExecutor(_threads(threads)) as ex:
        rows = list(ex.map(one, range(starts)))
    avgs = np.array([r[0] for r in rows])
    flagged = [i for i, r in enumerate(rows) if r[1]]
    ints = [o.integral if o.integral is not None else lebesgue_integral_mc(space, o, mc_samples, seed)[0]
            for o in obs]
    std = avgs.std(axis=0)
    dev = np.abs(avgs - np.array(ints)[None, :]).max(axis=0)
    return ErgodicityReport(F.name, n, xs.tolist(), {"kind": stream, "seed": seed},
                            [o.name for o in obs], avgs, [float(v) for v in ints], std, dev,
                            max(1e-2, 6 / math.sqrt(n)), flagged)


# --------------------------------------------------------------------------
# Invariant-set probe
# --------------------------------------------------------------------------

def _grid_cells(space, g):
    """Grid cells over the bounding box, clipped to M. Returns (polytopes or intervals, volumes)."""
    from .geometry import Polytope
    lo, hi = _bbox(space)
    if space.dim == 1:
        edges = np.linspace(lo[0], hi[0], g + 1)
        cells, vols = [], []
        for a, b in zip(edges[:-1], edges[1:]):
            if space.is_torus:
                cells.append([(a, b)])
                vols.append(b - a)
                continue
            parts = []
            for c in space.cells:
                ca, cb = c.array()[:, 0].min(), c.array()[:, 0].max()
                l, r = max(a, ca), min(b, cb)
                if r - l > 0:
                    parts.append((l, r))
            cells.append(parts)
            vols.append(sum(r - l for l, r in parts))
        return cells, np.array(vols)
    import shapely
    xs = np.linspace(lo[0], hi[0], g + 1)
    ys = np.linspace(lo[1], hi[1], g + 1)
    X0, Y0 = np.meshgrid(xs[:-1], ys[:-1], indexing="ij")
    X1, Y1 = np.meshgrid(xs[1:], ys[1:], indexing="ij")
    boxes = shapely.box(X0.ravel(), Y0.ravel(), X1.ravel(), Y1.ravel())
    if not space.is_torus:
        M = shapely.union_all([shapely.Polygon(c.array()) for c in space.cells])
        boxes = shapely.intersection(boxes, M)
    return boxes, shapely.area(boxes)


def _edges_1d(F, cells, vols, g):
    space = F.space
    lo, hi = _bbox(space)
    width = (hi[0] - lo[0]) / g
    tiny = 1e-12 * width
    src, dst = [], []

    def hit(i, l, r):
        # grid indices meeting (l, r) in positive length
        if space.is_torus:
            k = math.floor(l)
            l, r = l - k, r - k
            if r - l >= 1:
                js = range(g)
            else:
                a = int(math.floor(l / width))
                b = int(math.ceil(r / width))
                js = [j % g for j in range(a, b) if min(r, (j + 1) * width) - max(l, j * width) > tiny]
        else:
            a = max(int(math.floor((l - lo[0]) / width)), 0)
            b = min(int(math.ceil((r - lo[0]) / width)), g)
            js = [j for j in range(a, b) if vols[j] > 0 and
                  sum(max(0.0, min(r, cr) - max(l, cl)) for cl, cr in cells[j]) > tiny]
        for j in js:
            src.append(i)
            dst.append(j)

    for f in {id(m): m for m in F.maps}.values():
        for i, parts in enumerate(cells):
            for a, b in parts:
                if hasattr(f, "branches"):
                    for br in f.branches:
                        ca, cb = br.cell.array()[:, 0].min(), br.cell.array()[:, 0].max()
                        l, r = max(a, ca), min(b, cb)
                        if r - l <= tiny:
                            continue
                        A, t = br.amap.arrays()
                        u, v = sorted((A[0, 0] * l + t[0], A[0, 0] * r + t[0]))
                        hit(i, u, v)
                else:
                    # monotone lift of a circle map
                    u, v = sorted((float(f._raw(a)), float(f._raw(b))))
                    hit(i, u, v)
    return np.array(src, dtype=np.int64), np.array(dst, dtype=np.int64)


def _edges_2d(F, cells, vols):
    import shapely
    space = F.space
    tiny = 1e-12 * float(np.max(vols))
    tree = shapely.STRtree(cells)
    src, dst = [], []
    alive = np.flatnonzero(vols > tiny)
    for f in {id(m): m for m in F.maps}.values():
        if not hasattr(f, "branches"):
            raise ErgolabError("bad-parameter", "2D probe needs piecewise affine maps")
        for br in f.branches:
            pieces = shapely.intersection(cells[alive], shapely.Polygon(br.cell.array()))
            keep = shapely.area(pieces) > tiny
            idx, pieces = alive[keep], pieces[keep]
            if len(idx) == 0:
                continue
            A, t = br.amap.arrays()
            imgs = shapely.transform(pieces, lambda c: c @ A.T + t)
            shifts = [np.zeros(2)]
            if space.is_torus:
                b = shapely.bounds(imgs)
                lo, hi = np.floor(b[:, :2].min(0)).astype(int), np.ceil(b[:, 2:].max(0)).astype(int)
                shifts = [np.array([i, j], float) for i in range(lo[0], hi[0]) for j in range(lo[1], hi[1])]
            for k in shifts:
                moved = shapely.transform(imgs, lambda c: c - k) if k.any() else imgs
                qi, qj = tree.query(moved, predicate="intersects")
                area = shapely.area(shapely.intersection(moved[qi], cells[qj]))
                ok = area > tiny
                src.append(idx[qi[ok]])
                dst.append(qj[ok])
    return np.concatenate(src) if src else np.zeros(0, np.int64), np.concatenate(dst) if dst else np.zeros(0, np.int64)


def _closure(adj, seeds, T):
    """Forward closure of a cell set; returns (set mask, rounds used, reached fixpoint)."""
    mask = np.zeros(adj.shape[0], dtype=bool)
    mask[seeds] = True
    frontier = np.asarray(seeds)
    rounds = 0
    while len(frontier):
        nxt = np.unique(adj[frontier].indices)
        nxt = nxt[~mask[nxt]]
        if len(nxt) == 0:
            return mask, rounds, True
        if rounds == T:
            return mask, rounds, False
        mask[nxt] = True
        frontier = nxt
        rounds += 1
    return mask, rounds, True


def invariant_set_probe(F, g: int = 256, T: int = 1000) -> dict:
    """Cell-level outer approximation of forward-invariant sets.

    Cells i -> j when the image of cell i meets cell j in positive measure. The
    minimal closed invariant cell sets are the sink components of that graph;
    each is grown from a seed cell by repeated image closure (at most T rounds).
    Evidence for ergodicity: every such set has measure >= 1 - 2*dim/g.
    """
    from scipy.sparse import csr_matrix
    from scipy.sparse.csgraph import connected_components
    if g < 16:
        raise ErgolabError("bad-parameter", "g must be >= 16")
    space = F.space
    cells, vols = _grid_cells(space, g)
    n = len(vols)
    total = float(vols.sum())
    threshold = 1 - 2 * space.dim / g
    base = {"g": g, "T": T, "cells": int(n), "near_full_threshold": threshold, "scope": FALSIFICATION}
    if T == 0:
        return {**base, "status": "trivial", "sets": [], "pass": None}
    src, dst = _edges_1d(F, cells, vols, g) if space.dim == 1 else _edges_2d(F, cells, vols)
    live = vols > 1e-12 * vols.max()
    adj = csr_matrix((np.ones(len(src), dtype=np.int8), (src, dst)), shape=(n, n))
    adj.sum_duplicates()
    ncomp, lab = connected_components(adj, directed=True, connection="strong")
    # a component is a sink when no edge leaves it
    leaving = np.zeros(ncomp, dtype=bool)
    np.logical_or.at(leaving, lab[src], lab[src] != lab[dst])
    sets, status = [], "ok"
    for comp in np.flatnonzero(~leaving):
        members = np.flatnonzero(lab == comp)
        if not live[members].any():
            continue
        mask, rounds, done = _closure(adj, members[:1], T)
        if not done:
            status = "no-fixpoint"
        image = np.unique(adj[np.flatnonzero(mask)].indices)
        sets.append({"measure": float(vols[mask].sum() / total), "cells": int(mask.sum()), "rounds": rounds,
                     "closed": bool(done), "invariant_recheck": bool(mask[image].all())})
    measures = sorted(s["measure"] for s in sets)
    ok = bool(sets) and all(m >= threshold for m in measures) and status == "ok"
    return {**base, "status": status, "sets": sets, "measures": measures, "pass": ok,
            "flagged_non_ergodic": bool(any(m < threshold for m in measures))}


# --------------------------------------------------------------------------
# Equidistribution
# --------------------------------------------------------------------------

def box_grid(space, per_dim: int):
    """Boxes of a regular grid over the bounding box, with normalized volumes inside M."""
    cells, vols = _grid_cells(space, per_dim)
    return cells, vols / vols.sum()


def equidistribution_test(F, x, s, n: int, boxes=16, points=None) -> dict:
    """Chi-square occupation statistic of an orbit against Lebesgue box volumes.

    ``boxes`` is either a box count (a regular grid; boxes outside M are
    dropped) or an explicit list of polytopes partitioning M. ``points``
    replaces the orbit, for calibration.
    """
    space = F.space
    truncated = False
    if points is None:
        raw = compiled(F).run(x, n, None if s is None else s.symbols(0, n))
        pts = raw["points"][:n]
        truncated = len(pts) < n
    else:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
    if isinstance(boxes, (int, np.integer)):
        per_dim = int(boxes) if space.dim == 1 else int(round(math.sqrt(boxes)))
        _, vol = box_grid(space, per_dim)
        lo, hi = _bbox(space)
        idx = np.clip(((pts - lo) / (hi - lo) * per_dim).astype(np.int64), 0, per_dim - 1)
        flat = idx[:, 0] if space.dim == 1 else idx[:, 0] * per_dim + idx[:, 1]
        obs = np.bincount(flat, minlength=len(vol)).astype(float)
        inside = vol > 0
        vol, obs = vol[inside], obs[inside]
    else:
        vol = np.array([float(b.volume) for b in boxes])
        if np.any(vol <= 0):
            raise ErgolabError("degenerate-boxes", "a box has zero volume")
        vol = vol / vol.sum()
        obs = np.zeros(len(vol))
        free = np.ones(len(pts), dtype=bool)
        for i, b in enumerate(boxes):
            hit = free & b.contains(pts, 1e-12)
            obs[i] = hit.sum()
            free &= ~hit
    m = len(pts)
    exp = m * vol
    chi2 = float(((obs - exp) ** 2 / exp).sum())
    norm = chi2 / max(len(vol) - 1, 1)
    # an orbit stopped on the skeleton is too short to say anything
    return {"n": m, "boxes": int(len(vol)), "chi2": chi2, "normalized": norm, "truncated": truncated,
            "pass": bool(norm < 1.5 and not truncated)}
