"""Total orbits of the semigroup, density, contractivity, transitivity and the weak cycle test."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import ErgolabError
from .geometry import Region

RESOLUTION = 1e-9
NODE_BUDGET = 10 ** 6


@dataclass
class OrbitTree:
    """Nodes h(x) (forward) or h^{-1}(x) (backward) for words h of length <= depth, deduplicated."""

    root: np.ndarray
    direction: str
    depth: int
    nodes: np.ndarray
    level: np.ndarray
    parent: np.ndarray
    symbol: np.ndarray
    truncated: bool = False

    def __len__(self):
        return len(self.nodes)

    def word(self, i) -> list:
        """Symbols along the path root -> node i, in the order they were applied to reach the node."""
        out = []
        while self.parent[i] >= 0:
            out.append(int(self.symbol[i]))
            i = self.parent[i]
        return out[::-1]


def _distinct_generators(F):
    seen, out = [], []
    for s, m in enumerate(F.maps):
        if not any(m is o for o in seen):
            seen.append(m)
            out.append((s, m))
    return out


def _keys(space, pts):
    q = np.round(space.wrap(pts) / RESOLUTION).astype(np.int64)
    if space.is_torus:
        q %= int(round(1 / RESOLUTION))
    return q


def backward_step(F, pts):
    """All preimages of each point under each distinct generator: (points, source index, symbol)."""
    space = F.space
    out_pts, out_src, out_sym = [], [], []
    if len(pts) == 0:
        return np.zeros((0, space.dim)), np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    for s, f in _distinct_generators(F):
        if hasattr(f, "branches"):
            for bi, b in enumerate(f.branches):
                inv = b.amap.inverse()
                a_inv, b_inv = inv.arrays()
                shifts = [np.zeros(space.dim)]
                if space.is_torus:
                    img = b.amap.apply(b.cell.array())
                    lo, hi = np.floor(img.min(0)).astype(int), np.ceil(img.max(0)).astype(int)
                    grids = np.meshgrid(*[np.arange(l - 1, h + 1) for l, h in zip(lo, hi)], indexing="ij")
                    shifts = np.stack([g.ravel() for g in grids], axis=1).astype(float)
                for k in shifts:
                    x = (pts + k) @ a_inv.T + b_inv
                    ok = b.cell.contains(x, 1e-13)
                    if not ok.any():
                        continue
                    idx = np.flatnonzero(ok)
                    # first-match semantics: the branch must be the one that fires at x
                    fire = f.branch_index(x[idx], 1e-13) == bi
                    idx = idx[fire]
                    out_pts.append(space.wrap(x[idx]))
                    out_src.append(idx)
                    out_sym.append(np.full(len(idx), s))
        else:
            for br in (0, 1):
                x = f.inverse_branch(pts[:, 0], br)[:, None]
                out_pts.append(space.wrap(x))
                out_src.append(np.arange(len(pts)))
                out_sym.append(np.full(len(pts), s))
    if not out_pts:
        return np.zeros((0, space.dim)), np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    return np.concatenate(out_pts), np.concatenate(out_src), np.concatenate(out_sym)


def forward_step(F, pts):
    out_pts, out_src, out_sym = [], [], []
    for s, f in _distinct_generators(F):
        out_pts.append(f.evaluate(pts))
        out_src.append(np.arange(len(pts)))
        out_sym.append(np.full(len(pts), s))
    return np.concatenate(out_pts), np.concatenate(out_src), np.concatenate(out_sym)


def orbit_tree(F, x, direction: str = "backward", D: int = 8, budget: int = NODE_BUDGET, stop=None) -> OrbitTree:
    """Breadth-first enumeration of the forward or backward total orbit up to depth D.

    Generators that are the same map object are expanded once. ``stop`` is an
    optional predicate on an array of points; expansion ends after the first
    level containing a point that satisfies it.
    """
    if D < 0:
        raise ErgolabError("bad-parameter", "D must be >= 0")
    if direction not in ("forward", "backward"):
        raise ErgolabError("bad-parameter", "direction is forward or backward")
    space = F.space
    root = space.wrap(np.atleast_2d(np.asarray(x, dtype=float)))
    nodes, level, parent, symbol = [root], [np.zeros(1, dtype=np.int64)], [np.array([-1])], [np.array([-1])]
    seen = {tuple(k) for k in _keys(space, root)}
    frontier, frontier_idx, total = root, np.array([0]), 1
    truncated = False
    step = backward_step if direction == "backward" else forward_step
    if stop is not None and stop(root).any():
        D = 0
    for d in range(1, D + 1):
        if len(frontier) == 0:
            break
        pts, src, sym = step(F, frontier)
        keys = _keys(space, pts)
        keep = []
        for i, k in enumerate(map(tuple, keys)):
            if k not in seen:
                seen.add(k)
                keep.append(i)
        keep = np.array(keep, dtype=np.int64)
        if total + len(keep) > budget:
            keep = keep[: max(budget - total, 0)]
            truncated = True
        new = pts[keep]
        nodes.append(new)
        level.append(np.full(len(keep), d))
        parent.append(frontier_idx[src[keep]])
        symbol.append(sym[keep])
        frontier_idx = np.arange(total, total + len(keep))
        frontier = new
        total += len(keep)
        if truncated or (stop is not None and len(new) and stop(new).any()):
            D = d
            break
    return OrbitTree(root[0], direction, D, np.concatenate(nodes), np.concatenate(level),
                     np.concatenate(parent), np.concatenate(symbol), truncated)


def eps_density(tree: OrbitTree, eps: float, probes: int = 10000, seed: int = 0, space=None) -> float:
    """Fraction of uniform probes within ``eps`` of some node."""
    if not eps > 0:
        raise ErgolabError("bad-parameter", "eps must be positive")
    space = space or tree.space
    rng = np.random.default_rng(seed)
    pts = space.sample(probes, rng)
    nodes = space.wrap(tree.nodes)
    if space.is_torus:
        kd = cKDTree(np.clip(nodes, 0, np.nextafter(1, 0)), boxsize=1.0)
    else:
        kd = cKDTree(nodes)
    dist, _ = kd.query(pts, k=1)
    return float(np.mean(dist <= eps))


def weak_cycle_test(F, B: Region, samples: int = 1000, D: int = 10, seed: int = 0,
                    budget: int = NODE_BUDGET) -> dict:
    """Fraction of sampled x whose backward tree of depth <= D meets B.

    A hit at node z = h^{-1}(x) in B certifies x in h(B). A fraction below 1
    at finite depth is inconclusive on its own; it is flagged.
    """
    if float(B.volume) <= 0:
        raise ErgolabError("degenerate-set", "B needs positive measure")
    space = F.space
    rng = np.random.default_rng(seed)
    pts = space.sample(samples, rng)
    depths = np.full(samples, -1, dtype=np.int64)
    certs = []
    trunc = 0
    member = lambda z: B.contains(z, 0.0)
    for i, x in enumerate(pts):
        tree = orbit_tree(F, x, "backward", D, budget, stop=member)
        trunc += tree.truncated
        hit = np.flatnonzero(member(tree.nodes))
        if len(hit):
            j = hit[np.argmin(tree.level[hit])]
            depths[i] = tree.level[j]
            if len(certs) < 10:
                # z = h^{-1}(x): applying the generators in reverse order of the path sends z to x
                certs.append({"x": x.tolist(), "word": tree.word(j)[::-1], "z": tree.nodes[j].tolist()})
    frac = float(np.mean(depths >= 0))
    by_depth = [float(np.mean((depths >= 0) & (depths <= d))) for d in range(D + 1)]
    return {"samples": samples, "depth": D, "B_measure": space.measure(B.volume), "hit_fraction": frac,
            "hit_fraction_by_depth": by_depth, "hit_depths": depths, "certificates": certs,
            "truncated_trees": int(trunc), "flagged": frac < 1.0,
            "note": "finite-depth search: a fraction below 1 does not disprove the property"}


def contractivity_probe(F, x, D: int = 8, rho0: float = 0.05, ball_points: int = 48, beam: int = 8) -> dict:
    """Beam search over words of length <= D for the smallest image of B(x, rho0)."""
    if D < 1:
        raise ErgolabError("bad-parameter", "D must be >= 1")
    space = F.space
    x = np.asarray(x, dtype=float).reshape(-1)
    dim = space.dim
    if dim == 1:
        ball = x + np.linspace(-rho0, rho0, ball_points)[:, None]
    else:
        t = np.linspace(0, 2 * np.pi, ball_points, endpoint=False)
        ball = np.concatenate([x[None, :], x + rho0 * np.stack([np.cos(t), np.sin(t)], axis=1)])
    ball = space.wrap(ball)
    if not space.is_torus:
        ball = ball[space.contains(ball, 0.0)]

    def diam(p):
        d = space.displacement(p[:, None, :], p[None, :, :])
        return float(np.sqrt((d ** 2).sum(-1)).max())

    gens = _distinct_generators(F)
    cands = [([], ball)]
    best_words, diams = [], [diam(ball)]
    for _ in range(D):
        nxt = []
        for word, pts in cands:
            for s, f in gens:
                try:
                    img = f.evaluate(pts)
                except ErgolabError:
                    continue
                nxt.append((word + [s], img, diam(img)))
        nxt.sort(key=lambda t: t[2])
        cands = [(w, p) for w, p, _ in nxt[:beam]]
        best_words.append(nxt[0][0])
        diams.append(nxt[0][2])
    diams_arr = np.array(diams)
    ks = np.arange(len(diams_arr))
    pos = diams_arr > 0
    slope = float(np.polyfit(ks[pos], np.log(diams_arr[pos]), 1)[0]) if pos.sum() > 1 else -math.inf
    return {"x": x.tolist(), "rho0": rho0, "diameters": diams, "best_word": best_words[-1],
            "decay_rate": slope, "contractive": bool(slope < -0.05 and diams[-1] < 0.5 * diams[0])}


def transitivity_matrix(F, P=None, depth: int = 4, samples: int = 64, cap: int = 4096, seed: int = 0) -> np.ndarray:
    """T[i, j]: some word of length <= depth maps a sample of R_i into R_j."""
    P = P or F.partition
    rng = np.random.default_rng(seed)
    n = len(P)
    T = np.zeros((n, n), dtype=bool)
    for i, r in enumerate(P.regions):
        pts = r.sample(samples, rng)
        T[i, i] = True
        for _ in range(depth):
            pts, _, _ = forward_step(F, pts)
            loc = P.locate(pts)
            T[i, loc[loc >= 0]] = True
            if len(pts) > cap:
                pts = pts[rng.choice(len(pts), cap, replace=False)]
    return T


def residual_density_probe(F, eps: float, D: int, samples: int = 100, probes: int = 4000, seed: int = 0) -> dict:
    """If one sampled point has an eps-dense forward tree at depth D, how many points have
    2 eps-dense trees at depth D + ceil(log_sigma1(1/eps))?"""
    rng = np.random.default_rng(seed)
    sigma1 = F.meta.get("sigma1") or 2.0
    extra = math.ceil(math.log(1 / eps) / math.log(sigma1))
    pts = F.space.sample(samples, rng)
    seed_point = None
    for x in pts:
        t = orbit_tree(F, x, "forward", D)
        if eps_density(t, eps, probes, seed, F.space) == 1.0:
            seed_point = x
            break
    if seed_point is None:
        return {"premise": False, "fraction": None, "pass": None}
    ok = [eps_density(orbit_tree(F, x, "forward", D + extra), 2 * eps, probes, seed, F.space) == 1.0 for x in pts]
    frac = float(np.mean(ok))
    return {"premise": True, "fraction": frac, "depth": D + extra, "pass": frac >= 0.95}


def default_test_set(space, measure: float = 0.1) -> Region:
    """Reference set B of the given normalized measure: an arc on T^1, a box on T^2,
    a homothetic copy of the first cell scaled about its centroid otherwise."""
    from .geometry import Polytope, box, interval
    if space.is_torus:
        if space.dim == 1:
            return Region([interval(0.3, 0.3 + measure)])
        side = math.sqrt(measure)
        return Region([box([0.3, 0.3], [0.3 + side, 0.3 + side])])
    cell = space.cells[0].array()
    c = cell.mean(0)
    scale = math.sqrt(measure * space.total_volume / float(space.cells[0].volume)) if space.dim == 2 else measure
    return Region([Polytope([tuple(c + scale * (v - c)) for v in cell])])
