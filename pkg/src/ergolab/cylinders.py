"""Cylinders C^n[w], hyperbolic cylinders, diameter decay, distortion and dynamical balls."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .conditions import K1_bound, L1_bound, max_derivative_norm
from .errors import ErgolabError
from .expansion import pliss_times
from .geometry import AffineMap, Polytope, Region, inner_diameter, singular_values

SLACK = 1e-9
REPLAY_TOL = 1e-10


@dataclass
class CylinderPiece:
    """Convex part of a cylinder with the affine chain realizing f^j on it (j = 0..n, lifted coordinates)."""

    domain: Polytope
    chain: list
    a: np.ndarray
    logdet: np.ndarray

    def image(self, j) -> Polytope:
        return self.domain.affine_image(self.chain[j])


@dataclass
class Cylinder:
    word: tuple
    pieces: list = field(default_factory=list)
    samples: np.ndarray | None = None
    exact: bool = False
    method: str = ""
    family: object = field(default=None, repr=False)
    proposals: int = 0

    @property
    def n(self):
        return len(self.word)

    @property
    def empty(self):
        if self.pieces:
            return False
        return self.samples is None or len(self.samples) == 0

    @property
    def volume(self):
        return sum(p.domain.volume for p in self.pieces) if self.pieces else None

    def region(self) -> Region:
        return Region(tuple(p.domain for p in self.pieces))

    def contains(self, x, tol=1e-9) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        if self.pieces:
            return self.region().contains(pts, tol)
        return _replay_mask(self.family, self.word, pts, tol)


def _shifts_towards(img: Polytope, target: Polytope, torus: bool):
    if not torus:
        return [tuple(0 for _ in range(img.dim))]
    lo, hi = img.bbox()
    tlo, thi = target.bbox()
    ranges = [range(math.floor(tl - h) , math.ceil(th - l) + 1) for l, h, tl, th in zip(lo, hi, tlo, thi)]
    return list(itertools.product(*ranges))


def _exact_pieces(F, word):
    space = F.space
    regions = F.partition.regions
    dim = space.dim
    ident = AffineMap.identity(dim)
    live = [CylinderPiece(p, [ident], np.zeros(0), np.zeros(0)) for p in regions[word[0]].polytopes]
    for j, w in enumerate(word):
        nxt = []
        branch_pieces = F.region_branches(w)
        for piece in live:
            G = piece.chain[-1]
            img = piece.domain.affine_image(G)
            for b, bp in branch_pieces:
                for k in _shifts_towards(img, bp, space.is_torus):
                    shifted = img.translate(k) if any(k) else img
                    part = shifted.intersect(bp)
                    if part is None:
                        continue
                    Gk = AffineMap(G.matrix, tuple(o + kk for o, kk in zip(G.offset, k)))
                    dom = part.affine_image(Gk.inverse())
                    dom = dom.intersect(piece.domain) if dom is not None else None
                    if dom is None:
                        continue
                    chain = piece.chain[:-1] + [Gk, b.amap.compose(Gk)]
                    nxt.append(CylinderPiece(dom, chain, np.append(piece.a, b.log_inv_norm),
                                             np.append(piece.logdet, math.log(float(b.abs_det)))))
        live = nxt
        if not live:
            break
    return live


def _replay_mask(F, word, pts, tol=REPLAY_TOL):
    ok = np.ones(len(pts), dtype=bool)
    y = pts.copy()
    for w in word:
        ok &= F.partition.regions[w].contains(y, tol)
        y = F.maps[w].evaluate(y)
    return ok


def _interval_pullback(F, word):
    """1D full-branch maps with inverse branches: the cylinder is an interval found by pulling back endpoints."""
    regs = F.partition.regions
    lo, hi = (float(v[0]) for v in regs[word[-1]].polytopes[0].vertices)
    for w in reversed(word[:-1]):
        f = F.maps[w]
        rlo, rhi = (float(v[0]) for v in regs[w].polytopes[0].vertices)
        br = int(f.branch_index(np.array([[(rlo + rhi) / 2]]))[0])
        a, b = float(f.inverse_branch(lo, br)), float(f.inverse_branch(hi, br))
        lo, hi = max(min(a, b), rlo), min(max(a, b), rhi)
        if hi <= lo:
            return None
    return Polytope(((lo,), (hi,)))


def cylinder(F, word, samples: int = 100000, seed: int = 0, max_proposals: int = 10 ** 7) -> Cylinder:
    """C^n[w] = {x : f^j_w(x) in R_{w_j}, 0 <= j < n}.

    Affine families get exact polytopes (Fractions when the data are exact).
    Monotone 1D maps with inverse branches get a numerical interval. Anything
    else is rejection-sampled.
    """
    word = tuple(int(w) for w in word)
    if not word:
        raise ErgolabError("empty-word", "cylinders need a nonempty word")
    rng = np.random.default_rng(seed)
    if F.is_affine:
        pieces = _exact_pieces(F, word)
        cyl = Cylinder(word, pieces, exact=True, family=F,
                       method="exact" if all(p.domain.exact for p in pieces) else "polytope")
        if pieces:
            cyl.samples = Region(tuple(p.domain for p in pieces)).sample(min(samples, 4096), rng)
        return cyl
    if F.dim == 1 and all(hasattr(m, "inverse_branch") for m in F.maps):
        iv = _interval_pullback(F, word)
        if iv is None:
            return Cylinder(word, [], np.zeros((0, 1)), False, "interval-pullback", F)
        pts = iv.sample(min(samples, 4096), rng)
        cyl = Cylinder(word, [], pts, False, "interval-pullback", F)
        cyl.interval = iv
        return cyl
    accepted, tried = [], 0
    batch = 100000
    while tried < max_proposals and sum(len(a) for a in accepted) < samples:
        pts = F.space.sample(batch, rng)
        tried += batch
        accepted.append(pts[_replay_mask(F, word, pts)])
    pts = np.concatenate(accepted)[:samples]
    return Cylinder(word, [], pts, False, f"rejection(N={tried})", F, proposals=tried)


# --------------------------------------------------------------------------
# Hyperbolic cylinders
# --------------------------------------------------------------------------

def _sample_a(F, word, pts):
    a = np.empty((len(pts), len(word)))
    y = pts.copy()
    for j, w in enumerate(word):
        jac = F.maps[w].jacobian(y)
        a[:, j] = -np.log(singular_values(jac).min(axis=1))
        y = F.maps[w].evaluate(y)
    return a


def is_hyperbolic_cylinder(cyl: Cylinder, c) -> dict:
    """Tri-state: ``yes`` (exact), ``no`` (with a witness) or ``unknown`` (all N samples pass)."""
    if cyl.empty:
        raise ErgolabError("empty-cylinder", "cylinder is empty")
    n = cyl.n
    if cyl.exact:
        for p in cyl.pieces:
            if n not in pliss_times(p.a, c):
                return {"status": "no", "witness": [float(v) for v in p.domain.centroid]}
        return {"status": "yes"}
    a = _sample_a(cyl.family, cyl.word, cyl.samples)
    for i, row in enumerate(a):
        if n not in pliss_times(row, c):
            return {"status": "no", "witness": cyl.samples[i].tolist()}
    return {"status": "unknown", "N": len(a)}


def _image_diameter(cyl, steps):
    F = cyl.family
    if cyl.exact:
        imgs = [p.image(steps) for p in cyl.pieces]
        if len(imgs) == 1:
            return imgs[0].diameter
        return inner_diameter(Region(tuple(imgs)), 64)
    y = cyl.samples.copy()
    if hasattr(cyl, "interval"):
        y = np.concatenate([cyl.interval.array(), y])
    for w in cyl.word[:steps]:
        y = F.maps[w].evaluate(y)
    d = F.space.displacement(y[:1], y)
    return float(np.linalg.norm(d.max(0) - d.min(0)))


def diameter_decay_check(cyl: Cylinder, c, K2) -> dict:
    """Diameter of f^{n-j}(C^n) against K2 e^{-jc/2} for j = 0..n."""
    status = is_hyperbolic_cylinder(cyl, c)["status"]
    if status == "no":
        raise ErgolabError("not-hyperbolic", "cylinder is not hyperbolic at this c")
    n = cyl.n
    rows = []
    for j in range(n + 1):
        diam = _image_diameter(cyl, n - j)
        bound = K2 * math.exp(-j * c / 2)
        rows.append({"j": j, "diameter": diam, "bound": bound, "ok": diam <= bound + SLACK})
    return {"word": list(cyl.word), "c": float(c), "K2": float(K2), "rows": rows,
            "pass": all(r["ok"] for r in rows), "hyperbolic": status}


def K2_bound(F, P=None):
    """K1 (largest inner diameter of the region closures) times the largest derivative norm."""
    fam = F
    if P is not None and P is not F.partition:
        from .conditions import _with_partition
        fam = _with_partition(F, P)
    return K1_bound(fam) * max_derivative_norm(fam)


# --------------------------------------------------------------------------
# Distortion
# --------------------------------------------------------------------------

def _log_det_sum(F, word, x):
    y = np.atleast_2d(np.asarray(x, dtype=float))
    s = np.zeros(len(y))
    for w in word:
        s = s + F.maps[w].log_abs_det(y)
        y = F.maps[w].evaluate(y)
    return s


def distortion_ratio(F, word, x, y, cyl: Cylinder | None = None):
    """|det Df^n_w(x)| / |det Df^n_w(y)|; vectorized over rows of x and y."""
    word = tuple(int(w) for w in word)
    cyl = cyl or cylinder(F, word, samples=16)
    xs, ys = np.atleast_2d(np.asarray(x, dtype=float)), np.atleast_2d(np.asarray(y, dtype=float))
    inside = cyl.contains(xs) & cyl.contains(ys) if not hasattr(cyl, "interval") else (
        cyl.interval.contains(xs, 1e-9) & cyl.interval.contains(ys, 1e-9))
    if not inside.all():
        raise ErgolabError("outside-cylinder", "points must lie in the cylinder closure")
    ratio = np.exp(_log_det_sum(F, word, xs) - _log_det_sum(F, word, ys))
    return ratio if len(ratio) > 1 else float(ratio[0])


def distortion_check(F, word, pairs: int, L1: float, seed: int = 0) -> dict:
    cyl = cylinder(F, word, samples=2 * pairs, seed=seed)
    pts = cyl.samples
    if len(pts) < 2 * pairs:
        rng = np.random.default_rng(seed)
        pts = pts[rng.integers(0, len(pts), 2 * pairs)]
    r = np.atleast_1d(distortion_ratio(F, word, pts[:pairs], pts[pairs: 2 * pairs], cyl))
    bad = int(np.count_nonzero((r > L1) | (r < 1 / L1)))
    return {"word": list(word), "pairs": pairs, "L1": L1, "min": float(r.min()), "max": float(r.max()),
            "violations": bad, "pass": bad == 0}


# --------------------------------------------------------------------------
# Measure ratios
# --------------------------------------------------------------------------

def _pullback_image_samples(cyl, N, rng):
    """Uniform samples of f^n(C) and their preimages in C."""
    F = cyl.family
    if cyl.exact:
        imgs = [p.image(cyl.n) for p in cyl.pieces]
        vols = np.array([float(i.volume) for i in imgs])
        which = rng.choice(len(imgs), size=N, p=vols / vols.sum())
        out = np.empty((N, F.dim))
        for k, (p, img) in enumerate(zip(cyl.pieces, imgs)):
            sel = which == k
            z = img.sample(int(sel.sum()), rng)
            out[sel] = p.chain[cyl.n].inverse().apply(z)
        return out
    if not hasattr(cyl, "interval"):
        raise ErgolabError("unsupported", "image sampling needs exact or interval cylinders")
    z = rng.random(N)
    x = z
    regs = F.partition.regions
    for w in reversed(cyl.word):
        f = F.maps[w]
        rlo, rhi = (float(v[0]) for v in regs[w].polytopes[0].vertices)
        br = int(f.branch_index(np.array([[(rlo + rhi) / 2]]))[0])
        x = f.inverse_branch(x, br)
    return x[:, None]


def measure_ratio_check(F, word, A1: Region, A2: Region, N: int = 100000, L2: float = 1.0, seed: int = 0) -> dict:
    """m(f^n A1)/m(f^n A2) against [L2^-1, L2] m(A1)/m(A2), with a 3-sigma Monte Carlo allowance."""
    m1, m2 = float(A1.volume), float(A2.volume)
    if m1 <= 0 or m2 <= 0:
        raise ErgolabError("degenerate-set", "sets need positive measure")
    cyl = cylinder(F, word, samples=64, seed=seed)
    rng = np.random.default_rng(seed)
    pre = _pullback_image_samples(cyl, N, rng)
    p1 = float(A1.contains(pre, 0).mean())
    p2 = float(A2.contains(pre, 0).mean())
    if p1 == 0 or p2 == 0:
        raise ErgolabError("degenerate-set", "a set has no image samples")
    ratio_img = p1 / p2
    ratio = m1 / m2
    tol = 3 * math.sqrt(1 / (N * p1) + 1 / (N * p2))
    lo, hi = ratio / L2 * (1 - tol), ratio * L2 * (1 + tol)
    return {"word": list(word), "N": N, "image_ratio": ratio_img, "set_ratio": ratio, "L2": L2,
            "tolerance": tol, "pass": lo <= ratio_img <= hi}


# --------------------------------------------------------------------------
# Dynamical balls
# --------------------------------------------------------------------------

def _orbit_with_branches(F, x, symbols, n):
    """Float orbit y_0..y_n under explicit symbols, with Jacobians along it."""
    y = np.atleast_2d(np.asarray(x, dtype=float))
    pts, jacs = [y[0]], []
    for j in range(n):
        f = F.maps[symbols[j]]
        jacs.append(f.jacobian(y)[0])
        y = f.evaluate(y)
        pts.append(y[0])
    return np.array(pts), jacs


def _local_inverse(F, f, y_j, y_next, z_next, jac):
    """Pull z (near y_{j+1}) back to the point near y_j, along the branch through y_j."""
    disp = F.space.displacement(y_next[None, :], z_next)
    if f.is_affine:
        return y_j[None, :] + disp @ np.linalg.inv(jac).T
    br = int(f.branch_index(y_j[None, :])[0])
    # lifted target on the sheet through y_j
    target = f._raw(y_j[0]) + disp[:, 0]
    return f.inverse_branch(target - br, br)[:, None]


def dynamical_ball_check(F, x, symbols, n, r, c, samples: int = 1000, seed: int = 0) -> dict:
    """Pull the ball B(f^n x, r) back along the orbit of x and test the hyperbolic-time consequences.

    Reports escapes (samples leaving the closed region R_{w_j}), the dynamical
    ball membership dist(f^j x, f^j y) <= r, backward contraction e^{-jc/2} and
    the one-step derivative comparison with factor e^{c/2}.
    """
    from .expansion import orbit

    if hasattr(symbols, "symbols") and callable(symbols.symbols):
        symbols = symbols.symbols(0, n)
    rec = orbit(F, x, n, symbols)
    if rec.n < n:
        raise ErgolabError(rec.status, "orbit hit the skeleton")
    syms = list(rec.symbols)
    if n not in pliss_times(rec.a, c):
        raise ErgolabError("not-hyperbolic-time", f"{n} is not a hyperbolic time at level {c}")
    if F.is_affine:
        # the record may come from the exact lattice; a float replay would drift off it
        pts = np.asarray(rec.points, dtype=float)
        jacs = [F.maps[syms[j]].jacobian(pts[j])[0] for j in range(n)]
    else:
        pts, jacs = _orbit_with_branches(F, x, syms, n)
    rng = np.random.default_rng(seed)
    dim = F.dim
    u = rng.normal(size=(samples, dim))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    rad = r * rng.random(samples) ** (1 / dim)
    z = F.space.wrap(pts[n] + u * rad[:, None])
    # ball samples outside M (simplex complexes) have no preimage at all
    alive = F.space.contains(z, 0.0)
    outside = int((~alive).sum())
    dist_ok = np.ones(samples, dtype=bool)
    eq5_ok = np.ones(samples, dtype=bool)
    contraction = np.ones(samples)
    contraction_rows = [{"j": 0, "max_norm": 1.0, "bound": 1.0, "ok": True}]
    escapes_at = []
    inv_prod = np.tile(np.eye(dim), (samples, 1, 1))
    for j in range(n - 1, -1, -1):
        f = F.maps[syms[j]]
        z_prev = _local_inverse(F, f, pts[j], pts[j + 1], z, jacs[j])
        inside = F.partition.regions[syms[j]].contains(z_prev, 1e-12)
        newly = alive & ~inside
        escapes_at.append(int(newly.sum()))
        alive &= inside
        z = np.where(alive[:, None], z_prev, z)
        dist_ok &= ~alive | (F.space.distance(pts[j], z) <= r + 1e-12)
        jz = np.tile(np.eye(dim), (samples, 1, 1))
        if alive.any():
            jz[alive] = f.jacobian(z[alive])
        inv_z = np.linalg.inv(jz)
        # D(f^{-k}) at z_n = Df(z_j)^{-1} ... Df(z_{n-1})^{-1}
        inv_prod = np.einsum("nij,njk->nik", inv_z, inv_prod)
        norms = singular_values(inv_prod)[:, 0]
        k = n - j
        bound = math.exp(-k * c / 2)
        okc = ~alive | (norms <= bound + SLACK)
        contraction_rows.append({"j": k, "max_norm": float(norms[alive].max()) if alive.any() else None,
                                 "bound": bound, "ok": bool(okc.all())})
        inv_norm_z = 1 / singular_values(jz).min(axis=1)
        inv_norm_y = 1 / singular_values(jacs[j]).min()
        eq5_ok &= ~alive | (inv_norm_z <= math.exp(c / 2) * inv_norm_y * (1 + 1e-12))
    escaped = int((~alive).sum()) - outside
    viol_ball = int((alive & ~dist_ok).sum())
    viol_eq5 = int((alive & ~eq5_ok).sum())
    viol_con = sum(0 if row["ok"] else 1 for row in contraction_rows)
    return {"n": n, "r": r, "c": float(c), "samples": samples, "escaped": escaped, "outside_space": outside,
            "ball_violations": viol_ball, "derivative_violations": viol_eq5,
            "contraction": contraction_rows, "contraction_violations": viol_con,
            "pass": viol_ball == 0 and viol_eq5 == 0 and viol_con == 0}


def estimate_r(F, c, configs: int = 1000, samples: int = 8, horizon: int = 20, seed: int = 0,
               grid=tuple(2.0 ** -k for k in range(1, 21))):
    """Largest dyadic radius at which the derivative comparison holds over sampled hyperbolic configurations."""
    from .expansion import orbit

    rng = np.random.default_rng(seed)
    starts = F.space.sample(configs, rng)
    best = grid[0]
    for i, x in enumerate(starts):
        rec = orbit(F, x, horizon)
        if rec.n < horizon:
            continue
        H = pliss_times(rec.a, c)
        if not len(H):
            continue
        n = int(H.times[rng.integers(len(H))])
        for rr in grid:
            if rr > best:
                continue
            rep = dynamical_ball_check(F, x, None, n, rr, c, samples, seed=i)
            if rep["derivative_violations"] == 0:
                break
            best = rr / 2
    return best


def random_hyperbolic_cylinders(F, count: int, max_length: int, c, seed: int = 0, max_tries: int = 100000) -> list:
    """Cylinders of itinerary prefixes of random points, kept when hyperbolic at c.

    The length is drawn among the hyperbolic times (<= max_length) of the sampled point.
    """
    from .expansion import orbit
    rng = np.random.default_rng(seed)
    out, tries = [], 0
    while len(out) < count and tries < max_tries:
        tries += 1
        x = F.space.sample(1, rng)[0]
        rec = orbit(F, x, max_length)
        if rec.status != "ok":
            continue
        times = [t for t in pliss_times(rec.a, c).times.tolist() if t >= 1]
        if not times:
            continue
        n = int(rng.choice(times))
        cyl = cylinder(F, rec.symbols.symbols[:n], samples=4096, seed=int(rng.integers(2 ** 31)))
        if not cyl.empty and is_hyperbolic_cylinder(cyl, c)["status"] != "no":
            out.append(cyl)
    return out
