"""Weighted Delaunay stars in tangent planes, and their union complex.

The star of a sample point p is computed inside the tangent plane
T_pM: every other site q is projected to chart coordinates u_q and
weighted by minus the squared norm of its normal component.  The power
cell of p in that weighted diagram is the polytope

    { t in R^m :  2 u_q . t  <=  |q - p|^2   for all q },

and each of its corners t* is equidistant (in ambient space) from p
and the sites tight at t*: the ball centred at c_p = p + B^T t* with
radius R_p = |t*| passes through them and contains no other site.
Corners therefore correspond exactly to the m-simplices of the star.

Cells are intersected with a bounding box; corners supported by box
walls ("synthetic" corners) mark directions where the true cell runs
past the box, which on a compact manifold can only happen when the
sampling radius is violated there.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from ._kernels import clip_power_cell
from .errors import NeighborhoodTooSparse, SingularSystem
from .geometry import (
    ElementaryWeight,
    GammaClass,
    classify_gamma,
    edge_extremes,
    faces,
)
from .manifolds import Manifold, SampleSet, TangentChart, tangent_chart

COND_LIMIT = 1e12


@dataclass(frozen=True)
class WeightedSite:
    """A sample point as seen from a tangent chart.

    ``squared_weight`` is minus the squared distance from the site to
    its chart projection (always <= 0).
    """
    index: int
    tangent_coords: np.ndarray
    squared_weight: float


@dataclass
class Star:
    """Star of one vertex: its cell corners and incident m-simplices.

    ``centers`` caches (c_p, R_p) per m-simplex (plus one entry for the
    full tight set of any degenerate corner).  ``corners`` holds the
    tangent coordinates of every cell corner; ``corner_simplex[i]`` is
    the simplex of corner i, or None for a synthetic (box-supported)
    corner, whose norm is then only a lower bound for the cell extent.
    """
    base: int
    chart: TangentChart
    neighbors: np.ndarray
    centers: dict = field(default_factory=dict)
    simplices: set = field(default_factory=set)
    corners: np.ndarray = None
    corner_simplex: list = field(default_factory=list)
    box_radius: float = 0.0

    def m_simplices(self):
        m = self.chart.manifold.m
        return [s for s in self.centers if len(s) == m + 1]

    def max_radius(self) -> float:
        """Largest corner norm, synthetic corners included."""
        if self.corners is None or len(self.corners) == 0:
            return 0.0
        return float(np.sqrt((self.corners ** 2).sum(axis=1).max()))


def _site_arrays(p_idx, pts, neighbor_idx, chart):
    rel = pts[neighbor_idx] - pts[p_idx]
    u = rel @ chart.frame.basis.T
    b = (rel * rel).sum(axis=1)
    w2 = b - (u * u).sum(axis=1)
    return u, b, w2


def weighted_sites(p: int, sample: SampleSet, manifold: Manifold,
                   prune_mult: float = 8.0):
    """The pruned neighbor sites of p as weighted chart points."""
    pts = np.asarray(sample.points, dtype=float)
    chart = tangent_chart(manifold, pts[p])
    tree = cKDTree(pts)
    idx = [i for i in tree.query_ball_point(pts[p], prune_mult * sample.epsilon)
           if i != p]
    idx.sort()
    u, b, w2 = _site_arrays(p, pts, idx, chart)
    return [WeightedSite(int(i), u[k].copy(), float(-w2[k]))
            for k, i in enumerate(idx)]


# ===== corner extraction =====

def _corners_by_clipping(u, b, box):
    poly = clip_power_cell(2.0 * u, b, box)
    return np.asarray(poly, dtype=float)


def _corners_by_enumeration(u, b, box, m):
    """All feasible corners of the cell inside the box, any dimension.

    Rows are the site constraints 2u.t <= b plus the 2m box walls;
    every feasible m-subset intersection is a corner candidate.
    """
    k = len(u)
    a_full = np.vstack([2.0 * u, np.eye(m), -np.eye(m)])
    b_full = np.concatenate([b, np.full(2 * m, box)])
    tol = 1e-9 * max(b_full.max(), 1.0)
    out = []
    for rows in itertools.combinations(range(len(a_full)), m):
        mat = a_full[list(rows)]
        try:
            t = np.linalg.solve(mat, b_full[list(rows)])
        except np.linalg.LinAlgError:
            continue
        if not np.isfinite(t).all():
            continue
        if (a_full @ t <= b_full + tol).all():
            out.append(t)
    if not out:
        return np.zeros((0, m))
    # dedupe by rounded coordinates
    arr = np.array(out)
    scale = max(box, 1.0)
    _, keep = np.unique(np.round(arr / scale, 9), axis=0, return_index=True)
    return arr[np.sort(keep)]


def tangent_center(simplex, p: int, pts, chart: TangentChart):
    """Center on T_pM equidistant from all vertices of the simplex.

    Solves the equidistance system in chart coordinates; the center is
    returned in ambient coordinates together with its radius.

    Raises:
        SingularSystem: condition estimate of the system exceeds 1e12.
    """
    simplex = tuple(simplex)
    if p not in simplex:
        raise ValueError(f"{p} is not a vertex of {simplex}")
    others = [q for q in simplex if q != p]
    pts = np.asarray(pts, dtype=float)
    u, b, _ = _site_arrays(p, pts, others, chart)
    a_mat = 2.0 * u
    if len(others) == chart.manifold.m:
        cond = np.linalg.cond(a_mat)
        if not np.isfinite(cond) or cond > COND_LIMIT:
            raise SingularSystem(f"equidistance system cond={cond:.3e}")
        t = np.linalg.solve(a_mat, b)
    else:
        t, *_ = np.linalg.lstsq(a_mat, b, rcond=None)
        resid = np.abs(a_mat @ t - b).max()
        if resid > 1e-7 * max(1.0, np.abs(b).max()):
            raise SingularSystem(
                f"overdetermined equidistance residual {resid:.3e}")
    c = pts[p] + chart.frame.basis.T @ t
    return c, float(np.linalg.norm(t))


def _build_star(p, pts, tree, manifold, epsilon, prune_mult, method="auto"):
    m = manifold.m
    chart = tangent_chart(manifold, pts[p])
    prune_r = prune_mult * epsilon
    for _attempt in range(4):
        idx = np.array(sorted(
            i for i in tree.query_ball_point(pts[p], prune_r) if i != p),
            dtype=int)
        if len(idx) < m:
            raise NeighborhoodTooSparse(
                f"vertex {p} has {len(idx)} neighbors within {prune_r:.4g}")
        u, b, _w2 = _site_arrays(p, pts, idx, chart)
        box = prune_r
        if method == "clip" or (method == "auto" and m == 2):
            corners = _corners_by_clipping(u, b, box)
        else:
            corners = _corners_by_enumeration(u, b, box, m)
        if len(corners) == 0:
            raise NeighborhoodTooSparse(
                f"empty clipped cell for vertex {p} (degenerate input?)")
        # tight sets per corner, in power units
        slack = b[None, :] - corners @ (2.0 * u).T
        tol = 1e-9 * max(float(b.max()), float((corners ** 2).sum(axis=1).max()))
        tights = [idx[np.abs(slack[i]) <= tol] for i in range(len(corners))]

        star = Star(base=p, chart=chart, neighbors=idx,
                    corners=corners, box_radius=box)
        ok = True
        seen = {}
        for i, tight in enumerate(tights):
            if len(tight) < m:
                star.corner_simplex.append(None)
                continue
            key = tuple(sorted(int(q) for q in tight))
            if key not in seen:
                c, r = tangent_center((p,) + key, p, pts, chart)
                # global emptiness: no site may be strictly inside
                d_min = float(tree.query(c)[0])
                if d_min < r * (1.0 - 1e-9):
                    if d_min >= prune_r - r:
                        # a site beyond the pruning radius interferes
                        ok = False
                        break
                    # tight site misclassified; treat corner as synthetic
                    seen[key] = None
                else:
                    seen[key] = (c, r)
            entry = seen[key]
            if entry is None:
                star.corner_simplex.append(None)
                continue
            full = tuple(sorted((p,) + key))
            star.corner_simplex.append(full)
            star.centers[full] = entry
            if len(key) > m:
                # degenerate corner: record every m-subset alongside the
                # full cospherical simplex
                for sub in itertools.combinations(key, m):
                    star.centers[tuple(sorted((p,) + sub))] = entry
        if not ok:
            prune_r *= 2.0
            continue
        if not star.m_simplices():
            raise NeighborhoodTooSparse(
                f"no {m}-simplex in the star of vertex {p}")
        for s in star.centers:
            for f in faces(s):
                if p in f:
                    star.simplices.add(f)
        return star
    raise NeighborhoodTooSparse(
        f"pruning radius for vertex {p} kept growing without closure")


def compute_star(p: int, sample: SampleSet, manifold: Manifold,
                 prune_mult: float = 8.0, method: str = "auto") -> Star:
    """Star of vertex p in the tangent-plane weighted Delaunay complex.

    ``method`` selects the corner extraction: "clip" (2-D kernel),
    "enumerate" (subset enumeration, any m), or "auto".

    Raises:
        NeighborhoodTooSparse: no m-simplex exists around p, which
            signals that the claimed sampling radius does not hold.
    """
    pts = np.asarray(sample.points, dtype=float)
    tree = cKDTree(pts)
    return _build_star(p, pts, tree, manifold, sample.epsilon, prune_mult,
                       method=method)


# ===== cosphericity stars =====

@dataclass
class CosphStar:
    """Almost-cospherical (m+1)-simplices seen from one vertex.

    Each entry pairs a simplex q * sigma^m (sigma^m in the star, with a
    small circumradius and good quality) with the elementary weight on
    q that would make q exactly cospherical with sigma^m's tangent ball.
    """
    base: int
    entries: list = field(default_factory=list)

    def simplices(self):
        return [s for s, _w in self.entries]


def _cosph_entries_for_center(cplx, star, sigma, c, r, delta0, gamma0):
    m = cplx.manifold.m
    if len(sigma) != m + 1 or r >= cplx.epsilon:
        return []
    if classify_gamma(sigma, gamma0, cplx.points) is not GammaClass.GOOD:
        return []
    ell_sigma, _ = edge_extremes(sigma, cplx.points)
    reach_out = r * (1.0 + delta0 ** 2) / (1.0 - delta0 ** 2) * (1.0 + 1e-9)
    near = cplx.tree.query_ball_point(c, reach_out)
    out = []
    for q in sorted(near):
        if q in sigma:
            continue
        gap = float(((cplx.points[q] - c) ** 2).sum() - r * r)
        if gap < -1e-9 * max(r * r, 1e-30):
            continue  # interference would have been caught upstream
        gap = max(gap, 0.0)
        dq = np.linalg.norm(cplx.points[list(sigma)] - cplx.points[q], axis=1)
        ell_tau = min(ell_sigma, float(dq.min()))
        if gap <= (delta0 * ell_tau) ** 2:
            tau = tuple(sorted(sigma + (q,)))
            out.append((tau, ElementaryWeight(int(q), float(np.sqrt(gap)))))
    return out


def cosph_star(p: int, delta0: float, cplx: "TangentialComplex",
               gamma0: float) -> CosphStar:
    """Entries tau = q * sigma^m that are almost cospherical at p.

    Scans every good m-simplex of St(p) whose tangent-ball radius is
    below the sampling radius, and every site q whose power gap against
    that ball is within delta0^2 * L(tau)^2.
    """
    if not 0.0 < delta0 < 0.25:
        raise ValueError("delta0 must lie in (0, 1/4)")
    star = cplx.stars[p]
    best = {}
    for sigma, (c, r) in star.centers.items():
        for tau, w in _cosph_entries_for_center(
                cplx, star, sigma, c, r, delta0, gamma0):
            if tau not in best or w.weight < best[tau].weight:
                best[tau] = w
    entries = [(tau, best[tau]) for tau in sorted(best)]
    return CosphStar(base=p, entries=entries)


# ===== the union complex =====

class TangentialComplex:
    """Union of the tangent-plane stars of every sample point."""

    def __init__(self, sample: SampleSet, manifold: Manifold,
                 prune_mult: float = 8.0):
        self.points = np.array(sample.points, dtype=float)
        self.epsilon = float(sample.epsilon)
        self.manifold = manifold
        self.prune_mult = float(prune_mult)
        self.tree = cKDTree(self.points)
        self.stars: dict[int, Star] = {}

    @property
    def n_points(self) -> int:
        return len(self.points)

    def build(self, method: str = "auto"):
        for p in range(self.n_points):
            self.stars[p] = _build_star(
                p, self.points, self.tree, self.manifold, self.epsilon,
                self.prune_mult, method=method)
        return self

    def recompute_star(self, p: int, method: str = "auto"):
        self.stars[p] = _build_star(
            p, self.points, self.tree, self.manifold, self.epsilon,
            self.prune_mult, method=method)
        return self.stars[p]

    def simplices(self, max_dim: int | None = None) -> list:
        """All simplices of the complex (closure of the star union)."""
        out = set()
        for star in self.stars.values():
            for s in star.centers:
                for f in faces(s):
                    out.add(f)
        if max_dim is not None:
            out = {s for s in out if len(s) - 1 <= max_dim}
        return sorted(out, key=lambda s: (len(s), s))

    def m_simplices(self) -> list:
        m = self.manifold.m
        return [s for s in self.simplices(max_dim=m) if len(s) == m + 1]

    def consistency_report(self) -> dict:
        """Map m-simplex -> sorted list of its vertices whose stars miss it."""
        report = {}
        for s in self.m_simplices():
            missing = [v for v in s
                       if v in self.stars and s not in self.stars[v].centers]
            if missing:
                report[s] = missing
        return report

    def is_consistent(self) -> bool:
        return not self.consistency_report()

    # ---- incremental insertion ----

    def star_is_cut_by(self, p: int, x: np.ndarray) -> bool:
        """Exact test: does a site at x remove part of p's recorded cell?

        The cell is a polytope and the power difference against x is
        affine in t, so its minimum over the cell sits at a corner.
        """
        star = self.stars[p]
        base = self.points[star.base]
        rel = np.asarray(x, dtype=float) - base
        u_x = star.chart.frame.basis @ rel
        b_x = float(rel @ rel)
        if star.corners is None or len(star.corners) == 0:
            return True
        margin = b_x - 2.0 * (star.corners @ u_x)
        return bool(margin.min() <= 1e-9 * max(b_x, 1e-30))

    def insert_point(self, x, update_radius: float) -> dict:
        """Append x, recompute every star its cell actually cuts.

        Candidate stars are those with base within ``update_radius`` of
        x; among them only the cut ones are rebuilt (the others are
        provably unchanged).  Returns the new vertex id, the rebuilt
        star ids, and the candidates that were left alone.
        """
        x = np.asarray(x, dtype=float)
        new_idx = self.n_points
        self.points = np.vstack([self.points, x[None]])
        self.tree = cKDTree(self.points)
        candidates = [i for i in self.tree.query_ball_point(x, update_radius)
                      if i != new_idx and i in self.stars]
        recomputed = []
        untouched = []
        for p in sorted(candidates):
            if self.star_is_cut_by(p, x):
                self.recompute_star(p)
                recomputed.append(p)
            else:
                untouched.append(p)
        self.stars[new_idx] = _build_star(
            new_idx, self.points, self.tree, self.manifold, self.epsilon,
            self.prune_mult)
        return {"index": new_idx, "recomputed": recomputed,
                "untouched": untouched}


def assemble_complex(sample: SampleSet, manifold: Manifold,
                     prune_mult: float = 8.0,
                     method: str = "auto") -> TangentialComplex:
    """Compute every star and return the union complex."""
    return TangentialComplex(sample, manifold, prune_mult).build(method=method)


# ===== export =====

def write_simplex_list(path, simplices):
    with open(path, "w") as fh:
        for s in sorted(simplices, key=lambda s: (len(s), s)):
            fh.write(" ".join(str(v) for v in s) + "\n")


def write_off(path, points, triangles):
    """OFF surface export (2-complex in R^3 only)."""
    points = np.asarray(points, dtype=float)
    if points.shape[1] != 3:
        raise ValueError("OFF export needs points in R^3")
    tris = [t for t in triangles if len(t) == 3]
    with open(path, "w") as fh:
        fh.write("OFF\n")
        fh.write(f"{len(points)} {len(tris)} 0\n")
        for row in points:
            fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")
        for t in tris:
            fh.write("3 " + " ".join(str(v) for v in t) + "\n")
