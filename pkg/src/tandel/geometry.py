"""Coordinate-level simplex geometry in R^N.

Edge extremes, altitudes, thickness, circumspheres, largest principal
angles between subspaces, quality classification against a threshold
gamma0, and weighted centers for single-carrier weight assignments.

Conventions used throughout:

* a simplex is a sorted tuple of vertex indices into a point array of
  shape (n, N); its combinatorial dimension is ``len(simplex) - 1`` and
  vertices are allowed to be affinely degenerate,
* ``L`` is the shortest edge length and ``Delta`` the longest (the
  diameter), both 0 for a single vertex,
* all rank/degeneracy decisions use a relative tolerance of 1e-9
  against the simplex diameter.
"""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSimplex, DimensionMismatch, NegativeSquaredRadius

REL_TOL = 1e-9


def as_simplex(vertices) -> tuple:
    """Normalize a vertex collection to a sorted index tuple."""
    out = tuple(sorted(int(v) for v in vertices))
    if len(set(out)) != len(out):
        raise ValueError(f"duplicate vertex indices in simplex {out}")
    return out


def simplex_points(simplex, pts: np.ndarray) -> np.ndarray:
    pts = np.asarray(pts, dtype=float)
    idx = list(simplex)
    if idx and (min(idx) < 0 or max(idx) >= len(pts)):
        raise IndexError(f"vertex index out of range in {tuple(simplex)}")
    return pts[idx]


@dataclass(frozen=True)
class ElementaryWeight:
    """A weight assignment that is zero on every vertex except at most one.

    Attributes:
        carrier: global index of the vertex allowed a nonzero weight.
        weight: the nonnegative weight value (length units).
    """
    carrier: int
    weight: float = 0.0

    def __post_init__(self):
        if self.weight < 0:
            raise ValueError("weight must be nonnegative")

    def is_valid_for(self, simplex, pts, delta0: float) -> bool:
        """True when the weight is within the cap delta0 * L(simplex)."""
        if self.carrier not in simplex:
            return False
        ell, _ = edge_extremes(simplex, pts)
        return self.weight <= delta0 * ell


@dataclass(frozen=True)
class SphereSpec:
    center: np.ndarray
    radius: float


@dataclass(frozen=True)
class AffineFrame:
    """An affine subspace given by an origin and orthonormal basis rows.

    ``basis`` has shape (k, N); rows are pairwise orthogonal unit vectors
    (validated at tolerance 1e-12).
    """
    origin: np.ndarray
    basis: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.basis, dtype=float)
        if b.ndim != 2:
            raise ValueError("basis must be a (k, N) array")
        gram = b @ b.T
        if gram.size and np.abs(gram - np.eye(b.shape[0])).max() > 1e-12:
            raise ValueError("basis rows are not orthonormal at 1e-12")

    @property
    def dim(self) -> int:
        return self.basis.shape[0]


class GammaClass(enum.Enum):
    GOOD = "good"
    FLAKE = "flake"
    BAD_NON_FLAKE = "bad-non-flake"


# ===== basic measures =====

def edge_extremes(simplex, pts) -> tuple[float, float]:
    """Shortest and longest edge length (L, Delta) of a simplex.

    A single vertex has L = Delta = 0 by convention.
    """
    verts = simplex_points(simplex, pts)
    if len(verts) <= 1:
        return 0.0, 0.0
    diff = verts[:, None, :] - verts[None, :, :]
    d = np.sqrt((diff * diff).sum(axis=-1))
    iu = np.triu_indices(len(verts), k=1)
    edges = d[iu]
    return float(edges.min()), float(edges.max())


def _span_frame(vectors: np.ndarray, scale: float):
    """Orthonormal rows spanning the row space of ``vectors``.

    Returns (basis, rank); singular directions below REL_TOL * scale are
    dropped.  ``scale`` should be the simplex diameter.
    """
    if len(vectors) == 0:
        return np.zeros((0, vectors.shape[1] if vectors.ndim == 2 else 0)), 0
    u, s, vt = np.linalg.svd(vectors, full_matrices=False)
    cutoff = REL_TOL * max(scale, 1e-300)
    rank = int((s > cutoff).sum())
    return vt[:rank], rank


def simplex_frame(simplex, pts) -> AffineFrame:
    """Orthonormal frame of the affine hull of the simplex (rank-reduced)."""
    verts = simplex_points(simplex, pts)
    origin = verts[0]
    if len(verts) == 1:
        return AffineFrame(origin, np.zeros((0, verts.shape[1])))
    _, delta = edge_extremes(simplex, pts)
    basis, _ = _span_frame(verts[1:] - origin, delta)
    return AffineFrame(origin, basis)


def altitude(v: int, simplex, pts) -> float:
    """Distance from vertex ``v`` to the affine hull of the opposite face.

    Zero when the opposite face's affine hull contains the vertex
    (degenerate configurations included).

    Raises:
        ValueError: if ``v`` is not a vertex of the simplex.
    """
    simplex = tuple(simplex)
    if v not in simplex:
        raise ValueError(f"{v} is not a vertex of {simplex}")
    if len(simplex) < 2:
        raise ValueError("altitude needs a simplex of dimension >= 1")
    face = tuple(i for i in simplex if i != v)
    pts = np.asarray(pts, dtype=float)
    p = pts[v]
    fverts = pts[list(face)]
    rel = p - fverts[0]
    if len(face) == 1:
        return float(np.linalg.norm(rel))
    _, delta = edge_extremes(simplex, pts)
    basis, _ = _span_frame(fverts[1:] - fverts[0], delta)
    resid = rel - basis.T @ (basis @ rel)
    return float(np.linalg.norm(resid))


def thickness(simplex, pts) -> float:
    """Dimensionless quality: min altitude over (j * Delta), in [0, 1].

    1 for a single vertex; a j-simplex whose vertices all coincide gets 0
    (every altitude vanishes).  Any nondegenerate 1-simplex scores exactly 1.
    """
    simplex = tuple(simplex)
    j = len(simplex) - 1
    if j == 0:
        return 1.0
    _, delta = edge_extremes(simplex, pts)
    if delta == 0.0:
        return 0.0
    alt = min(altitude(v, simplex, pts) for v in simplex)
    return float(alt / (j * delta))


# ===== circumspheres and weighted centers =====

def _equidistance_solve(verts: np.ndarray, rhs: np.ndarray, delta: float):
    """Solve for the point of the vertex affine hull with prescribed
    power differences.

    The system is 2 (B v_i) . t = rhs_i in an orthonormal basis B of the
    hull directions v_i = verts[i] - verts[0].  Returns (t, basis).
    """
    vecs = verts[1:] - verts[0]
    j = len(vecs)
    basis, rank = _span_frame(vecs, delta)
    if rank < j:
        raise DegenerateSimplex(
            f"affine rank {rank} < combinatorial dimension {j}")
    a = 2.0 * (vecs @ basis.T)
    try:
        t = np.linalg.solve(a, rhs)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - rank guard above
        raise DegenerateSimplex(str(exc)) from exc
    return t, basis


def circumsphere(simplex, pts) -> SphereSpec:
    """Smallest sphere through all vertices, for a nondegenerate simplex.

    The center lies in the affine hull of the simplex.  For a single
    vertex the sphere is the point itself with radius 0.

    Raises:
        DegenerateSimplex: when the equidistance system is rank-deficient
            at relative tolerance 1e-9 of the diameter.
    """
    verts = simplex_points(simplex, pts)
    if len(verts) == 1:
        return SphereSpec(verts[0].copy(), 0.0)
    _, delta = edge_extremes(simplex, pts)
    vecs = verts[1:] - verts[0]
    rhs = (vecs * vecs).sum(axis=1)
    t, basis = _equidistance_solve(verts, rhs, delta)
    center = verts[0] + basis.T @ t
    return SphereSpec(center, float(np.linalg.norm(t)))


def weighted_center(simplex, omega: ElementaryWeight, pts) -> tuple[np.ndarray, float]:
    """Center and radius of the sphere with equal power at every vertex.

    The power of vertex p_i with weight w_i is |x - p_i|^2 - w_i^2; the
    returned center C is the unique point of the simplex's affine hull
    where all powers agree, and R = sqrt(common power).  With weight 0
    this reduces to the circumsphere.

    Raises:
        DegenerateSimplex: rank-deficient vertex configuration.
        NegativeSquaredRadius: the common power is negative, i.e. the
            weight is inconsistent with the simplex (reported, not clamped).
        ValueError: carrier is not a vertex of the simplex.
    """
    simplex = tuple(simplex)
    if omega.carrier not in simplex:
        raise ValueError(f"carrier {omega.carrier} not in simplex {simplex}")
    verts = simplex_points(simplex, pts)
    local = simplex.index(omega.carrier)
    w2 = float(omega.weight) ** 2
    if len(verts) == 1:
        if w2 > 0.0:
            raise NegativeSquaredRadius("positive weight on a single vertex")
        return verts[0].copy(), 0.0
    _, delta = edge_extremes(simplex, pts)
    vecs = verts[1:] - verts[0]
    rhs = (vecs * vecs).sum(axis=1)
    # rhs_i = |v_i|^2 - w_i^2 + w_0^2 with at most one nonzero weight
    if local == 0:
        rhs = rhs + w2
    else:
        rhs = rhs.copy()
        rhs[local - 1] -= w2
    t, basis = _equidistance_solve(verts, rhs, delta)
    center = verts[0] + basis.T @ t
    r2 = float(t @ t)
    if local == 0:
        r2 -= w2
    if r2 < 0.0:
        raise NegativeSquaredRadius(
            f"squared radius {r2:.3e} < 0 for weight {omega.weight} "
            f"on vertex {omega.carrier}")
    return center, float(np.sqrt(r2))


def min_weighted_radius(simplex, pts, delta0: float):
    """Minimum weighted radius over all single-carrier weights within cap.

    For each choice of carrier vertex the squared radius is a quadratic
    in s = weight^2, so the minimum over s in [0, (delta0 * L)^2] is
    attained at an endpoint or the parabola vertex; this evaluates all
    candidates in closed form.

    Returns:
        (r_min, ElementaryWeight) attaining the minimum.  A tiny negative
        squared radius from roundoff is clamped to zero (weights within
        the cap provably cannot reach zero radius).
    """
    simplex = tuple(simplex)
    verts = simplex_points(simplex, pts)
    j = len(verts) - 1
    ell, delta = edge_extremes(simplex, pts)
    if j == 0:
        return 0.0, ElementaryWeight(simplex[0], 0.0)
    vecs = verts[1:] - verts[0]
    rhs0 = (vecs * vecs).sum(axis=1)
    basis, rank = _span_frame(vecs, delta)
    if rank < j:
        raise DegenerateSimplex(
            f"affine rank {rank} < combinatorial dimension {j}")
    a_mat = 2.0 * (vecs @ basis.T)
    lu_solve = np.linalg.solve  # small systems; direct solve per rhs
    t0 = lu_solve(a_mat, rhs0)
    s_max = (delta0 * ell) ** 2
    best = (float(t0 @ t0), 0.0, simplex[0])  # (r^2, s, carrier)
    for local, carrier in enumerate(simplex):
        d = np.ones(j) if local == 0 else np.zeros(j)
        if local > 0:
            d[local - 1] = -1.0
        t1 = lu_solve(a_mat, d)
        # r^2(s) = |t0 + s t1|^2 - s * [carrier is the base vertex]
        qa = float(t1 @ t1)
        qb = 2.0 * float(t0 @ t1) - (1.0 if local == 0 else 0.0)
        qc = float(t0 @ t0)
        cands = [0.0, s_max]
        if qa > 0.0:
            s_star = -qb / (2.0 * qa)
            if 0.0 < s_star < s_max:
                cands.append(s_star)
        for s in cands:
            r2 = qa * s * s + qb * s + qc
            if r2 < best[0]:
                best = (r2, s, carrier)
    r2, s, carrier = best
    return float(np.sqrt(max(r2, 0.0))), ElementaryWeight(carrier, float(np.sqrt(s)))


# ===== angles =====

def subspace_angle(u: AffineFrame, v: AffineFrame) -> float:
    """Largest principal angle between span(u) and span(v), in radians.

    Measured as the worst angle a unit vector of U makes with its
    projection onto V; requires dim(U) <= dim(V).  Cosines come from the
    singular values of the cross-Gram matrix; for small angles the value
    is refined through the projection residual, which is numerically
    sharp near zero.

    Raises:
        DimensionMismatch: when dim(U) > dim(V).
    """
    bu, bv = u.basis, v.basis
    if bu.shape[0] > bv.shape[0]:
        raise DimensionMismatch(
            f"dim(U)={bu.shape[0]} exceeds dim(V)={bv.shape[0]}")
    if bu.shape[0] == 0:
        return 0.0
    cross = bu @ bv.T
    cosines = np.linalg.svd(cross, compute_uv=False)
    cos_min = float(np.clip(cosines.min(), 0.0, 1.0))
    if cos_min < 0.7:
        return float(np.arccos(cos_min))
    resid = bu - cross @ bv
    sin_max = float(np.linalg.svd(resid, compute_uv=False).max())
    return float(np.arcsin(np.clip(sin_max, 0.0, 1.0)))


# ===== quality classification =====

def faces(simplex, min_dim: int = 0, max_dim: int | None = None):
    """Iterate faces of a simplex as sorted tuples, by dimension."""
    simplex = tuple(simplex)
    j = len(simplex) - 1
    hi = j if max_dim is None else min(max_dim, j)
    for dim in range(min_dim, hi + 1):
        yield from itertools.combinations(simplex, dim + 1)


def _all_faces_good(simplex, gamma0: float, pts, max_dim: int) -> bool:
    for f in faces(simplex, min_dim=1, max_dim=max_dim):
        dim = len(f) - 1
        if thickness(f, pts) < gamma0 ** dim:
            return False
    return True


def classify_gamma(simplex, gamma0: float, pts) -> GammaClass:
    """Classify a simplex against the quality threshold gamma0.

    GOOD when every i-face has thickness >= gamma0**i; FLAKE when the
    simplex is not good but every proper face is; BAD_NON_FLAKE otherwise
    (such simplices always contain a flake face).

    Checking includes dimension-1 faces so a simplex with coincident
    vertices is never reported GOOD.
    """
    if not 0.0 < gamma0 < 1.0:
        raise ValueError("gamma0 must be in (0, 1)")
    simplex = tuple(simplex)
    j = len(simplex) - 1
    if j == 0:
        return GammaClass.GOOD
    proper_good = _all_faces_good(simplex, gamma0, pts, max_dim=j - 1)
    self_good = thickness(simplex, pts) >= gamma0 ** j
    if proper_good and self_good:
        return GammaClass.GOOD
    if proper_good:
        return GammaClass.FLAKE
    return GammaClass.BAD_NON_FLAKE


def flake_altitude_bound(k: int, delta: float, ell: float, gamma0: float) -> float:
    """Upper bound on any altitude of a k-dimensional flake:
    k * Delta^2 * gamma0 / ((k-1) * L).

    Raises:
        ValueError: for k < 2 or a nonpositive shortest edge.
    """
    if k < 2:
        raise ValueError("flakes have dimension at least 2")
    if ell <= 0:
        raise ValueError("shortest edge must be positive")
    return k * delta * delta * gamma0 / ((k - 1) * ell)
