"""Analytic submanifolds of R^N: charts, projections, nets, geodesics.

Four builtin manifolds are provided, each with closed-form reach,
closest-point projection, tangent/normal frames, and a chart inverse
(lift) that maps tangent coordinates back onto the manifold:

* ``UnitSphere(m, N)`` -- the unit m-sphere in the first m+1 coordinates,
* ``TorusOfRevolution(R, r)`` -- tube of radius r around a circle of
  radius R in the xy-plane of R^3,
* ``CliffordTorus(r)`` -- product of two circles of radius r in R^4,
* ``FlatPatch(m, N)`` -- the coordinate m-plane (infinite reach).

Everything is deterministic: samplers take explicit seeds, frames come
from closed-form parametrizations or SVD of fixed projectors.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import dijkstra
from scipy.spatial import cKDTree

from .errors import (
    DisconnectedGraph,
    EmptyInput,
    MedialAxisProximity,
    NoConvergence,
    OutOfChart,
    PointNotOnManifold,
)
from .geometry import AffineFrame

ON_MANIFOLD_TOL = 1e-9
# a query this close to the medial axis (relative to reach) has no
# trustworthy unique foot point
MEDIAL_REL_TOL = 1e-6


@dataclass(frozen=True)
class TangentChart:
    """Tangent and normal frames of a manifold at a base point.

    ``frame`` spans T_pM (m rows), ``normal_frame`` spans N_pM (N-m
    rows); the two are mutually orthogonal.  ``params`` carries the
    parametric coordinates of the base point for manifolds that have
    them (used to seed chart-inverse solves).
    """
    manifold: "Manifold"
    base: np.ndarray
    frame: AffineFrame
    normal_frame: AffineFrame
    params: tuple = ()

    def __post_init__(self):
        cross = self.frame.basis @ self.normal_frame.basis.T
        if cross.size and np.abs(cross).max() > 1e-10:
            raise ValueError("tangent and normal frames are not orthogonal")


@dataclass(frozen=True)
class SampleSet:
    """Points selected on a manifold with their claimed sampling radius."""
    points: np.ndarray
    epsilon: float
    sparsity: float


class Manifold:
    """Base class: subclasses fill in the closed-form geometry."""

    kind = "abstract"
    m: int
    N: int
    reach: float

    # ---- implicit membership ----

    def implicit_residual(self, x) -> float:
        raise NotImplementedError

    def contains(self, x, tol: float = ON_MANIFOLD_TOL) -> bool:
        return self.implicit_residual(np.asarray(x, dtype=float)) <= tol

    # ---- projections ----

    def medial_distance(self, x) -> float:
        """Distance from x to the medial axis (inf when there is none)."""
        raise NotImplementedError

    def _foot_point(self, x):
        raise NotImplementedError

    def _frames_at(self, p):
        """Return (tangent_rows, normal_rows, params) at an on-manifold p."""
        raise NotImplementedError

    def _lift(self, chart: TangentChart, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    # ---- sampling ----

    def sample(self, n: int, seed: int) -> np.ndarray:
        """n seeded quasi-uniform points on the manifold, shape (n, N)."""
        raise NotImplementedError

    def probe_points(self, n: int, seed: int, reference=None) -> np.ndarray:
        """Points used to estimate covering radii (default: fresh sample)."""
        return self.sample(n, seed)

    def spec_string(self) -> str:
        raise NotImplementedError

    def __repr__(self):
        return f"<{type(self).__name__} {self.spec_string()}>"


# ===== free-function operations =====

def closest_point(manifold: Manifold, x) -> np.ndarray:
    """Unique nearest point of the manifold to x.

    Raises:
        MedialAxisProximity: x is within reach * 1e-6 of the medial axis
            (or on a parametric singularity), where the foot point is
            ambiguous.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (manifold.N,):
        raise ValueError(f"expected a point of R^{manifold.N}")
    md = manifold.medial_distance(x)
    if math.isfinite(manifold.reach) and md <= manifold.reach * MEDIAL_REL_TOL:
        raise MedialAxisProximity(
            f"query at distance {md:.3e} from the medial axis")
    return manifold._foot_point(x)


def tangent_chart(manifold: Manifold, p) -> TangentChart:
    """Orthonormal tangent/normal frames at a point of the manifold.

    Raises:
        PointNotOnManifold: implicit residual exceeds 1e-9.
    """
    p = np.asarray(p, dtype=float)
    resid = manifold.implicit_residual(p)
    if resid > ON_MANIFOLD_TOL:
        raise PointNotOnManifold(
            f"residual {resid:.3e} exceeds {ON_MANIFOLD_TOL}")
    tan, nrm, params = manifold._frames_at(p)
    return TangentChart(
        manifold=manifold,
        base=p,
        frame=AffineFrame(p, np.asarray(tan, dtype=float)),
        normal_frame=AffineFrame(p, np.asarray(nrm, dtype=float)),
        params=params,
    )


def project_to_tangent(chart: TangentChart, x) -> np.ndarray:
    """Coordinates of x - base in the tangent frame (base maps to 0)."""
    x = np.asarray(x, dtype=float)
    return chart.frame.basis @ (x - chart.base)


def lift_from_tangent(chart: TangentChart, y, max_radius: float | None = None):
    """Chart inverse: the manifold point that projects to tangent coords y.

    The lift is guaranteed well-defined for |y| < reach/2 (the default
    cap); callers that have verified a wider validity radius may pass
    ``max_radius`` explicitly.

    Raises:
        OutOfChart: |y| at or beyond the cap, or beyond the closed-form
            validity of the inverse.
        NoConvergence: the iterative solve (torus) failed its budget.
    """
    y = np.asarray(y, dtype=float)
    if y.shape != (chart.manifold.m,):
        raise ValueError(f"expected tangent coords of dimension {chart.manifold.m}")
    cap = chart.manifold.reach / 2.0 if max_radius is None else float(max_radius)
    r = float(np.linalg.norm(y))
    if r >= cap:
        raise OutOfChart(f"|y| = {r:.6g} >= cap {cap:.6g}")
    return chart.manifold._lift(chart, y)


def reach(manifold: Manifold) -> float:
    return manifold.reach


# ===== builtin manifolds =====

class UnitSphere(Manifold):
    """Unit m-sphere embedded in the first m+1 coordinates of R^N."""

    kind = "sphere"

    def __init__(self, m: int, N: int):
        if not 1 <= m < N or N < m + 1:
            raise ValueError("need 1 <= m < N")
        self.m = int(m)
        self.N = int(N)
        self.reach = 1.0

    def _split(self, x):
        return x[: self.m + 1], x[self.m + 1:]

    def implicit_residual(self, x):
        xb, rest = self._split(x)
        return max(abs(np.linalg.norm(xb) - 1.0),
                   float(np.linalg.norm(rest)) if rest.size else 0.0)

    def medial_distance(self, x):
        # medial axis: the subspace where the sphere block vanishes
        return float(np.linalg.norm(x[: self.m + 1]))

    def _foot_point(self, x):
        out = np.zeros(self.N)
        xb = x[: self.m + 1]
        out[: self.m + 1] = xb / np.linalg.norm(xb)
        return out

    def _frames_at(self, p):
        k = self.m + 1
        pb = p[:k] / np.linalg.norm(p[:k])
        proj = np.eye(k) - np.outer(pb, pb)
        u, s, _ = np.linalg.svd(proj)
        tan = np.zeros((self.m, self.N))
        tan[:, :k] = u[:, : self.m].T
        nrm = np.zeros((self.N - self.m, self.N))
        nrm[0, :k] = pb
        for i in range(self.N - k):
            nrm[1 + i, k + i] = 1.0
        return tan, nrm, ()

    def _lift(self, chart, y):
        r2 = float(y @ y)
        if r2 >= 1.0:
            raise OutOfChart("tangent coords leave the projected hemisphere")
        return math.sqrt(1.0 - r2) * chart.base + chart.frame.basis.T @ y

    def sample(self, n, seed):
        rng = np.random.default_rng(seed)
        k = self.m + 1
        out = np.zeros((n, self.N))
        if self.m == 2:
            # stratified in height, uniform in azimuth
            z = -1.0 + 2.0 * (np.arange(n) + rng.uniform(0, 1, n)) / n
            phi = rng.uniform(0.0, 2.0 * np.pi, n)
            rho = np.sqrt(np.maximum(1.0 - z * z, 0.0))
            block = np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=1)
            block = block[rng.permutation(n)]
        else:
            g = rng.normal(size=(n, k))
            block = g / np.linalg.norm(g, axis=1, keepdims=True)
        out[:, :k] = block
        return out

    def spec_string(self):
        return f"sphere:m={self.m},N={self.N}"


class TorusOfRevolution(Manifold):
    """Tube of radius r around the circle of radius R in the xy-plane."""

    kind = "torus"
    m = 2
    N = 3

    def __init__(self, R: float = 2.0, r: float = 0.5):
        if not 0 < r < R:
            raise ValueError("need 0 < r < R")
        self.R = float(R)
        self.r = float(r)
        self.reach = min(self.r, self.R - self.r)

    def _params_of(self, p):
        rho = math.hypot(p[0], p[1])
        u = math.atan2(p[1], p[0])
        v = math.atan2(p[2], rho - self.R)
        return u, v

    def embed(self, u, v):
        ring = self.R + self.r * np.cos(v)
        return np.stack(
            [ring * np.cos(u), ring * np.sin(u), self.r * np.sin(v)], axis=-1)

    def implicit_residual(self, x):
        rho = math.hypot(x[0], x[1])
        return abs(math.hypot(rho - self.R, x[2]) - self.r)

    def medial_distance(self, x):
        rho = math.hypot(x[0], x[1])
        d_axis = rho
        d_core = math.hypot(rho - self.R, x[2])
        return min(d_axis, d_core)

    def _foot_point(self, x):
        u = math.atan2(x[1], x[0])
        rho = math.hypot(x[0], x[1])
        v = math.atan2(x[2], rho - self.R)
        return self.embed(u, v)

    def _frames_at(self, p):
        u, v = self._params_of(p)
        cu, su, cv, sv = math.cos(u), math.sin(u), math.cos(v), math.sin(v)
        tan = np.array([
            [-su, cu, 0.0],
            [-sv * cu, -sv * su, cv],
        ])
        nrm = np.array([[cv * cu, cv * su, sv]])
        return tan, nrm, (u, v)

    def _lift(self, chart, y):
        u0, v0 = chart.params
        ring0 = self.R + self.r * math.cos(v0)
        u, v = u0 + y[0] / ring0, v0 + y[1] / self.r
        basis = chart.frame.basis
        for _ in range(100):
            g = basis @ (self.embed(u, v) - chart.base) - y
            if float(np.linalg.norm(g)) <= 1e-12 * max(1.0, self.R):
                return self.embed(u, v)
            ring = self.R + self.r * math.cos(v)
            j_u = ring * np.array([-math.sin(u), math.cos(u), 0.0])
            j_v = self.r * np.array(
                [-math.sin(v) * math.cos(u), -math.sin(v) * math.sin(u),
                 math.cos(v)])
            jac = np.stack([basis @ j_u, basis @ j_v], axis=1)
            det = jac[0, 0] * jac[1, 1] - jac[0, 1] * jac[1, 0]
            if abs(det) < 1e-14:
                raise NoConvergence("singular chart-inverse jacobian")
            du = (jac[1, 1] * g[0] - jac[0, 1] * g[1]) / det
            dv = (-jac[1, 0] * g[0] + jac[0, 0] * g[1]) / det
            u -= du
            v -= dv
        raise NoConvergence("chart inverse did not converge in 100 steps")

    def sample(self, n, seed):
        rng = np.random.default_rng(seed)
        u = rng.uniform(0.0, 2.0 * np.pi, n)
        # stratified quantiles of the area-weighted tube angle
        w = (np.arange(n) + rng.uniform(0, 1, n)) / n
        w = w[rng.permutation(n)]
        v = 2.0 * np.pi * w - np.pi
        for _ in range(40):
            f = (self.R * (v + np.pi) + self.r * np.sin(v)) / (2 * np.pi * self.R)
            fp = (self.R + self.r * np.cos(v)) / (2 * np.pi * self.R)
            v = np.clip(v - (f - w) / fp, -np.pi, np.pi)
        return self.embed(u, v)

    def spec_string(self):
        return f"torus:R={self.R:g},r={self.r:g}"


class CliffordTorus(Manifold):
    """Product of two circles of radius r, living in R^4."""

    kind = "clifford"
    m = 2
    N = 4

    def __init__(self, r: float):
        if r <= 0:
            raise ValueError("need r > 0")
        self.r = float(r)
        self.reach = float(r)

    def implicit_residual(self, x):
        return max(abs(math.hypot(x[0], x[1]) - self.r),
                   abs(math.hypot(x[2], x[3]) - self.r))

    def medial_distance(self, x):
        return min(math.hypot(x[0], x[1]), math.hypot(x[2], x[3]))

    def _foot_point(self, x):
        n1 = math.hypot(x[0], x[1])
        n2 = math.hypot(x[2], x[3])
        return np.array([x[0] / n1, x[1] / n1, x[2] / n2, x[3] / n2]) * self.r

    def _frames_at(self, p):
        t1 = math.atan2(p[1], p[0])
        t2 = math.atan2(p[3], p[2])
        tan = np.array([
            [-math.sin(t1), math.cos(t1), 0.0, 0.0],
            [0.0, 0.0, -math.sin(t2), math.cos(t2)],
        ])
        nrm = np.array([
            [math.cos(t1), math.sin(t1), 0.0, 0.0],
            [0.0, 0.0, math.cos(t2), math.sin(t2)],
        ])
        return tan, nrm, (t1, t2)

    def _lift(self, chart, y):
        t1, t2 = chart.params
        cap = self.r * (1.0 - 1e-12)
        if abs(y[0]) >= cap or abs(y[1]) >= cap:
            raise OutOfChart("tangent coords leave the per-circle hemisphere")
        a1 = t1 + math.asin(y[0] / self.r)
        a2 = t2 + math.asin(y[1] / self.r)
        return self.r * np.array(
            [math.cos(a1), math.sin(a1), math.cos(a2), math.sin(a2)])

    def sample(self, n, seed):
        rng = np.random.default_rng(seed)
        t1 = 2.0 * np.pi * (np.arange(n) + rng.uniform(0, 1, n)) / n
        t1 = t1[rng.permutation(n)]
        t2 = rng.uniform(0.0, 2.0 * np.pi, n)
        return self.r * np.stack(
            [np.cos(t1), np.sin(t1), np.cos(t2), np.sin(t2)], axis=1)

    def spec_string(self):
        return f"clifford:r={self.r:g}"


class FlatPatch(Manifold):
    """The coordinate m-plane in R^N; reach is infinite."""

    kind = "flat"

    def __init__(self, m: int, N: int):
        if not 1 <= m < N:
            raise ValueError("need 1 <= m < N")
        self.m = int(m)
        self.N = int(N)
        self.reach = math.inf

    def implicit_residual(self, x):
        return float(np.linalg.norm(x[self.m:]))

    def medial_distance(self, x):
        return math.inf

    def _foot_point(self, x):
        out = x.copy()
        out[self.m:] = 0.0
        return out

    def _frames_at(self, p):
        tan = np.eye(self.N)[: self.m]
        nrm = np.eye(self.N)[self.m:]
        return tan, nrm, ()

    def _lift(self, chart, y):
        return chart.base + chart.frame.basis.T @ y

    def sample(self, n, seed, extent: float = 1.0):
        """Jittered-grid points in [0, extent]^m (embedded)."""
        rng = np.random.default_rng(seed)
        g = max(1, math.ceil(n ** (1.0 / self.m)))
        cells = np.stack(np.meshgrid(*([np.arange(g)] * self.m),
                                     indexing="ij"), axis=-1).reshape(-1, self.m)
        take = rng.permutation(len(cells))[:n]
        coords = (cells[take] + rng.uniform(0, 1, (n, self.m))) * (extent / g)
        out = np.zeros((n, self.N))
        out[:, : self.m] = coords
        return out

    def probe_points(self, n, seed, reference=None):
        if reference is None:
            return self.sample(n, seed)
        ref = np.asarray(reference, dtype=float)
        lo = ref[:, : self.m].min(axis=0)
        hi = ref[:, : self.m].max(axis=0)
        rng = np.random.default_rng(seed)
        out = np.zeros((n, self.N))
        out[:, : self.m] = rng.uniform(lo, hi, (n, self.m))
        return out

    def spec_string(self):
        return f"flat:m={self.m},N={self.N}"


def parse_manifold(spec: str) -> Manifold:
    """Build a manifold from a spec string like "sphere:m=2,N=3"."""
    kind, _, rest = spec.strip().partition(":")
    kv = {}
    if rest:
        for item in rest.split(","):
            key, _, val = item.partition("=")
            kv[key.strip()] = val.strip()
    try:
        if kind == "sphere":
            return UnitSphere(int(kv["m"]), int(kv["N"]))
        if kind == "torus":
            return TorusOfRevolution(float(kv.get("R", 2.0)),
                                     float(kv.get("r", 0.5)))
        if kind == "clifford":
            return CliffordTorus(float(kv["r"]))
        if kind == "flat":
            return FlatPatch(int(kv["m"]), int(kv["N"]))
    except KeyError as exc:
        raise ValueError(f"manifold spec {spec!r} missing field {exc}") from exc
    raise ValueError(f"unknown manifold kind {kind!r}")


# ===== nets and covering =====

def farthest_point_net(dense, eps: float, seed: int = 0) -> SampleSet:
    """Greedy farthest-point subsample: eps-sparse and covering the input.

    Starting from the (seed mod n)-th point, repeatedly adds the input
    point farthest from the current selection until that distance drops
    to eps.  Every selected point is > eps from the earlier ones and
    every input point ends within eps of the selection.

    Raises:
        EmptyInput: no input points.
    """
    dense = np.asarray(dense, dtype=float)
    if dense.ndim != 2 or len(dense) == 0:
        raise EmptyInput("farthest_point_net needs at least one point")
    n = len(dense)
    start = int(seed) % n
    chosen = [start]
    dist = np.linalg.norm(dense - dense[start], axis=1)
    min_gap = math.inf
    while True:
        nxt = int(np.argmax(dist))
        if dist[nxt] <= eps:
            break
        min_gap = min(min_gap, float(dist[nxt]))
        chosen.append(nxt)
        dist = np.minimum(dist, np.linalg.norm(dense - dense[nxt], axis=1))
    pts = dense[chosen]
    if len(pts) > 1:
        tree = cKDTree(pts)
        d2, _ = tree.query(pts, k=2)
        sparsity = float(d2[:, 1].min())
    else:
        sparsity = math.inf
    return SampleSet(points=pts, epsilon=float(eps), sparsity=sparsity)


def covering_radius_estimate(manifold: Manifold, points, n_probe: int = 4096,
                             seed: int = 0) -> float:
    """Seeded probe estimate of how far a manifold point can be from the set."""
    points = np.asarray(points, dtype=float)
    if len(points) == 0:
        raise EmptyInput("covering radius of an empty set")
    probes = manifold.probe_points(n_probe, seed, reference=points)
    d, _ = cKDTree(points).query(probes)
    return float(d.max())


# ===== geodesic distance oracle =====

@dataclass
class GeodesicGraph:
    """Neighborhood graph on a dense manifold sample.

    Shortest paths in the graph overestimate geodesic distances by an
    amount that shrinks with the edge radius h; tests that compare
    against it should allow roughly 2h of additive slack.
    """
    points: np.ndarray
    h: float
    matrix: sparse.csr_matrix
    tree: cKDTree = field(repr=False)


def build_geodesic_graph(manifold: Manifold, n_dense: int, seed: int = 0,
                         h: float | None = None) -> GeodesicGraph:
    pts = manifold.sample(n_dense, seed)
    if h is None:
        cov = covering_radius_estimate(manifold, pts, n_probe=min(4096, 4 * n_dense),
                                       seed=seed + 1)
        h = 3.0 * cov
    tree = cKDTree(pts)
    pairs = tree.query_pairs(h, output_type="ndarray")
    if len(pairs):
        w = np.linalg.norm(pts[pairs[:, 0]] - pts[pairs[:, 1]], axis=1)
        mat = sparse.coo_matrix(
            (np.concatenate([w, w]),
             (np.concatenate([pairs[:, 0], pairs[:, 1]]),
              np.concatenate([pairs[:, 1], pairs[:, 0]]))),
            shape=(len(pts), len(pts))).tocsr()
    else:
        mat = sparse.csr_matrix((len(pts), len(pts)))
    return GeodesicGraph(points=pts, h=float(h), matrix=mat, tree=tree)


def geodesic_estimate(graph: GeodesicGraph, x, y) -> float:
    """Graph shortest-path length between the nodes nearest x and y.

    Raises:
        DisconnectedGraph: the two nodes are in different components.
    """
    i = int(graph.tree.query(np.asarray(x, dtype=float))[1])
    j = int(graph.tree.query(np.asarray(y, dtype=float))[1])
    if i == j:
        return 0.0
    d = dijkstra(graph.matrix, directed=False, indices=i)
    if not math.isfinite(d[j]):
        raise DisconnectedGraph(f"nodes {i} and {j} are not connected")
    return float(d[j])


def geodesic_estimate_many(graph: GeodesicGraph, sources, targets) -> np.ndarray:
    """Matrix of shortest-path lengths for many source/target points."""
    src = np.atleast_2d(np.asarray(sources, dtype=float))
    tgt = np.atleast_2d(np.asarray(targets, dtype=float))
    si = graph.tree.query(src)[1]
    ti = graph.tree.query(tgt)[1]
    d = dijkstra(graph.matrix, directed=False, indices=si)
    out = d[:, ti]
    if not np.isfinite(out).all():
        raise DisconnectedGraph("some source/target pairs are not connected")
    out[si[:, None] == ti[None, :]] = 0.0
    return out


# ===== point I/O =====

def read_points(path) -> np.ndarray:
    """Read one point per line (whitespace- or comma-separated, # comments)."""
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split(",") if "," in line else line.split()
            rows.append([float(p) for p in parts])
    if not rows:
        return np.zeros((0, 0))
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ValueError("inconsistent column counts in point file")
    return np.asarray(rows, dtype=float)


def write_points(path, points, header: str | None = None):
    points = np.asarray(points, dtype=float)
    with open(path, "w") as fh:
        if header:
            for line in header.splitlines():
                fh.write(f"# {line}\n")
        for row in points:
            fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")
