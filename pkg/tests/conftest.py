"""Shared fixtures: reference samples and session-scoped refinement runs."""
import time

import numpy as np
import pytest

from tandel.geometry import as_simplex, circumsphere
from tandel.manifolds import (FlatPatch, TorusOfRevolution, UnitSphere,
                              farthest_point_net)
from tandel.refine import Parameters, refine_sample

# Both end-to-end runs share one parameter set; they are expensive, so
# each is built at most once per session and only when a test asks.
RUN_PARAMS = dict(epsilon=0.3, gamma0=0.05, alpha=0.25, beta=4.5,
                  delta0=0.05, mode="practical", seed=11)


def disk_points(h=0.35, rings=5, hole_rings=0):
    """Staggered polar grid on the flat patch: fat simplices everywhere,
    with a convex rim so outward growth is box-supported and ignored."""
    pts = []
    for k in range(rings + 1):
        if k < hole_rings:
            continue
        r = k * h * (1 + 0.013 * k)
        if k == 0:
            pts.append((0.0, 0.0, 0.0))
            continue
        nk = int(round(2 * np.pi * k))
        for i in range(nk):
            t = 2 * np.pi * i / nk + 0.37 * k
            pts.append((r * np.cos(t), r * np.sin(t), 0.0))
    return np.array(pts)


def flat_sites(seed, n_ring=25, r_ring=0.85, eps_in=0.11):
    """Planar sites with bounded circumcenters: exact-circle rim + net.

    Any three rim points are exactly cocircular on the rim circle, whose
    disk contains interior sites, so rim triples are never Delaunay and
    every Delaunay circumcenter stays near the disk.  That keeps the
    witness domain for the scan oracles finite.
    """
    ang = 2 * np.pi * (np.arange(n_ring) + 0.37 * seed) / n_ring
    ring = np.column_stack([r_ring * np.cos(ang), r_ring * np.sin(ang),
                            np.zeros(n_ring)])
    flat = FlatPatch(2, 3)
    cloud = flat.sample(2500, seed=seed, extent=1.3) - np.array([0.65, 0.65, 0.0])
    cloud = cloud[np.linalg.norm(cloud[:, :2], axis=1) < r_ring - 0.12]
    net = farthest_point_net(cloud, eps=eps_in, seed=seed)
    return np.vstack([ring, net.points])


def exact_flat_member(tri, sites):
    """Exact empty-circumdisk adjudication for planar triangles."""
    sp = circumsphere(as_simplex(tri), sites[:, :2])
    others = np.setdiff1d(np.arange(len(sites)), list(tri))
    dmin = np.linalg.norm(sites[others, :2] - sp.center, axis=1).min()
    return dmin >= sp.radius * (1 - 1e-9)


@pytest.fixture(scope="session")
def sphere_run():
    manifold = UnitSphere(2, 3)
    params = Parameters(**RUN_PARAMS)
    dense = manifold.sample(20000, seed=params.seed)
    net = farthest_point_net(dense, eps=params.epsilon, seed=params.seed)
    t0 = time.perf_counter()
    state = refine_sample(net, manifold, params)
    elapsed = time.perf_counter() - t0
    return state, manifold, params, elapsed


@pytest.fixture(scope="session")
def torus_run():
    manifold = TorusOfRevolution(R=2.0, r=0.5)
    params = Parameters(**RUN_PARAMS)
    dense = manifold.sample(60000, seed=params.seed)
    net = farthest_point_net(dense, eps=params.epsilon, seed=params.seed)
    t0 = time.perf_counter()
    state = refine_sample(net, manifold, params)
    elapsed = time.perf_counter() - t0
    return state, manifold, params, elapsed
