"""Builtin manifolds: projections, charts, lifts, nets, geodesics."""
import math

import numpy as np
import pytest

from tandel.errors import (
    DisconnectedGraph,
    EmptyInput,
    MedialAxisProximity,
    NoConvergence,
    OutOfChart,
    PointNotOnManifold,
)
from tandel.geometry import subspace_angle
from tandel.manifolds import (
    CliffordTorus,
    FlatPatch,
    TorusOfRevolution,
    UnitSphere,
    build_geodesic_graph,
    closest_point,
    covering_radius_estimate,
    farthest_point_net,
    geodesic_estimate,
    geodesic_estimate_many,
    lift_from_tangent,
    parse_manifold,
    project_to_tangent,
    read_points,
    tangent_chart,
    write_points,
)

ALL_SPECS = ["sphere:m=2,N=3", "sphere:m=2,N=5", "sphere:m=3,N=4",
             "torus:R=2,r=0.5", "clifford:r=0.70710678", "flat:m=2,N=3"]


@pytest.fixture(params=ALL_SPECS)
def manifold(request):
    return parse_manifold(request.param)


# ===== construction and parsing =====

def test_spec_string_round_trip():
    for spec in ["sphere:m=2,N=3", "torus:R=2,r=0.5", "clifford:r=0.5",
                 "flat:m=3,N=5"]:
        M = parse_manifold(spec)
        again = parse_manifold(M.spec_string())
        assert type(again) is type(M)
        assert again.spec_string() == M.spec_string()


def test_parse_rejects_garbage():
    with pytest.raises(ValueError):
        parse_manifold("moebius:w=1")
    with pytest.raises(ValueError):
        parse_manifold("clifford:")


def test_constructor_validation():
    with pytest.raises(ValueError):
        UnitSphere(3, 3)
    with pytest.raises(ValueError):
        TorusOfRevolution(1.0, 1.5)
    with pytest.raises(ValueError):
        CliffordTorus(-1.0)
    with pytest.raises(ValueError):
        FlatPatch(2, 2)


def test_reach_values():
    assert UnitSphere(2, 3).reach == 1.0
    assert TorusOfRevolution(2, 0.5).reach == 0.5
    assert TorusOfRevolution(2, 1.5).reach == 0.5
    assert CliffordTorus(1 / math.sqrt(2)).reach == pytest.approx(1 / math.sqrt(2))
    assert math.isinf(FlatPatch(2, 3).reach)


def test_reach_matches_sampled_medial_distance():
    # on each compact builtin the minimum distance from the manifold to
    # its medial axis is the reach
    for M in [TorusOfRevolution(2, 0.5), CliffordTorus(0.8), UnitSphere(2, 4)]:
        pts = M.sample(500, seed=3)
        dmin = min(M.medial_distance(p) for p in pts)
        assert dmin >= M.reach - 1e-9
        assert dmin <= M.reach * 1.05


def test_torus_normal_ray_probe():
    # walking inward along the tube normal from the tube top keeps the
    # same foot point until the core circle (the reach) is hit
    M = TorusOfRevolution(2, 0.5)
    p = np.array([2.0, 0.0, 0.5])
    for d in (0.1, 0.3, 0.48):
        foot = closest_point(M, np.array([2.0, 0.0, 0.5 - d]))
        assert foot == pytest.approx(p, abs=1e-12)
    with pytest.raises(MedialAxisProximity):
        closest_point(M, np.array([2.0, 0.0, 0.0]))


# ===== closest point =====

def test_closest_point_sphere_radial():
    M = UnitSphere(2, 3)
    assert closest_point(M, np.array([2.0, 0.0, 0.0])) == pytest.approx(
        [1.0, 0.0, 0.0])


def test_closest_point_torus_tube():
    M = TorusOfRevolution(2, 0.5)
    foot = closest_point(M, np.array([2.0, 0.0, 0.2]))
    assert foot == pytest.approx([2.0, 0.0, 0.5])
    chart = tangent_chart(M, foot)
    resid = chart.frame.basis @ (np.array([2.0, 0.0, 0.2]) - foot)
    assert np.abs(resid).max() < 1e-9


def test_closest_point_flat_drops_normal_coords():
    M = FlatPatch(2, 3)
    assert closest_point(M, np.array([0.3, -1.2, 7.0])) == pytest.approx(
        [0.3, -1.2, 0.0])


def test_closest_point_clifford():
    M = CliffordTorus(1.0)
    foot = closest_point(M, np.array([1.0, 0.0, 0.0, 2.0]))
    assert foot == pytest.approx([1.0, 0.0, 0.0, 1.0])


def test_closest_point_medial_axis_raises():
    with pytest.raises(MedialAxisProximity):
        closest_point(UnitSphere(2, 3), np.zeros(3))
    with pytest.raises(MedialAxisProximity):
        closest_point(UnitSphere(2, 4), np.array([0.0, 0.0, 0.0, 0.5]))
    with pytest.raises(MedialAxisProximity):
        closest_point(TorusOfRevolution(2, 0.5), np.array([0.0, 0.0, 1.0]))
    with pytest.raises(MedialAxisProximity):
        closest_point(CliffordTorus(1.0), np.array([0.0, 0.0, 1.0, 1.0]))


def test_foot_point_orthogonality(manifold):
    rng = np.random.default_rng(5)
    pts = manifold.sample(20, seed=8)
    cap = 0.3 * min(manifold.reach, 1.0) if math.isfinite(manifold.reach) else 0.5
    for p in pts:
        chart = tangent_chart(manifold, p)
        off = rng.normal(size=(manifold.N - manifold.m,))
        off *= cap * rng.uniform(0.1, 1.0) / np.linalg.norm(off)
        x = p + chart.normal_frame.basis.T @ off
        foot = closest_point(manifold, x)
        fchart = tangent_chart(manifold, foot)
        resid = fchart.frame.basis @ (x - foot)
        assert np.abs(resid).max() < 1e-9
        # along pure normal offsets within the reach the foot is p itself
        assert foot == pytest.approx(p, abs=1e-6)


# ===== charts =====

def test_sphere_chart_at_pole_is_xy_plane():
    chart = tangent_chart(UnitSphere(2, 3), np.array([0.0, 0.0, 1.0]))
    assert np.abs(chart.frame.basis[:, 2]).max() < 1e-12
    assert chart.normal_frame.basis == pytest.approx(
        np.array([[0.0, 0.0, 1.0]]))


def test_torus_chart_at_outer_equator():
    M = TorusOfRevolution(2, 0.5)
    chart = tangent_chart(M, np.array([2.5, 0.0, 0.0]))
    got = {tuple(np.round(np.abs(row), 12)) for row in chart.frame.basis}
    assert got == {(0.0, 1.0, 0.0), (0.0, 0.0, 1.0)}
    gram = chart.frame.basis @ chart.frame.basis.T
    assert np.abs(gram - np.eye(2)).max() < 1e-12


def test_chart_rejects_off_manifold_point():
    with pytest.raises(PointNotOnManifold):
        tangent_chart(UnitSphere(2, 3), np.array([1.1, 0.0, 0.0]))
    with pytest.raises(PointNotOnManifold):
        tangent_chart(FlatPatch(2, 3), np.array([0.0, 0.0, 1e-6]))


def test_chart_frames_are_orthogonal_complements(manifold):
    for p in manifold.sample(10, seed=21):
        chart = tangent_chart(manifold, p)
        assert chart.frame.basis.shape == (manifold.m, manifold.N)
        assert chart.normal_frame.basis.shape == (
            manifold.N - manifold.m, manifold.N)


def test_project_base_to_origin(manifold):
    p = manifold.sample(1, seed=2)[0]
    chart = tangent_chart(manifold, p)
    assert project_to_tangent(chart, p) == pytest.approx(np.zeros(manifold.m))


def test_sphere_projection_example():
    chart = tangent_chart(UnitSphere(2, 3), np.array([0.0, 0.0, 1.0]))
    y = project_to_tangent(chart, np.array([0.6, 0.0, 0.8]))
    assert sorted(np.abs(y)) == pytest.approx([0.0, 0.6], abs=1e-12)


# ===== lifts =====

def test_sphere_lift_example():
    chart = tangent_chart(UnitSphere(2, 3), np.array([0.0, 0.0, 1.0]))
    y = project_to_tangent(chart, np.array([0.6, 0.0, 0.8]))
    lifted = lift_from_tangent(chart, y, max_radius=0.9)
    assert lifted == pytest.approx([0.6, 0.0, 0.8], abs=1e-12)
    # ambient embedding of y sits 0.2 above the lift; lemma bound is 0.72
    emb = chart.base + chart.frame.basis.T @ y
    assert np.linalg.norm(emb - lifted) == pytest.approx(0.2)


def test_lift_origin_is_base(manifold):
    p = manifold.sample(1, seed=11)[0]
    chart = tangent_chart(manifold, p)
    assert lift_from_tangent(chart, np.zeros(manifold.m)) == pytest.approx(p)


def test_lift_default_cap():
    chart = tangent_chart(UnitSphere(2, 3), np.array([0.0, 0.0, 1.0]))
    with pytest.raises(OutOfChart):
        lift_from_tangent(chart, np.array([0.5, 0.0]))
    lift_from_tangent(chart, np.array([0.499, 0.0]))  # just inside


def test_lift_round_trip(manifold):
    rng = np.random.default_rng(13)
    cap = min(manifold.reach, 2.0)
    for p in manifold.sample(15, seed=17):
        chart = tangent_chart(manifold, p)
        y = rng.normal(size=manifold.m)
        y *= rng.uniform(0.05, 0.4) * cap / np.linalg.norm(y)
        lifted = lift_from_tangent(chart, y, max_radius=cap)
        assert manifold.implicit_residual(lifted) < 1e-9
        back = project_to_tangent(chart, lifted)
        assert back == pytest.approx(y, abs=1e-9)


def test_torus_lift_without_solution_raises():
    M = TorusOfRevolution(2, 0.5)
    chart = tangent_chart(M, np.array([2.5, 0.0, 0.0]))
    # the tube circle only reaches r=0.5 along the second tangent axis
    with pytest.raises(NoConvergence):
        lift_from_tangent(chart, np.array([0.0, 0.9]), max_radius=2.0)


def test_clifford_lift_per_block_cap():
    M = CliffordTorus(0.5)
    chart = tangent_chart(M, M.sample(1, seed=3)[0])
    with pytest.raises(OutOfChart):
        lift_from_tangent(chart, np.array([0.6, 0.0]), max_radius=1.0)


# ===== the sampling-theory inequalities =====

def test_sphere_distance_to_tangent_is_sharp():
    # on the unit sphere d(y, T_x) equals |x-y|^2 / 2 exactly
    M = UnitSphere(2, 3)
    pts = M.sample(60, seed=29)
    for x in pts[:10]:
        chart = tangent_chart(M, x)
        for y in pts:
            rel = y - x
            d_tan = np.linalg.norm(rel - chart.frame.basis.T @ (chart.frame.basis @ rel))
            assert d_tan == pytest.approx((rel @ rel) / 2.0, abs=1e-12)


def test_distance_to_tangent_bound(manifold):
    if not math.isfinite(manifold.reach):
        pytest.skip("bound trivial for the flat patch")
    pts = manifold.sample(120, seed=31)
    for x in pts[:15]:
        chart = tangent_chart(manifold, x)
        for y in pts:
            r = np.linalg.norm(y - x)
            if not 0 < r < manifold.reach:
                continue
            rel = y - x
            d_tan = np.linalg.norm(
                rel - chart.frame.basis.T @ (chart.frame.basis @ rel))
            assert d_tan <= r * r / (2 * manifold.reach) * (1 + 1e-9)


def test_lift_gap_bound(manifold):
    if not math.isfinite(manifold.reach):
        pytest.skip("lift gap is zero on the flat patch")
    rng = np.random.default_rng(37)
    for p in manifold.sample(15, seed=41):
        chart = tangent_chart(manifold, p)
        y = rng.normal(size=manifold.m)
        r = rng.uniform(0.02, 0.25) * manifold.reach
        y *= r / np.linalg.norm(y)
        lifted = lift_from_tangent(chart, y)
        emb = p + chart.frame.basis.T @ y
        assert np.linalg.norm(emb - lifted) <= 2 * r * r / manifold.reach


def test_tangent_variation_bound(manifold):
    if not math.isfinite(manifold.reach):
        pytest.skip("tangent space is constant on the flat patch")
    pts = manifold.sample(200, seed=43)
    charts = [tangent_chart(manifold, p) for p in pts[:40]]
    for i, ci in enumerate(charts):
        for j, cj in enumerate(charts):
            if i == j:
                continue
            r = np.linalg.norm(pts[i] - pts[j])
            if r > manifold.reach / 4:
                continue
            ang = subspace_angle(ci.frame, cj.frame)
            assert math.sin(ang) < 6 * r / manifold.reach


# ===== nets =====

def test_net_is_sparse_and_covers():
    M = UnitSphere(2, 3)
    dense = M.sample(2000, seed=47)
    net = farthest_point_net(dense, 0.5, seed=0)
    assert net.sparsity > 0.5
    from scipy.spatial import cKDTree
    d, _ = cKDTree(net.points).query(dense)
    assert d.max() <= 0.5
    assert net.epsilon == 0.5


def test_net_determinism_and_seed_start():
    rng = np.random.default_rng(53)
    dense = rng.normal(size=(300, 3))
    a = farthest_point_net(dense, 0.8, seed=7)
    b = farthest_point_net(dense, 0.8, seed=7)
    assert np.array_equal(a.points, b.points)
    assert np.array_equal(a.points[0], dense[7])


def test_net_single_point_when_eps_huge():
    dense = np.random.default_rng(59).normal(size=(50, 2))
    net = farthest_point_net(dense, 1e6)
    assert len(net.points) == 1
    assert math.isinf(net.sparsity)


def test_net_empty_input():
    with pytest.raises(EmptyInput):
        farthest_point_net(np.zeros((0, 3)), 0.1)


def test_covering_radius_estimate_tracks_density():
    M = TorusOfRevolution(2, 0.5)
    dense = M.sample(4000, seed=61)
    cov = covering_radius_estimate(M, dense, seed=2)
    assert cov < 0.25
    net = farthest_point_net(dense, 0.6, seed=0)
    cov_net = covering_radius_estimate(M, net.points, seed=2)
    assert cov < cov_net <= 0.6 + cov + 1e-9


# ===== geodesics =====

@pytest.fixture(scope="module")
def sphere_graph():
    return build_geodesic_graph(UnitSphere(2, 3), 8000, seed=67)


def test_geodesic_zero_for_same_point(sphere_graph):
    x = np.array([1.0, 0.0, 0.0])
    assert geodesic_estimate(sphere_graph, x, x) == 0.0


def test_geodesic_antipodes(sphere_graph):
    d = geodesic_estimate(sphere_graph, np.array([0.0, 0.0, 1.0]),
                          np.array([0.0, 0.0, -1.0]))
    assert d == pytest.approx(math.pi, abs=0.05)


def test_geodesic_small_angle(sphere_graph):
    theta = 0.4
    x = np.array([1.0, 0.0, 0.0])
    y = np.array([math.cos(theta), math.sin(theta), 0.0])
    d = geodesic_estimate(sphere_graph, x, y)
    chord = np.linalg.norm(x - y)
    assert chord - 2 * sphere_graph.h <= d <= theta + 2 * sphere_graph.h
    # intrinsic vs extrinsic comparison bound
    assert d <= chord * (1 + 2 * chord) + 2 * sphere_graph.h


def test_geodesic_many_matches_single(sphere_graph):
    rng = np.random.default_rng(71)
    src = rng.normal(size=(3, 3))
    src /= np.linalg.norm(src, axis=1, keepdims=True)
    tgt = rng.normal(size=(4, 3))
    tgt /= np.linalg.norm(tgt, axis=1, keepdims=True)
    mat = geodesic_estimate_many(sphere_graph, src, tgt)
    assert mat.shape == (3, 4)
    for i in range(3):
        for j in range(4):
            assert mat[i, j] == pytest.approx(
                geodesic_estimate(sphere_graph, src[i], tgt[j]), abs=1e-12)


def test_geodesic_disconnected():
    M = UnitSphere(2, 3)
    g = build_geodesic_graph(M, 50, seed=73, h=1e-6)
    with pytest.raises(DisconnectedGraph):
        geodesic_estimate(g, np.array([0.0, 0.0, 1.0]),
                          np.array([0.0, 0.0, -1.0]))


# ===== samples and I/O =====

def test_samples_lie_on_manifold(manifold):
    pts = manifold.sample(400, seed=79)
    assert pts.shape == (400, manifold.N)
    assert max(manifold.implicit_residual(p) for p in pts) <= 1e-9
    again = manifold.sample(400, seed=79)
    assert np.array_equal(pts, again)


def test_torus_sample_covers_tube_angle():
    pts = TorusOfRevolution(2, 0.5).sample(3000, seed=83)
    assert pts[:, 2].max() > 0.48
    assert pts[:, 2].min() < -0.48
    rho = np.hypot(pts[:, 0], pts[:, 1])
    assert rho.min() < 1.55
    assert rho.max() > 2.45


def test_flat_sample_extent():
    pts = FlatPatch(2, 4).sample(100, seed=89, extent=3.0)
    assert pts[:, :2].min() >= 0.0
    assert pts[:, :2].max() <= 3.0
    assert np.abs(pts[:, 2:]).max() == 0.0


def test_point_io_round_trip(tmp_path):
    pts = np.random.default_rng(97).normal(size=(17, 3))
    path = tmp_path / "pts.txt"
    write_points(path, pts, header="demo points\nsecond line")
    back = read_points(path)
    assert back == pytest.approx(pts, abs=0)


def test_point_io_csv_and_comments(tmp_path):
    path = tmp_path / "pts.csv"
    path.write_text("# heading\n1.0, 2.0, 3.0\n4 5 6\n\n")
    assert read_points(path) == pytest.approx(
        np.array([[1.0, 2, 3], [4, 5, 6]]))


def test_point_io_ragged_rows(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("1 2 3\n4 5\n")
    with pytest.raises(ValueError):
        read_points(path)
