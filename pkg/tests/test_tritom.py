import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trixelseg.exceptions import ImageTooSmall, MeshMismatch, TooFewVertices
from trixelseg.tritom import (DmumParams, TriToM, build_mesh, compute_dmum, dmum_from_magnitude,
                              draw_overlay, dump_mesh, extract_vertices, load_mesh,
                              rasterize_and_summarize, triangulate)


def delaunay_violations(mesh, tol=1e-9):
    """Brute-force empty-circumcircle check over every (triangle, vertex) pair."""
    v = mesh.vertices.astype(np.float64)
    bad = 0
    for a, b, c in mesh.triangles:
        pa, pb, pc = v[a], v[b], v[c]
        orient = (pb[0] - pa[0]) * (pc[1] - pa[1]) - (pb[1] - pa[1]) * (pc[0] - pa[0])
        ad, bd, cd = pa - v, pb - v, pc - v
        det = (ad[:, 0] * (bd[:, 1] * (cd ** 2).sum(1) - (bd ** 2).sum(1) * cd[:, 1])
               - ad[:, 1] * (bd[:, 0] * (cd ** 2).sum(1) - (bd ** 2).sum(1) * cd[:, 0])
               + (ad ** 2).sum(1) * (bd[:, 0] * cd[:, 1] - bd[:, 1] * cd[:, 0]))
        det *= np.sign(orient)
        det[[a, b, c]] = 0
        bad += int((det > tol).sum())
    return bad


def check_mesh(mesh):
    w, h = mesh.image_dims
    assert mesh.unit_map.shape == (h, w)
    assert (mesh.unit_map >= 0).all() and (mesh.unit_map < mesh.n_trixels).all()
    assert mesh.area.sum() == w * h
    nb = mesh.neighbors
    for t in range(mesh.n_trixels):
        for n in nb[t]:
            if n >= 0:
                assert t in nb[n]
    assert ((nb >= 0).sum(1) <= 3).all()


def step_image(w=64, h=48, col=30):
    img = np.zeros((h, w, 3))
    img[:, col:] = 255
    return img


# --- DMUM -----------------------------------------------------------------

def test_dmum_constant_image_is_seed_cost():
    p = DmumParams()
    d = compute_dmum(np.full((12, 15), 90.0), p)
    assert np.all(d == p.seed_scale)


def test_dmum_single_source():
    p = DmumParams(seed_scale=16)
    mag = np.zeros((9, 9))
    mag[4, 4] = 1.0
    d = dmum_from_magnitude(mag, p)
    ys, xs = np.mgrid[:9, :9]
    dx, dy = np.abs(xs - 4), np.abs(ys - 4)
    chamfer = 4 * np.minimum(dx, dy) + 3 * np.abs(dx - dy)
    assert np.array_equal(d, np.minimum(16.0, chamfer))


def test_dmum_ridge_between_edges():
    g = np.zeros((20, 41))
    g[:, 10:30] = 255  # edges at columns 9/10 and 29/30
    d = compute_dmum(g, DmumParams(seed_scale=100))
    row = d[10]
    assert row[19] == row[20] or row[20] == row.max()
    assert np.argmax(row[10:30]) + 10 in (19, 20)
    assert np.allclose(row[10:30], row[10:30][::-1])


# --- vertices ---------------------------------------------------------------

def test_vertices_constant_image_border_only():
    w, h = 80, 60
    v = extract_vertices(compute_dmum(np.zeros((h, w))), DmumParams())
    on_frame = (v[:, 0] == 0) | (v[:, 0] == w) | (v[:, 1] == 0) | (v[:, 1] == h)
    assert on_frame.all()
    for c in [(0, 0), (w, 0), (0, h), (w, h)]:
        assert c in map(tuple, v.tolist())


def test_vertices_along_step_edge():
    p = DmumParams()
    img = step_image()
    v = extract_vertices(compute_dmum(img[..., 0], p), p)
    interior = v[(v[:, 0] > 0) & (v[:, 0] < 64) & (v[:, 1] > 0) & (v[:, 1] < 48)]
    assert len(interior) >= 5
    assert set(interior[:, 0].tolist()) == {30}
    ys = np.sort(v[v[:, 0] == 30][:, 1])
    assert np.diff(ys).min() >= p.min_spacing


def test_vertices_min_spacing_is_width():
    rng = np.random.default_rng(0)
    g = rng.uniform(0, 255, (30, 40))
    p = DmumParams(min_spacing=40)
    v = extract_vertices(compute_dmum(g, p), p)
    interior = (v[:, 0] > 0) & (v[:, 0] < 40) & (v[:, 1] > 0) & (v[:, 1] < 30)
    assert interior.sum() <= 1


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(2, 12))
def test_minima_spacing(seed, r):
    rng = np.random.default_rng(seed)
    g = rng.uniform(0, 255, (40, 50))
    p = DmumParams(min_spacing=r)
    v = extract_vertices(compute_dmum(g, p), p)
    w, h = 50, 40
    inner = v[(v[:, 0] > 0) & (v[:, 0] < w) & (v[:, 1] > 0) & (v[:, 1] < h)].astype(float)
    if len(inner) > 1:
        d = np.sqrt(((inner[:, None] - inner[None]) ** 2).sum(-1))
        d[np.diag_indices(len(inner))] = np.inf
        assert d.min() >= r


# --- triangulation ------------------------------------------------------------

def test_two_trixels_from_corners():
    m = triangulate([(0, 0), (10, 0), (0, 8), (10, 8)], (10, 8))
    assert m.n_trixels == 2
    assert ((m.neighbors >= 0).sum(1) == 1).all()


def test_fan_from_center():
    m = triangulate([(0, 0), (10, 0), (0, 10), (10, 10), (5, 5)], (10, 10))
    assert m.n_trixels == 4
    assert ((m.neighbors >= 0).sum(1) == 2).all()


def test_too_few_vertices():
    with pytest.raises(TooFewVertices):
        triangulate([(0, 0), (1, 1), (0, 0)], (2, 2))
    with pytest.raises(TooFewVertices):
        triangulate([(0, 0), (1, 1), (2, 2)], (2, 2))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 60), st.integers(0, 60)), min_size=0, max_size=190))
def test_delaunay_random_points(points):
    pts = [(0, 0), (60, 0), (0, 60), (60, 60)] + points
    m = triangulate(pts, (60, 60))
    assert delaunay_violations(m) == 0
    # Euler: a triangulated convex polygon with n points, k on hull: 2n - 2 - k triangles
    n = len(m.vertices)
    hull = sum(1 for x, y in m.vertices.tolist() if x in (0, 60) or y in (0, 60))
    assert m.n_trixels == 2 * n - 2 - hull


# --- rasterisation --------------------------------------------------------------

def test_uniform_two_trixels():
    img = np.full((8, 10, 3), [10.0, 20.0, 30.0])
    m = rasterize_and_summarize(triangulate([(0, 0), (10, 0), (0, 8), (10, 8)], (10, 8)), img)
    assert np.allclose(m.mean_color, [10, 20, 30])
    check_mesh(m)


def test_red_blue_halves():
    img = np.zeros((8, 10, 3))
    img[:, :5] = [255, 0, 0]
    img[:, 5:] = [0, 0, 255]
    verts = [(0, 0), (5, 0), (10, 0), (0, 8), (5, 8), (10, 8)]
    m = rasterize_and_summarize(triangulate(verts, (10, 8)), img)
    for t in range(m.n_trixels):
        left = m.centroid[t, 0] < 5
        assert np.allclose(m.mean_color[t], [255, 0, 0] if left else [0, 0, 255])
    check_mesh(m)


def test_raster_mismatch():
    m = triangulate([(0, 0), (10, 0), (0, 8), (10, 8)], (10, 8))
    with pytest.raises(MeshMismatch):
        rasterize_and_summarize(m, np.zeros((9, 10, 3)))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(12, 70), st.integers(12, 70))
def test_mesh_partition_and_adjacency(seed, w, h):
    rng = np.random.default_rng(seed)
    img = rng.uniform(0, 255, (h, w, 3))
    m = build_mesh(img)
    check_mesh(m)
    counts = np.bincount(m.unit_map.ravel(), minlength=m.n_trixels)
    assert counts.sum() == w * h
    t = m.trixel(int(np.argmax(counts)))
    assert len(t.pixel_members) == counts.max()
    assert np.allclose(t.mean_color, img[t.pixel_members[:, 1], t.pixel_members[:, 0]].mean(0))
    bulk = m.pixel_members()
    assert len(bulk) == m.n_trixels
    assert np.array_equal(bulk[t.id], t.pixel_members)


def edge_density_ratio(mesh, col):
    """Median covering-trixel area near a vertical edge over the median elsewhere, per pixel."""
    w, h = mesh.image_dims
    area = mesh.area[mesh.unit_map]
    near = np.abs(np.arange(w) + 0.5 - col)[None, :].repeat(h, 0) <= 5
    return np.median(area[near]) / np.median(area[~near])


@pytest.mark.parametrize("w, h, col", [(128, 96, 64), (128, 96, 40), (64, 48, 30)])
def test_finer_near_edges(w, h, col):
    img = step_image(w, h, col)
    assert edge_density_ratio(build_mesh(img), col) < 1


def test_determinism_and_dump(tmp_path):
    rng = np.random.default_rng(4)
    img = rng.uniform(0, 255, (40, 50, 3))
    a, b = build_mesh(img), build_mesh(img)
    assert np.array_equal(a.triangles, b.triangles) and np.array_equal(a.unit_map, b.unit_map)
    dump_mesh(a, tmp_path / "a.tritom")
    dump_mesh(b, tmp_path / "b.tritom")
    assert (tmp_path / "a.tritom").read_bytes() == (tmp_path / "b.tritom").read_bytes()
    back = load_mesh(tmp_path / "a.tritom")
    assert np.array_equal(back.vertices, a.vertices)
    assert np.array_equal(back.triangles, a.triangles)
    assert np.array_equal(back.neighbors, a.neighbors)


def test_overlay_is_image():
    img = step_image()
    im = draw_overlay(img, build_mesh(img))
    assert im.size == (64, 48) and im.mode == "RGB"


def test_too_small():
    with pytest.raises(ImageTooSmall):
        build_mesh(np.zeros((2, 10, 3)))


def test_estimator():
    img = step_image()
    est = TriToM().fit(img)
    assert est.n_trixels_ == est.mesh_.n_trixels
    assert est.transform(img).shape == (48, 64)
    assert est.get_params()["min_spacing"] == 6.0
    with pytest.raises(MeshMismatch):
        est.transform(np.zeros((10, 10, 3)))
