"""Trixel Topological Mesh construction.

The pipeline is DMUM field -> vertices at its local minima -> Delaunay
triangulation -> rasterisation of pixels into triangles ("trixels").

Mesh geometry uses pixel-corner coordinates: pixel ``(col, row)`` covers the
unit square ``[col, col+1] x [row, row+1]`` and its centre is
``(col + 0.5, row + 0.5)``. Vertices are integer corners, so pixel centres
never fall on axis-aligned mesh edges, and all geometric predicates are
evaluated exactly in integer arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np
from PIL import Image, ImageDraw
from scipy import ndimage
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import ImageTooSmall, MeshMismatch, TooFewVertices
from .imaging import check_image, gradient_magnitude, to_grayscale


@dataclass(frozen=True)
class DmumParams:
    seed_scale: float = 16.0   # cost C for a pixel with zero magnitude, in 3-4 chamfer units
    min_spacing: float = 6.0   # r_min
    border_step: int = 16      # r_border

    def __post_init__(self):
        if self.seed_scale <= 0:
            raise ValueError("seed_scale must be positive")
        if self.min_spacing < 1:
            raise ValueError("min_spacing must be >= 1")
        if self.border_step < 2:
            raise ValueError("border_step must be >= 2")


@dataclass(frozen=True)
class Trixel:
    id: int
    vertices: tuple[int, int, int]
    pixel_members: np.ndarray  # (n, 2) array of (x, y) pixel indices
    mean_color: np.ndarray
    centroid: tuple[float, float]
    neighbors: tuple[int, ...]


@dataclass
class TrixelMesh:
    image_dims: tuple[int, int]          # (width, height)
    vertices: np.ndarray                 # (nv, 2) int corner coordinates
    triangles: np.ndarray                # (nt, 3) vertex indices, counter-clockwise in x-right/y-up
    neighbors: np.ndarray                # (nt, 3) trixel across the edge opposite vertex k, -1 if none
    unit_map: np.ndarray | None = None   # (h, w) trixel id per pixel
    mean_color: np.ndarray | None = None
    area: np.ndarray | None = field(default=None)

    @property
    def n_trixels(self) -> int:
        return len(self.triangles)

    @property
    def centroid(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    @property
    def is_complete(self) -> bool:
        return self.unit_map is not None

    def edges(self) -> np.ndarray:
        """Unique adjacent pairs ``(i, j)`` with ``i < j``."""
        i = np.repeat(np.arange(self.n_trixels), 3)
        j = self.neighbors.ravel()
        keep = j > i
        return np.stack([i[keep], j[keep]], axis=1)

    def pixel_members(self) -> list[np.ndarray]:
        """``(n_i, 2)`` arrays of ``(x, y)`` member pixels for every trixel, in one pass."""
        flat = self.unit_map.ravel()
        order = np.argsort(flat, kind="stable")
        w = self.unit_map.shape[1]
        xy = np.stack([order % w, order // w], axis=1)
        bounds = np.cumsum(np.bincount(flat, minlength=self.n_trixels))[:-1]
        return np.split(xy, bounds)

    def trixel(self, i: int) -> Trixel:
        members = np.empty((0, 2), np.int64)
        if self.unit_map is not None:
            ys, xs = np.nonzero(self.unit_map == i)
            members = np.stack([xs, ys], axis=1)
        color = self.mean_color[i] if self.mean_color is not None else None
        nbrs = tuple(int(n) for n in self.neighbors[i] if n >= 0)
        return Trixel(i, tuple(int(v) for v in self.triangles[i]), members, color,
                      tuple(self.centroid[i]), nbrs)


# ---------------------------------------------------------------------------
# DMUM

@numba.njit(cache=True)
def _chamfer34(d):
    h, w = d.shape
    for y in range(h):
        for x in range(w):
            v = d[y, x]
            if x > 0:
                v = min(v, d[y, x - 1] + 3.0)
            if y > 0:
                v = min(v, d[y - 1, x] + 3.0)
                if x > 0:
                    v = min(v, d[y - 1, x - 1] + 4.0)
                if x < w - 1:
                    v = min(v, d[y - 1, x + 1] + 4.0)
            d[y, x] = v
    for y in range(h - 1, -1, -1):
        for x in range(w - 1, -1, -1):
            v = d[y, x]
            if x < w - 1:
                v = min(v, d[y, x + 1] + 3.0)
            if y < h - 1:
                v = min(v, d[y + 1, x] + 3.0)
                if x < w - 1:
                    v = min(v, d[y + 1, x + 1] + 4.0)
                if x > 0:
                    v = min(v, d[y + 1, x - 1] + 4.0)
            d[y, x] = v
    return d


def compute_dmum(gray, params: DmumParams = DmumParams()) -> np.ndarray:
    """Soft-seeded chamfer distance to strong gradient magnitude.

    ``D(p) = min_q chamfer(p, q) + C * (1 - M(q))`` with ``M`` the rescaled
    Sobel magnitude; strong edges are near-zero-cost sources and no threshold
    is ever applied.
    """
    return dmum_from_magnitude(gradient_magnitude(gray), params)


def dmum_from_magnitude(mag, params: DmumParams = DmumParams()) -> np.ndarray:
    """DMUM of a magnitude field already scaled to ``[0, 1]``."""
    mag = np.asarray(mag, np.float64)
    return _chamfer34(params.seed_scale * (1.0 - mag))


# ---------------------------------------------------------------------------
# vertices

def local_minima(dmum) -> np.ndarray:
    """Pixels no higher than any 8-neighbour and strictly lower than at least one.

    Flat neighbourhoods yield nothing, but a plateau that drains at one end
    (an edge running into a stronger corner) still contributes its pixels.
    """
    d = np.asarray(dmum, np.float64)
    lowest = ndimage.minimum_filter(d, size=3, mode="nearest") == d
    highest = ndimage.maximum_filter(d, size=3, mode="nearest") > d
    return lowest & highest


class _SpacingGrid:
    def __init__(self, radius):
        self.r2 = radius * radius
        self.cell = max(float(radius), 1.0)
        self.buckets: dict[tuple[int, int], list[tuple[int, int]]] = {}

    def _key(self, x, y):
        return int(x // self.cell), int(y // self.cell)

    def clear_of(self, x, y) -> bool:
        kx, ky = self._key(x, y)
        for bx in (kx - 1, kx, kx + 1):
            for by in (ky - 1, ky, ky + 1):
                for px, py in self.buckets.get((bx, by), ()):
                    if (px - x) ** 2 + (py - y) ** 2 < self.r2:
                        return False
        return True

    def add(self, x, y):
        self.buckets.setdefault(self._key(x, y), []).append((x, y))


def border_points(width, height, step) -> list[tuple[int, int]]:
    pts = [(0, 0), (width, 0), (0, height), (width, height)]
    for x in range(step, width, step):
        pts += [(x, 0), (x, height)]
    for y in range(step, height, step):
        pts += [(0, y), (width, y)]
    return pts


def extract_vertices(dmum, params: DmumParams = DmumParams()) -> np.ndarray:
    """DMUM minima thinned to ``min_spacing``, plus corners and border points.

    Returns an ``(n, 2)`` int array of corner coordinates. Minima touching the
    image frame are thinned first, then interior minima against everything
    kept. Ties in DMUM value go to the smaller pixel ``(x, y)``. Regular border
    points only fill stretches of frame at least ``2 * min_spacing`` away from
    any kept minimum; the four corners are always present.
    """
    d = np.asarray(dmum, np.float64)
    h, w = d.shape
    ys, xs = np.nonzero(local_minima(d))
    vals = d[ys, xs]
    order = np.lexsort((ys, xs, vals))
    xs, ys = xs[order], ys[order]
    on_border = (xs == 0) | (ys == 0) | (xs == w - 1) | (ys == h - 1)
    # a minimum at pixel (c, r) emits its lower-right corner; first row/column snap to the frame
    vx = np.where(xs == 0, 0, xs + 1).tolist()
    vy = np.where(ys == 0, 0, ys + 1).tolist()
    on_border = on_border.tolist()

    grid = _SpacingGrid(params.min_spacing)
    minima = []
    for pass_border in (True, False):
        for x, y, b in zip(vx, vy, on_border):
            if b == pass_border and grid.clear_of(x, y):
                grid.add(x, y)
                minima.append((x, y))

    corners = [(0, 0), (w, 0), (0, h), (w, h)]
    out = list(corners)
    seen = set(corners)
    far = _SpacingGrid(2 * params.min_spacing)
    for p in minima:
        far.add(*p)
    for p in border_points(w, h, params.border_step)[4:]:
        if p not in seen and far.clear_of(*p):
            seen.add(p)
            out.append(p)
    for p in minima:
        if p not in seen:
            seen.add(p)
            out.append(p)
    return np.array(out, dtype=np.int64)


# ---------------------------------------------------------------------------
# Delaunay triangulation (Bowyer-Watson)

def _orient(a, b, c):
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _incircle(a, b, c, d):
    """Positive iff ``d`` lies strictly inside the circle through ccw ``a, b, c``."""
    adx, ady = a[0] - d[0], a[1] - d[1]
    bdx, bdy = b[0] - d[0], b[1] - d[1]
    cdx, cdy = c[0] - d[0], c[1] - d[1]
    ad = adx * adx + ady * ady
    bd = bdx * bdx + bdy * bdy
    cd = cdx * cdx + cdy * cdy
    return (adx * (bdy * cd - bd * cdy)
            - ady * (bdx * cd - bd * cdx)
            + ad * (bdx * cdy - bdy * cdx))


class _BowyerWatson:
    def __init__(self, span: int):
        m = 64 * span * span + 1024
        self.pts = [(-m, -m), (m, -m), (0, m)]
        self.tv = [[0, 1, 2]]
        self.tn = [[-1, -1, -1]]
        self.alive = [True]
        self.last = 0

    def _locate(self, p):
        t = self.last if self.alive[self.last] else self.alive.index(True)
        pts = self.pts
        while True:
            v = self.tv[t]
            for i in range(3):
                if _orient(pts[v[(i + 1) % 3]], pts[v[(i + 2) % 3]], p) < 0:
                    t = self.tn[t][i]
                    break
            else:
                return t

    def insert(self, p):
        pts, tv, tn, alive = self.pts, self.tv, self.tn, self.alive
        pi = len(pts)
        pts.append(p)
        start = self._locate(p)
        bad = {start}
        stack = [start]
        while stack:
            t = stack.pop()
            for nb in tn[t]:
                if nb >= 0 and nb not in bad:
                    a, b, c = tv[nb]
                    if _incircle(pts[a], pts[b], pts[c], p) > 0:
                        bad.add(nb)
                        stack.append(nb)
        boundary = []
        for t in sorted(bad):
            v = tv[t]
            for i in range(3):
                nb = tn[t][i]
                if nb < 0 or nb not in bad:
                    boundary.append((v[(i + 1) % 3], v[(i + 2) % 3], nb, t))
            alive[t] = False
        by_start = {}
        created = []
        for a, b, nb, old in boundary:
            nt = len(tv)
            tv.append([a, b, pi])
            tn.append([-1, -1, nb])
            alive.append(True)
            by_start[a] = nt
            created.append(nt)
            if nb >= 0:
                row = tn[nb]
                row[row.index(old)] = nt
        for nt in created:
            a, b, _ = tv[nt]
            tn[nt][0] = by_start[b]
            nxt = by_start[b]
            tn[nxt][1] = nt
        self.last = created[-1]

    def result(self):
        keep = [t for t in range(len(self.tv))
                if self.alive[t] and min(self.tv[t]) >= 3]
        new_id = {t: i for i, t in enumerate(keep)}
        tri = np.array([[v - 3 for v in self.tv[t]] for t in keep], dtype=np.int64).reshape(-1, 3)
        nbr = np.array([[new_id.get(n, -1) for n in self.tn[t]] for t in keep],
                       dtype=np.int64).reshape(-1, 3)
        return tri, nbr


def triangulate(vertices, image_dims) -> TrixelMesh:
    """Incremental Delaunay triangulation; exact duplicates are dropped.

    Cocircular ties are resolved by insertion order (a point on a
    circumcircle does not invalidate the triangle).
    """
    pts = []
    seen = set()
    for x, y in np.asarray(vertices, dtype=np.int64).reshape(-1, 2).tolist():
        if (x, y) not in seen:
            seen.add((x, y))
            pts.append((x, y))
    if len(pts) < 3:
        raise TooFewVertices(f"need 3 distinct vertices, got {len(pts)}")
    if all(_orient(pts[0], pts[1], q) == 0 for q in pts[2:]):
        raise TooFewVertices("all vertices are collinear")
    span = max(max(abs(x), abs(y)) for x, y in pts) + 1
    bw = _BowyerWatson(span)
    for p in pts:
        bw.insert(p)
    tri, nbr = bw.result()
    return TrixelMesh(tuple(int(v) for v in image_dims), np.array(pts, dtype=np.int64), tri, nbr)


# ---------------------------------------------------------------------------
# rasterisation

@numba.njit(cache=True)
def _raster(verts2, tris, h, w):
    out = np.full((h, w), -1, np.int32)
    for t in range(tris.shape[0]):
        ax, ay = verts2[tris[t, 0], 0], verts2[tris[t, 0], 1]
        bx, by = verts2[tris[t, 1], 0], verts2[tris[t, 1], 1]
        cx, cy = verts2[tris[t, 2], 0], verts2[tris[t, 2], 1]
        x0 = max(0, min(ax, bx, cx) // 2 - 1)
        x1 = min(w - 1, max(ax, bx, cx) // 2 + 1)
        y0 = max(0, min(ay, by, cy) // 2 - 1)
        y1 = min(h - 1, max(ay, by, cy) // 2 + 1)
        for r in range(y0, y1 + 1):
            py = 2 * r + 1
            for c in range(x0, x1 + 1):
                if out[r, c] >= 0:
                    continue
                px = 2 * c + 1
                e0 = (cx - bx) * (py - by) - (cy - by) * (px - bx)
                e1 = (ax - cx) * (py - cy) - (ay - cy) * (px - cx)
                e2 = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
                if e0 >= 0 and e1 >= 0 and e2 >= 0:
                    out[r, c] = t
    return out


def rasterize_and_summarize(mesh: TrixelMesh, img) -> TrixelMesh:
    """Assign pixel centres to trixels and compute per-trixel colour and area.

    Triangles are scanned in id order, so a centre lying exactly on a shared
    edge goes to the smaller id. Sliver trixels that receive no pixel take
    the bilinear colour at their centroid.
    """
    img = check_image(img)
    h, w = img.shape[:2]
    if tuple(mesh.image_dims) != (w, h):
        raise MeshMismatch(f"mesh is {mesh.image_dims}, image is {(w, h)}")
    umap = _raster(mesh.vertices * 2, mesh.triangles, h, w)
    cent = mesh.centroid
    missing = umap < 0
    if missing.any():
        ys, xs = np.nonzero(missing)
        d2 = ((xs[:, None] + 0.5 - cent[None, :, 0]) ** 2
              + (ys[:, None] + 0.5 - cent[None, :, 1]) ** 2)
        umap[ys, xs] = np.argmin(d2, axis=1)
    nt = mesh.n_trixels
    flat = umap.ravel()
    area = np.bincount(flat, minlength=nt).astype(np.float64)
    color = np.stack([np.bincount(flat, weights=img[..., c].ravel(), minlength=nt)
                      for c in range(3)], axis=1)
    empty = area == 0
    color[~empty] /= area[~empty, None]
    if empty.any():
        coords = np.array([cent[empty, 1] - 0.5, cent[empty, 0] - 0.5])
        color[empty] = np.stack([ndimage.map_coordinates(img[..., c], coords, order=1,
                                                         mode="nearest")
                                 for c in range(3)], axis=1)
    return TrixelMesh(mesh.image_dims, mesh.vertices, mesh.triangles, mesh.neighbors,
                      umap, np.clip(color, 0.0, 255.0), area)


def build_mesh(img, params: DmumParams = DmumParams()) -> TrixelMesh:
    img = check_image(img)
    h, w = img.shape[:2]
    if min(h, w) < 3:
        raise ImageTooSmall(f"need at least 3x3 pixels, got {w}x{h}")
    dmum = compute_dmum(to_grayscale(img), params)
    mesh = triangulate(extract_vertices(dmum, params), (w, h))
    return rasterize_and_summarize(mesh, img)


# ---------------------------------------------------------------------------
# text dump

def dump_mesh(mesh: TrixelMesh, path) -> None:
    w, h = mesh.image_dims
    lines = [f"TRITOM {w} {h} {len(mesh.vertices)} {mesh.n_trixels}"]
    lines += [f"v {x} {y}" for x, y in mesh.vertices.tolist()]
    lines += [f"t {i} {j} {k}" for i, j, k in mesh.triangles.tolist()]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def adjacency_from_triangles(triangles) -> np.ndarray:
    owner = {}
    nbr = np.full((len(triangles), 3), -1, np.int64)
    for t, (a, b, c) in enumerate(np.asarray(triangles).tolist()):
        for k, (u, v) in enumerate(((b, c), (c, a), (a, b))):
            key = (min(u, v), max(u, v))
            if key in owner:
                s, sk = owner.pop(key)
                nbr[t, k] = s
                nbr[s, sk] = t
            else:
                owner[key] = (t, k)
    return nbr


def load_mesh(path) -> TrixelMesh:
    """Read a dump; adjacency is recomputed. Pixel data needs rasterising again."""
    with open(path) as fh:
        header = fh.readline().split()
        if not header or header[0] != "TRITOM":
            raise ValueError(f"{path}: not a TRITOM dump")
        w, h, nv, nt = map(int, header[1:5])
        verts, tris = [], []
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append((int(parts[1]), int(parts[2])))
            elif parts[0] == "t":
                tris.append(tuple(int(p) for p in parts[1:4]))
    if len(verts) != nv or len(tris) != nt:
        raise ValueError(f"{path}: header counts do not match body")
    tris = np.array(tris, dtype=np.int64).reshape(-1, 3)
    return TrixelMesh((w, h), np.array(verts, dtype=np.int64), tris,
                      adjacency_from_triangles(tris))


def draw_overlay(img, mesh: TrixelMesh, color=(255, 255, 0)):
    """Return a PIL image with the trixel edges drawn over ``img``."""
    im = Image.fromarray(np.clip(np.rint(check_image(img)), 0, 255).astype(np.uint8))
    draw = ImageDraw.Draw(im)
    for a, b, c in mesh.triangles.tolist():
        pts = [tuple(mesh.vertices[v].tolist()) for v in (a, b, c, a)]
        draw.line(pts, fill=color, width=1)
    return im


class TriToM(TransformerMixin, BaseEstimator):
    """Trixel superpixels as a transformer.

    ``fit`` builds the mesh for one image; ``transform`` returns the per-pixel
    trixel id map (the same image must be passed).

    Parameters
    ----------
    seed_scale : float, default=16.0
        DMUM cost for a pixel with zero gradient magnitude.
    min_spacing : float, default=6.0
        Minimum distance between interior vertices.
    border_step : int, default=16
        Spacing of the fixed vertices along the image frame.
    """

    def __init__(self, seed_scale=16.0, min_spacing=6.0, border_step=16):
        self.seed_scale = seed_scale
        self.min_spacing = min_spacing
        self.border_step = border_step

    def _params(self):
        return DmumParams(self.seed_scale, self.min_spacing, self.border_step)

    def fit(self, X, y=None):
        self.mesh_ = build_mesh(X, self._params())
        self.n_trixels_ = self.mesh_.n_trixels
        return self

    def transform(self, X):
        check_is_fitted(self, "mesh_")
        X = check_image(X)
        if X.shape[:2] != self.mesh_.unit_map.shape:
            raise MeshMismatch("transform expects the image the mesh was fitted on")
        return self.mesh_.unit_map.copy()
