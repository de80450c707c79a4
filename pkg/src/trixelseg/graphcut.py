"""Iterative GrabCut over pixels or trixels.

Each unit (pixel or trixel) is a graph node carrying a colour, a position and
an area. One outer iteration does the following:

1. assign every unit to its most likely Gaussian component;
2. refit both colour mixtures;
3. rebuild the terminal links;
4. relabel with a minimum cut.

Iteration stops at a label fixpoint, on a small relative energy change, or
after ``max_iter`` rounds. Neighbour links do not depend on the mixtures, so
they are computed once per run.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp
from sklearn.base import BaseEstimator
from sklearn.cluster import KMeans

from .exceptions import EmptyClass, MeshMismatch, NoEdges
from .imaging import check_image
from .maxflow import FlowGraph
from .trimap import Trimap, units_from_pixels
from .tritom import DmumParams, TrixelMesh, build_mesh

PIXEL, TRIXEL = "pixel", "trixel"
DENSITY_FLOOR = 1e-30
_LOG_FLOOR = math.log(DENSITY_FLOOR)
_LOG_2PI = math.log(2 * math.pi)


@dataclass
class UnitGraph:
    colors: np.ndarray      # (n, 3)
    positions: np.ndarray   # (n, 2) x, y
    area: np.ndarray        # (n,) pixel count
    edges: np.ndarray       # (m, 2) with u < v
    shape: tuple[int, int]  # image (h, w)
    mode: str = PIXEL
    unit_map: np.ndarray | None = None  # (h, w) unit per pixel, trixel mode only
    scatter: np.ndarray | None = None   # (n, 3, 3) colour covariance of member pixels

    @property
    def n_units(self) -> int:
        return len(self.colors)

    def paint(self, labels) -> np.ndarray:
        """Per-pixel mask from per-unit labels."""
        labels = np.asarray(labels, bool)
        if self.mode == PIXEL:
            return labels.reshape(self.shape)
        return labels[self.unit_map]


def _pixel_edges(h, w):
    idx = np.arange(h * w).reshape(h, w)
    parts = [(idx[:, :-1], idx[:, 1:]), (idx[:-1, :], idx[1:, :]),
             (idx[:-1, :-1], idx[1:, 1:]), (idx[:-1, 1:], idx[1:, :-1])]
    u = np.concatenate([a.ravel() for a, _ in parts])
    v = np.concatenate([b.ravel() for _, b in parts])
    return np.stack([np.minimum(u, v), np.maximum(u, v)], axis=1)


def build_unit_graph(img, mode=PIXEL, mesh: TrixelMesh | None = None) -> UnitGraph:
    """Pixels with 8-neighbour edges, or trixels with shared-edge adjacency."""
    img = check_image(img)
    h, w = img.shape[:2]
    if mode == PIXEL:
        ys, xs = np.mgrid[0:h, 0:w]
        pos = np.stack([xs.ravel(), ys.ravel()], axis=1).astype(np.float64)
        return UnitGraph(img.reshape(-1, 3).copy(), pos, np.ones(h * w), _pixel_edges(h, w),
                         (h, w), PIXEL)
    if mode != TRIXEL:
        raise ValueError(f"unknown unit mode {mode!r}")
    if mesh is None or not mesh.is_complete:
        raise MeshMismatch("trixel mode needs a rasterised mesh")
    if tuple(mesh.image_dims) != (w, h):
        raise MeshMismatch(f"mesh is {mesh.image_dims}, image is {(w, h)}")
    return UnitGraph(np.asarray(mesh.mean_color, np.float64), mesh.centroid.astype(np.float64),
                     np.asarray(mesh.area, np.float64), mesh.edges(), (h, w), TRIXEL,
                     mesh.unit_map, _member_scatter(img, mesh))


def _member_scatter(img, mesh: TrixelMesh) -> np.ndarray:
    flat = mesh.unit_map.ravel()
    n = mesh.n_trixels
    area = np.maximum(mesh.area, 1.0)
    px = img.reshape(-1, 3)
    mean = np.stack([np.bincount(flat, weights=px[:, c], minlength=n) for c in range(3)], 1)
    mean /= area[:, None]
    out = np.zeros((n, 3, 3))
    for a in range(3):
        for b in range(a, 3):
            m2 = np.bincount(flat, weights=px[:, a] * px[:, b], minlength=n) / area
            out[:, a, b] = out[:, b, a] = m2 - mean[:, a] * mean[:, b]
    out[mesh.area == 0] = 0.0
    return out


def _color_diffs(g: UnitGraph) -> np.ndarray:
    d = g.colors[g.edges[:, 0]] - g.colors[g.edges[:, 1]]
    return np.einsum("ij,ij->i", d, d)


def compute_beta(g: UnitGraph, squared: bool = True) -> float:
    """``1 / (2 * mean squared colour difference)`` over edges; 0 for a flat image.

    ``squared=False`` averages plain distances instead.
    """
    if len(g.edges) == 0:
        raise NoEdges("graph has no edges")
    d2 = _color_diffs(g)
    mean = d2.mean() if squared else np.sqrt(d2).mean()
    return 0.0 if mean == 0 else 1.0 / (2.0 * mean)


def n_link(g: UnitGraph, i: int, j: int, beta: float, gamma: float = 50.0) -> float:
    dz = g.colors[i] - g.colors[j]
    dist = float(np.hypot(*(g.positions[i] - g.positions[j])))
    return gamma / dist * math.exp(-beta * float(dz @ dz))


def n_links(g: UnitGraph, beta: float, gamma: float = 50.0) -> np.ndarray:
    """Vectorised :func:`n_link` over ``g.edges``."""
    dp = g.positions[g.edges[:, 0]] - g.positions[g.edges[:, 1]]
    dist = np.hypot(dp[:, 0], dp[:, 1])
    return gamma / dist * np.exp(-beta * _color_diffs(g))


def init_segmentation(trimap: Trimap) -> np.ndarray:
    """Unknown units start as foreground."""
    return ~trimap.bg


# ---------------------------------------------------------------------------
# colour mixtures

@dataclass
class Gmm:
    weights: np.ndarray  # (K,)
    means: np.ndarray    # (K, 3)
    covs: np.ndarray     # (K, 3, 3)

    @property
    def n_components(self) -> int:
        return len(self.weights)

    def component_log_pdf(self, z) -> np.ndarray:
        """``(n, K)`` of ``log(pi_k N(z; mu_k, Sigma_k))``; ``-inf`` for empty components."""
        z = np.atleast_2d(np.asarray(z, np.float64))
        out = np.full((len(z), self.n_components), -np.inf)
        for k in range(self.n_components):
            if self.weights[k] <= 0:
                continue
            chol = np.linalg.cholesky(self.covs[k])
            sol = solve_triangular(chol, (z - self.means[k]).T, lower=True)
            maha = np.einsum("ij,ij->j", sol, sol)
            logdet = 2.0 * np.log(np.diag(chol)).sum()
            out[:, k] = math.log(self.weights[k]) - 0.5 * (maha + logdet + 3 * _LOG_2PI)
        return out

    def log_density(self, z) -> np.ndarray:
        """Mixture log-density floored at ``log(1e-30)``."""
        return np.maximum(logsumexp(self.component_log_pdf(z), axis=1), _LOG_FLOOR)

    def to_json(self) -> dict:
        return {"weights": self.weights.tolist(), "means": self.means.tolist(),
                "covs": self.covs.tolist()}


@dataclass
class GmmPair:
    fg: Gmm
    bg: Gmm


def _unit_weights(g: UnitGraph, area_weighting: bool) -> np.ndarray:
    return g.area if area_weighting else np.ones(g.n_units)


def _gmm_from_assignment(z, w, comp, k, floor, scatter=None) -> Gmm:
    weights = np.zeros(k)
    means = np.zeros((k, 3))
    covs = np.repeat(np.eye(3)[None] * floor, k, axis=0)
    total = w.sum()
    for c in range(k):
        sel = comp == c
        wc = w[sel]
        mass = wc.sum()
        if mass <= 0:
            continue
        zc = z[sel]
        mu = wc @ zc / mass
        d = zc - mu
        weights[c] = mass / total
        means[c] = mu
        covs[c] += (d * wc[:, None]).T @ d / mass
        if scatter is not None:
            covs[c] += np.einsum("i,ijk->jk", wc, scatter[sel]) / mass
    return Gmm(weights, means, covs)


def _class_data(g, labels, side, area_weighting, unit_scatter, name):
    sel = labels if side else ~labels
    z, w = g.colors[sel], _unit_weights(g, area_weighting)[sel]
    if len(z) == 0:
        raise EmptyClass(f"{name} class has no units")
    if w.sum() <= 0:
        w = np.ones(len(z))
    sc = g.scatter[sel] if unit_scatter and g.scatter is not None else None
    return sel, z, w, sc


def _kmeans_labels(z, w, k, seed) -> np.ndarray:
    """Weighted k-means++ clustering of the distinct colours; zero-weight units join cluster 0."""
    comp = np.zeros(len(z), np.int64)
    keep = w > 0
    uniq, inv = np.unique(z[keep], axis=0, return_inverse=True)
    inv = inv.ravel()
    if len(uniq) <= k:
        comp[keep] = inv
        return comp
    km = KMeans(n_clusters=k, init="k-means++", n_init=1, max_iter=50, random_state=seed)
    comp[keep] = km.fit(uniq, sample_weight=np.bincount(inv, weights=w[keep])).labels_[inv]
    return comp


def fit_gmms(g: UnitGraph, labels, n_components=5, variance_floor=0.01,
             area_weighting=True, random_state=42, unit_scatter=True) -> GmmPair:
    """Initial mixtures from weighted k-means on each class's unit colours."""
    labels = np.asarray(labels, bool)
    out = []
    for side, name in ((True, "foreground"), (False, "background")):
        _, z, w, sc = _class_data(g, labels, side, area_weighting, unit_scatter, name)
        comp = _kmeans_labels(z, w, n_components, random_state)
        out.append(_gmm_from_assignment(z, w, comp, n_components, variance_floor, sc))
    return GmmPair(*out)


def assign_components(g: UnitGraph, labels, gmms: GmmPair) -> np.ndarray:
    """Most likely component of each unit's own class; ties go to the lowest index."""
    labels = np.asarray(labels, bool)
    comp = np.empty(g.n_units, np.int64)
    for side, gmm in ((True, gmms.fg), (False, gmms.bg)):
        sel = labels == side
        if sel.any():
            comp[sel] = np.argmax(gmm.component_log_pdf(g.colors[sel]), axis=1)
    return comp


def learn_gmms(g: UnitGraph, labels, comp, n_components=5, variance_floor=0.01,
               area_weighting=True, unit_scatter=True) -> GmmPair:
    """Refit both mixtures from a hard component assignment."""
    labels = np.asarray(labels, bool)
    out = []
    for side, name in ((True, "foreground"), (False, "background")):
        sel, z, w, sc = _class_data(g, labels, side, area_weighting, unit_scatter, name)
        out.append(_gmm_from_assignment(z, w, comp[sel], n_components, variance_floor, sc))
    return GmmPair(*out)


# ---------------------------------------------------------------------------
# links, energy, optimisation

def unary_costs(g: UnitGraph, gmms: GmmPair, area_weighting=True):
    """``(cost_fg, cost_bg)``: ``A(u) * -log p_c(z_u)`` per unit."""
    a = _unit_weights(g, area_weighting)
    return -a * gmms.fg.log_density(g.colors), -a * gmms.bg.log_density(g.colors)


def hard_constraint_cap(g: UnitGraph, nlinks) -> float:
    """One more than the largest sum of N-links incident to a unit."""
    incident = np.bincount(g.edges.ravel(), weights=np.repeat(nlinks, 2), minlength=g.n_units)
    return 1.0 + float(incident.max(initial=0.0))


def t_links(g: UnitGraph, trimap: Trimap, gmms: GmmPair, nlinks, area_weighting=True):
    """Per-unit ``(source_cap, sink_cap)``; seeds get ``(BIG, 0)`` or ``(0, BIG)``.

    Unknown units may carry negative capacities when a mixture density
    exceeds 1; :class:`FlowGraph` shifts them without changing the cut.
    """
    cost_fg, cost_bg = unary_costs(g, gmms, area_weighting)
    big = hard_constraint_cap(g, nlinks)
    src, snk = cost_bg.copy(), cost_fg.copy()
    src[trimap.fg], snk[trimap.fg] = big, 0.0
    src[trimap.bg], snk[trimap.bg] = 0.0, big
    return src, snk


def energy(g: UnitGraph, labels, gmms: GmmPair, nlinks, area_weighting=True) -> float:
    labels = np.asarray(labels, bool)
    cost_fg, cost_bg = unary_costs(g, gmms, area_weighting)
    cut = labels[g.edges[:, 0]] != labels[g.edges[:, 1]]
    return float(np.where(labels, cost_fg, cost_bg).sum() + nlinks[cut].sum())


@dataclass
class SegmentationResult:
    mask: np.ndarray
    iterations: int
    energy_trace: list[float]
    timings: dict[str, float] = field(default_factory=dict)
    unit_count: int = 0
    labels: np.ndarray | None = field(default=None, repr=False)

    def to_json(self, timings: bool = True) -> dict:
        out = {"iterations": self.iterations, "energy": list(self.energy_trace)}
        if timings:
            out["timings_ms"] = dict(self.timings)
        out["unit_count"] = self.unit_count
        return out


def segment(g: UnitGraph, trimap: Trimap, n_components=5, gamma=50.0, max_iter=10, tol=1e-3,
            variance_floor=0.01, area_weighting=True, squared_beta=True,
            random_state=42, unit_scatter=True) -> SegmentationResult:
    """Run GrabCut on a unit graph with a matching trimap.

    A refit mixture pair is kept only if it does not raise the energy of
    the current labelling. Each cut is optimal for its mixtures, so the
    energy trace never increases.
    """
    if trimap.unit_count != g.n_units:
        raise MeshMismatch(f"trimap has {trimap.unit_count} units, graph has {g.n_units}")
    if max_iter < 1 or tol <= 0 or n_components < 1:
        raise ValueError("need max_iter >= 1, tol > 0 and n_components >= 1")
    trimap.validate()
    timings = {"gmm": 0.0, "flow": 0.0}
    t0 = time.perf_counter()
    beta = compute_beta(g, squared_beta) if len(g.edges) else 0.0
    nl = n_links(g, beta, gamma)
    labels = init_segmentation(trimap)
    gmms = fit_gmms(g, labels, n_components, variance_floor, area_weighting, random_state,
                    unit_scatter)
    timings["gmm"] += (time.perf_counter() - t0) * 1e3
    trace: list[float] = []
    it = 0
    for it in range(1, max_iter + 1):
        t0 = time.perf_counter()
        comp = assign_components(g, labels, gmms)
        cand = learn_gmms(g, labels, comp, n_components, variance_floor, area_weighting,
                          unit_scatter)
        if energy(g, labels, cand, nl, area_weighting) <= energy(g, labels, gmms, nl, area_weighting):
            gmms = cand
        src, snk = t_links(g, trimap, gmms, nl, area_weighting)
        t1 = time.perf_counter()
        timings["gmm"] += (t1 - t0) * 1e3
        new, _ = FlowGraph(src, snk, g.edges, nl).solve()
        timings["flow"] += (time.perf_counter() - t1) * 1e3
        e = energy(g, new, gmms, nl, area_weighting)
        same = np.array_equal(new, labels)
        labels = new
        trace.append(e)
        if same:
            break
        if len(trace) > 1 and abs(trace[-2] - e) <= tol * abs(trace[-2]):
            break
    return SegmentationResult(g.paint(labels), it, trace, timings, g.n_units, labels)


class GrabCut(BaseEstimator):
    """GrabCut segmenter over pixels (``engine="pixel"``) or trixels (``"tritom"``).

    Parameters
    ----------
    engine : {"pixel", "tritom"}
        Unit type of the graph.
    n_components : int
        Gaussian components per colour mixture.
    gamma : float
        Neighbour-link scale.
    max_iter : int
        Upper bound on outer iterations.
    tol : float
        Relative energy change that stops the loop.
    variance_floor : float
        Added to every covariance diagonal.
    area_weighting : bool
        Weight trixel data terms and mixture statistics by pixel count.
    squared_beta : bool
        Average squared colour differences when computing beta; ``False``
        averages plain distances.
    dmum_params : DmumParams or None
        Mesh parameters for the ``"tritom"`` engine.
    random_state : int
        Seed for k-means initialisation.
    unit_scatter : bool
        Add each trixel's within-unit colour scatter to the mixture
        covariances (no effect for pixels).

    Attributes
    ----------
    result_ : SegmentationResult
    mesh_ : TrixelMesh or None
    graph_ : UnitGraph
    """

    def __init__(self, engine="pixel", n_components=5, gamma=50.0, max_iter=10, tol=1e-3,
                 variance_floor=0.01, area_weighting=True, squared_beta=True,
                 dmum_params=None, random_state=42, unit_scatter=True):
        self.engine = engine
        self.n_components = n_components
        self.gamma = gamma
        self.max_iter = max_iter
        self.tol = tol
        self.variance_floor = variance_floor
        self.area_weighting = area_weighting
        self.squared_beta = squared_beta
        self.dmum_params = dmum_params
        self.random_state = random_state
        self.unit_scatter = unit_scatter

    def fit(self, X, trimap, mesh: TrixelMesh | None = None):
        """Segment image ``X``.

        ``trimap`` is a ``(h, w)`` label image (0/128/255) or a
        :class:`Trimap` already expressed over this engine's units.
        """
        img = check_image(X)
        t0 = time.perf_counter()
        if self.engine == "tritom":
            self.mesh_ = mesh if mesh is not None else build_mesh(img, self.dmum_params or DmumParams())
            self.graph_ = build_unit_graph(img, TRIXEL, self.mesh_)
        elif self.engine == "pixel":
            self.mesh_ = None
            self.graph_ = build_unit_graph(img, PIXEL)
        else:
            raise ValueError(f"unknown engine {self.engine!r}")
        mesh_ms = (time.perf_counter() - t0) * 1e3
        if not isinstance(trimap, Trimap):
            trimap = units_from_pixels(np.asarray(trimap, np.uint8), self.mesh_)
        self.result_ = segment(self.graph_, trimap, self.n_components, self.gamma, self.max_iter,
                               self.tol, self.variance_floor, self.area_weighting,
                               self.squared_beta, self.random_state, self.unit_scatter)
        self.result_.timings = {"mesh": mesh_ms, **self.result_.timings}
        return self

    def fit_predict(self, X, trimap, mesh: TrixelMesh | None = None) -> np.ndarray:
        return self.fit(X, trimap, mesh).result_.mask
