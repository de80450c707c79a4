"""LBP and HOG descriptors over cropped, masked, cell-divided patterns.

Patterns are grayscale crops resampled to a fixed size per cue: face
59x65, head-and-shoulders 64x64, clothes 64x64 (width x height). Pixels
outside the mask are set to mid-gray before resampling.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
from scipy import ndimage
from skimage.transform import resize
from sklearn.base import BaseEstimator, TransformerMixin

from .exceptions import BboxOutOfRange, EmptyMask, ImageTooSmall
from .imaging import check_image, check_mask, to_grayscale

FILL_VALUE = 128.0


class PatternKind(str, Enum):
    FACE = "face"
    HEAD_SHOULDERS = "hs"
    CLOTHES = "clothes"


CANONICAL_SIZE = {PatternKind.FACE: (59, 65), PatternKind.HEAD_SHOULDERS: (64, 64),
                  PatternKind.CLOTHES: (64, 64)}


@dataclass
class Pattern:
    image: np.ndarray  # (h, w) grayscale at canonical size
    kind: PatternKind
    mask: np.ndarray | None = None


@dataclass
class Descriptor:
    values: np.ndarray
    layout: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.values)


def _bbox_of(mask):
    ys, xs = np.nonzero(mask)
    return int(xs.min()), int(ys.min()), int(xs.max()) + 1, int(ys.max()) + 1


def prepare_pattern(img, kind=PatternKind.HEAD_SHOULDERS, mask=None, bbox=None) -> Pattern:
    """Crop, gray, fill masked-out pixels with 128 and resize bilinearly.

    ``bbox`` is ``(x0, y0, x1, y1)`` with exclusive upper bounds. It defaults
    to the mask bounding box for clothes and to the full frame otherwise.
    """
    kind = PatternKind(kind)
    gray = to_grayscale(img) if np.ndim(img) == 3 else check_image(img)[..., 0]
    h, w = gray.shape
    if mask is not None:
        mask = check_mask(mask, gray.shape)
        if not mask.any():
            raise EmptyMask("mask selects no pixels")
    elif kind is PatternKind.CLOTHES:
        raise ValueError("clothes patterns need a mask")
    if bbox is None:
        bbox = _bbox_of(mask) if kind is PatternKind.CLOTHES else (0, 0, w, h)
    x0, y0, x1, y1 = (int(v) for v in bbox)
    if not (0 <= x0 < x1 <= w and 0 <= y0 < y1 <= h):
        raise BboxOutOfRange(f"bbox {bbox} outside {w}x{h} image")
    crop = gray[y0:y1, x0:x1].copy()
    cmask = None
    if mask is not None:
        cmask = mask[y0:y1, x0:x1]
        crop[~cmask] = FILL_VALUE
    cw, ch = CANONICAL_SIZE[kind]
    out = resize(crop, (ch, cw), order=1, mode="edge", anti_aliasing=False, preserve_range=True)
    if cmask is not None:
        cmask = resize(cmask.astype(float), (ch, cw), order=0, mode="edge",
                       anti_aliasing=False) > 0.5
    return Pattern(out, kind, cmask)


def _as_gray(p) -> np.ndarray:
    a = p.image if isinstance(p, Pattern) else np.asarray(p, np.float64)
    if a.ndim != 2:
        raise ValueError(f"patterns must be 2-D, got shape {a.shape}")
    return np.asarray(a, np.float64)


def cell_edges(n: int, cells: int) -> np.ndarray:
    """Equal cells of ``n // cells`` pixels; the last absorbs the remainder."""
    step = n // cells
    return np.append(np.arange(cells) * step, n)


# ---------------------------------------------------------------------------
# LBP

# clockwise from top-left as (dy, dx); bit 0 is the most significant
_RING = [(-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1)]


def lbp_codes(gray, sampling: str = "square") -> np.ndarray:
    """``(h-2, w-2)`` codes for the interior pixels.

    ``sampling="square"`` reads the raw 3x3 ring; ``"circle"`` samples the
    diagonals on the radius-1 circle with bilinear interpolation.
    """
    g = _as_gray(gray)
    h, w = g.shape
    if h < 3 or w < 3:
        raise ImageTooSmall(f"LBP needs at least 3x3 pixels, got {w}x{h}")
    c = g[1:-1, 1:-1]
    code = np.zeros(c.shape, np.int64)
    ys, xs = np.mgrid[1:h - 1, 1:w - 1].astype(np.float64)
    for n, (dy, dx) in enumerate(_RING):
        if sampling == "circle" and dy and dx:
            r = 1 / np.sqrt(2)
            nb = ndimage.map_coordinates(g, [ys + dy * r, xs + dx * r], order=1)
        elif sampling in ("square", "circle"):
            nb = g[1 + dy:h - 1 + dy, 1 + dx:w - 1 + dx]
        else:
            raise ValueError(f"unknown sampling {sampling!r}")
        code |= (nb >= c).astype(np.int64) << (7 - n)
    return code


def lbp_descriptor(pattern, grid: int = 5, sampling: str = "square") -> Descriptor:
    """Concatenated 256-bin code histograms of ``grid x grid`` cells, row-major."""
    g = _as_gray(pattern)
    codes = lbp_codes(g, sampling)
    h, w = g.shape
    if grid < 1 or grid > min(h, w):
        raise ValueError(f"grid must be in [1, {min(h, w)}]")
    full = np.full((h, w), -1, np.int64)
    full[1:-1, 1:-1] = codes
    ye, xe = cell_edges(h, grid), cell_edges(w, grid)
    hists = []
    for i in range(grid):
        for j in range(grid):
            cell = full[ye[i]:ye[i + 1], xe[j]:xe[j + 1]]
            hists.append(np.bincount(cell[cell >= 0], minlength=256))
    layout = {"kind": "lbp", "grid": grid, "bins": 256, "sampling": sampling,
              "threshold": "neighbor >= center", "order": "top-left clockwise, bit 0 = MSB",
              "length": grid * grid * 256}
    return Descriptor(np.concatenate(hists).astype(np.float64), layout)


# ---------------------------------------------------------------------------
# HOG

def hog_descriptor(pattern, cell: int = 8, bins: int = 9, eps: float = 1e-6,
                   clip: float = 0.2) -> Descriptor:
    """Unsigned-orientation HOG with 2x2-cell blocks at a one-cell stride.

    Bin ``b`` is centred at ``b * 180 / bins`` degrees, so a purely
    horizontal gradient (vertical edge) votes into bin 0.
    """
    g = _as_gray(pattern)
    h, w = g.shape
    if h < 2 * cell or w < 2 * cell:
        raise ImageTooSmall(f"HOG needs at least {2 * cell}x{2 * cell} pixels, got {w}x{h}")
    gx = np.zeros_like(g)
    gy = np.zeros_like(g)
    gx[:, 1:-1] = g[:, 2:] - g[:, :-2]
    gy[1:-1, :] = g[2:, :] - g[:-2, :]
    mag = np.hypot(gx, gy)
    ang = np.degrees(np.arctan2(gy, gx)) % 180.0
    width = 180.0 / bins
    pos = ang / width
    lo = np.floor(pos).astype(np.int64) % bins
    frac = pos - np.floor(pos)
    hi = (lo + 1) % bins

    ye, xe = cell_edges(h, h // cell), cell_edges(w, w // cell)
    ncy, ncx = len(ye) - 1, len(xe) - 1
    row_cell = np.repeat(np.arange(ncy), np.diff(ye))
    col_cell = np.repeat(np.arange(ncx), np.diff(xe))
    cid = (row_cell[:, None] * ncx + col_cell[None, :]).ravel()
    hist = np.zeros(ncy * ncx * bins)
    np.add.at(hist, cid * bins + lo.ravel(), (mag * (1 - frac)).ravel())
    np.add.at(hist, cid * bins + hi.ravel(), (mag * frac).ravel())
    hist = hist.reshape(ncy, ncx, bins)

    blocks = []
    for i in range(ncy - 1):
        for j in range(ncx - 1):
            v = hist[i:i + 2, j:j + 2].ravel()
            v = v / np.sqrt(v @ v + eps * eps)
            v = np.minimum(v, clip)
            blocks.append(v / np.sqrt(v @ v + eps * eps))
    layout = {"kind": "hog", "cell": cell, "bins": bins, "block": 2, "stride": 1,
              "cells": [ncx, ncy], "orientation": "unsigned, bin 0 centred at 0 deg",
              "norm": "L2-Hys", "length": (ncy - 1) * (ncx - 1) * 4 * bins}
    return Descriptor(np.concatenate(blocks), layout)


def concat(descriptors) -> Descriptor:
    descriptors = list(descriptors)
    if not descriptors:
        raise ValueError("nothing to concatenate")
    if len(descriptors) == 1:
        return descriptors[0]
    values = np.concatenate([d.values for d in descriptors])
    return Descriptor(values, {"kind": "concat", "parts": [d.layout for d in descriptors],
                               "length": len(values)})


class LBPDescriptor(TransformerMixin, BaseEstimator):
    """Transform a stack of 2-D patterns into LBP cell histograms."""

    def __init__(self, grid=5, sampling="square"):
        self.grid = grid
        self.sampling = sampling

    def fit(self, X, y=None):
        first = _as_gray(X[0])
        self.layout_ = lbp_descriptor(first, self.grid, self.sampling).layout
        self.n_features_out_ = self.layout_["length"]
        return self

    def transform(self, X):
        return np.stack([lbp_descriptor(x, self.grid, self.sampling).values for x in X])


class HOGDescriptor(TransformerMixin, BaseEstimator):
    """Transform a stack of 2-D patterns into HOG block vectors."""

    def __init__(self, cell=8, bins=9):
        self.cell = cell
        self.bins = bins

    def fit(self, X, y=None):
        self.layout_ = hog_descriptor(_as_gray(X[0]), self.cell, self.bins).layout
        self.n_features_out_ = self.layout_["length"]
        return self

    def transform(self, X):
        return np.stack([hog_descriptor(x, self.cell, self.bins).values for x in X])


# ---------------------------------------------------------------------------
# CSV dump

def layout_path(csv_path) -> Path:
    return Path(csv_path).with_suffix(".layout.json")


def write_descriptors(path, ids, descriptors) -> None:
    """One row per pattern: id then values; the layout goes to a JSON header file."""
    descriptors = list(descriptors)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        for pid, d in zip(ids, descriptors):
            wr.writerow([pid] + [repr(float(v)) for v in d.values])
    layout_path(path).write_text(json.dumps(descriptors[0].layout if descriptors else {},
                                            sort_keys=True) + "\n")


def read_descriptors(path):
    """Return ``(ids, values (n, d), layout)``."""
    ids, rows = [], []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if row:
                ids.append(row[0])
                rows.append([float(v) for v in row[1:]])
    lp = layout_path(path)
    layout = json.loads(lp.read_text()) if lp.exists() else {}
    return ids, np.array(rows, np.float64), layout
