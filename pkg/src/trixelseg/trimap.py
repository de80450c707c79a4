"""Automatic trimaps from eye positions.

Two generators share one output type:

* a geometric template (face ellipse, torso rectangle, background margin)
  laid out in inter-eye units around the eye midpoint;
* a probability map learnt in a face-aligned canonical frame, warped back
  into the image and thresholded.

People are segmented in two stages. The skin stage seeds the face as
foreground. The clothes stage seeds the torso and forces the previous skin
mask to background.

Labels use the trimap file encoding: 0 background, 128 unknown, 255
foreground.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
from PIL import Image
from skimage.draw import polygon2mask

from .exceptions import EmptyBackground, EmptyForeground, NoMasks
from .imaging import CanonicalFrame, EyePair, align_to_frame, check_mask, warp_from_frame
from .tritom import TrixelMesh

BACKGROUND, UNKNOWN, FOREGROUND = 0, 128, 255


class Stage(str, Enum):
    SKIN = "skin"
    CLOTHES = "clothes"


@dataclass
class Trimap:
    """Per-unit labels in {BACKGROUND, UNKNOWN, FOREGROUND}.

    ``shape`` is the ``(h, w)`` of the image the units tile.
    """

    labels: np.ndarray
    shape: tuple[int, int]

    def __post_init__(self):
        self.labels = np.asarray(self.labels, np.uint8).ravel()
        bad = ~np.isin(self.labels, (BACKGROUND, UNKNOWN, FOREGROUND))
        if bad.any():
            raise ValueError("trimap labels must be 0, 128 or 255")
        self.shape = (int(self.shape[0]), int(self.shape[1]))

    @property
    def unit_count(self) -> int:
        return self.labels.size

    @property
    def fg(self) -> np.ndarray:
        return self.labels == FOREGROUND

    @property
    def bg(self) -> np.ndarray:
        return self.labels == BACKGROUND

    @property
    def unknown(self) -> np.ndarray:
        return self.labels == UNKNOWN

    def validate(self) -> "Trimap":
        if not self.fg.any():
            raise EmptyForeground("trimap has no foreground seeds")
        if not self.bg.any():
            raise EmptyBackground("trimap has no background seeds")
        return self

    def to_pixels(self, mesh: TrixelMesh | None = None) -> np.ndarray:
        """``(h, w)`` uint8 label image."""
        if mesh is None:
            return self.labels.reshape(self.shape)
        return self.labels[mesh.unit_map]


def units_from_pixels(pixel_labels: np.ndarray, mesh: TrixelMesh | None = None) -> Trimap:
    """Pixel trimap, or per-trixel plurality vote with ties going to UNKNOWN."""
    pixel_labels = np.asarray(pixel_labels, np.uint8)
    if mesh is None:
        return Trimap(pixel_labels.ravel(), pixel_labels.shape)
    if mesh.unit_map is None or mesh.unit_map.shape != pixel_labels.shape:
        raise ValueError("mesh does not tile this image")
    u = mesh.unit_map.ravel()
    flat = pixel_labels.ravel()
    counts = np.stack([np.bincount(u, weights=flat == v, minlength=mesh.n_trixels)
                       for v in (BACKGROUND, UNKNOWN, FOREGROUND)], axis=1)
    top = counts.max(axis=1, keepdims=True)
    winner = np.array([BACKGROUND, UNKNOWN, FOREGROUND], np.uint8)[counts.argmax(axis=1)]
    tied = (counts == top).sum(axis=1) > 1
    winner[tied] = UNKNOWN
    return Trimap(winner, pixel_labels.shape)


def _finish(pixel_labels, stage, prior_skin_mask, mesh):
    if Stage(stage) is Stage.CLOTHES:
        if prior_skin_mask is None:
            raise ValueError("the clothes stage needs the skin mask")
        skin = check_mask(prior_skin_mask, pixel_labels.shape, "prior_skin_mask")
        pixel_labels[skin] = BACKGROUND
    return units_from_pixels(pixel_labels, mesh).validate()


# ---------------------------------------------------------------------------
# geometric template

@dataclass(frozen=True)
class GeometricTemplate:
    """Trimap regions in inter-eye units.

    Offsets are ``(w, w_n)`` pairs: ``w`` along the eye-to-eye vector ``v``,
    ``w_n`` along its rotation ``p_e = (-v_y, v_x)``, which points down the
    face for upright heads. A boundary point is ``m + w * v + w_n * p_e``
    with ``m`` the eye midpoint.
    """

    face_center: tuple[float, float] = (0.0, 0.4)
    face_axes: tuple[float, float] = (0.75, 1.0)
    torso_x: tuple[float, float] = (-1.5, 1.5)
    torso_y: tuple[float, float] = (2.2, 4.5)
    bg_side: float = 3.5
    bg_below: float = 6.0
    bg_above: float = 1.5
    n_points: int = 64
    skin_torso_bg: bool = True  # seed the torso as background in the skin stage

    def __post_init__(self):
        if min(self.face_axes) <= 0 or self.bg_side <= 0 or self.bg_below <= 0 or self.bg_above <= 0:
            raise ValueError("template extents must be positive")
        if self.torso_x[0] >= self.torso_x[1] or self.torso_y[0] >= self.torso_y[1]:
            raise ValueError("torso rectangle is empty")
        face_bottom = self.face_center[1] + self.face_axes[1]
        if face_bottom >= self.torso_y[0]:
            raise ValueError("face ellipse and torso rectangle overlap")
        if self.n_points < 8:
            raise ValueError("n_points must be >= 8")

    def weights(self) -> dict[str, np.ndarray]:
        """``(k, 2)`` arrays of ``(w, w_n)`` for each region outline."""
        t = 2 * np.pi * np.arange(self.n_points) / self.n_points
        cx, cy = self.face_center
        ax, ay = self.face_axes
        face = np.stack([cx + ax * np.cos(t), cy + ay * np.sin(t)], axis=1)
        (x0, x1), (y0, y1) = self.torso_x, self.torso_y
        torso = np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
        s = self.bg_side
        box = np.array([[-s, -self.bg_above], [s, -self.bg_above],
                        [s, self.bg_below], [-s, self.bg_below]])
        return {"face": face, "torso": torso, "box": box}

    def outlines(self, eyes: EyePair) -> dict[str, np.ndarray]:
        """Region polygons in image ``(x, y)`` coordinates."""
        m = eyes.midpoint
        v = eyes.vector
        p_e = np.array([-v[1], v[0]])
        return {k: m + w[:, :1] * v + w[:, 1:] * p_e for k, w in self.weights().items()}


def _region(outline, shape):
    return polygon2mask(shape, outline[:, ::-1])


def geometric_pixel_labels(eyes: EyePair, shape, stage=Stage.SKIN,
                           template: GeometricTemplate = GeometricTemplate()) -> np.ndarray:
    """``(h, w)`` template labels before the skin override and unit vote."""
    shape = tuple(shape[:2])
    eyes.validate(shape)
    out = template.outlines(eyes)
    labels = np.full(shape, UNKNOWN, np.uint8)
    labels[~_region(out["box"], shape)] = BACKGROUND
    torso = _region(out["torso"], shape)
    if Stage(stage) is Stage.SKIN:
        if template.skin_torso_bg:
            labels[torso] = BACKGROUND
        labels[_region(out["face"], shape)] = FOREGROUND
    else:
        labels[torso] = FOREGROUND
    return labels


def geometric_trimap(eyes: EyePair, shape, stage=Stage.SKIN, prior_skin_mask=None,
                     mesh: TrixelMesh | None = None,
                     template: GeometricTemplate = GeometricTemplate()) -> Trimap:
    """Template trimap over pixels (``mesh=None``) or trixels."""
    labels = geometric_pixel_labels(eyes, shape, stage, template)
    return _finish(labels, stage, prior_skin_mask, mesh)


# ---------------------------------------------------------------------------
# probability maps

@dataclass
class ProbabilityMap:
    values: np.ndarray
    frame: CanonicalFrame = field(default_factory=CanonicalFrame)
    target: Stage = Stage.SKIN

    def __post_init__(self):
        self.values = np.asarray(self.values, np.float64)
        self.target = Stage(self.target)
        w, h = self.frame.canvas
        if self.values.shape != (h, w):
            raise ValueError(f"map shape {self.values.shape} does not match canvas {w}x{h}")
        if not np.isfinite(self.values).all() or self.values.min() < 0 or self.values.max() > 1:
            raise ValueError("probabilities must lie in [0, 1]")

    def save(self, png_path) -> Path:
        """Write a 16-bit PNG and a ``.json`` sidecar; returns the sidecar path."""
        png_path = Path(png_path)
        q = np.rint(self.values * 65535).astype(np.uint16)
        Image.fromarray(q).save(png_path)
        side = png_path.with_suffix(".json")
        side.write_text(json.dumps({"frame": self.frame.to_json(), "target": self.target.value}))
        return side

    @classmethod
    def load(cls, png_path) -> "ProbabilityMap":
        png_path = Path(png_path)
        meta = json.loads(png_path.with_suffix(".json").read_text())
        with Image.open(png_path) as im:
            arr = np.asarray(im, dtype=np.float64)
        return cls(arr / 65535.0, CanonicalFrame.from_json(meta["frame"]), meta["target"])


def build_probability_map(masks, frame: CanonicalFrame = CanonicalFrame(),
                          target=Stage.SKIN) -> ProbabilityMap:
    """Fraction of face-aligned masks covering each canvas pixel.

    ``masks`` is a sequence of ``(mask, EyePair)``; every image counts once.
    """
    masks = list(masks)
    if not masks:
        raise NoMasks("no masks to build a probability map from")
    w, h = frame.canvas
    total = np.zeros((h, w))
    for mask, eyes in masks:
        mask = check_mask(mask)
        eyes.validate(mask.shape)
        total += align_to_frame(mask, eyes, frame)
    return ProbabilityMap(total / len(masks), frame, target)


@dataclass(frozen=True)
class ProbTrimapParams:
    eps_fg: float = 0.7
    eps_bg: float = 0.1

    def __post_init__(self):
        if not 0 < self.eps_bg < self.eps_fg < 1:
            raise ValueError("need 0 < eps_bg < eps_fg < 1")


def probabilistic_pixel_labels(eyes: EyePair, pmap: ProbabilityMap, shape,
                               params: ProbTrimapParams = ProbTrimapParams()) -> np.ndarray:
    shape = tuple(shape[:2])
    eyes.validate(shape)
    p = warp_from_frame(pmap.values, eyes, pmap.frame, shape, order=1)
    labels = np.full(shape, UNKNOWN, np.uint8)
    labels[p >= params.eps_fg] = FOREGROUND
    labels[p < params.eps_bg] = BACKGROUND
    return labels


def probabilistic_trimap(eyes: EyePair, pmap: ProbabilityMap, shape, stage=None,
                         prior_skin_mask=None, mesh: TrixelMesh | None = None,
                         params: ProbTrimapParams = ProbTrimapParams()) -> Trimap:
    """Thresholded warped map over pixels (``mesh=None``) or trixels.

    ``stage`` defaults to the map's target.
    """
    stage = pmap.target if stage is None else Stage(stage)
    labels = probabilistic_pixel_labels(eyes, pmap, shape, params)
    return _finish(labels, stage, prior_skin_mask, mesh)


def write_trimap(path, trimap: Trimap, mesh: TrixelMesh | None = None) -> None:
    Image.fromarray(trimap.to_pixels(mesh)).save(path)


def read_trimap(path) -> Trimap:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"), np.uint8)
    return Trimap(arr.ravel(), arr.shape)
