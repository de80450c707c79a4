"""Image containers, file I/O and geometric normalisation.

Conventions used throughout the package:

* colour images are ``float64`` arrays of shape ``(height, width, 3)`` with
  channels in ``[0, 255]``;
* scalar fields (grayscale, gradient magnitude, DMUM) are ``(height, width)``
  ``float64`` arrays;
* masks are ``bool`` arrays of shape ``(height, width)``;
* points are ``(x, y)`` with pixel ``(col, row)`` centred at ``(col, row)``.
  The mesh module uses pixel-corner coordinates instead; see
  :mod:`trixelseg.tritom`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .exceptions import DegenerateEyes, ImageTooSmall, InvalidMask

GRAY_WEIGHTS = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class EyePair:
    left: tuple[float, float]
    right: tuple[float, float]

    @property
    def midpoint(self) -> np.ndarray:
        return (np.asarray(self.left, float) + np.asarray(self.right, float)) / 2.0

    @property
    def vector(self) -> np.ndarray:
        """Left-to-right eye vector."""
        return np.asarray(self.right, float) - np.asarray(self.left, float)

    @property
    def distance(self) -> float:
        return float(np.hypot(*self.vector))

    def validate(self, shape=None) -> "EyePair":
        if self.distance < 1.0:
            raise DegenerateEyes(f"inter-eye distance {self.distance:.3f} < 1 px")
        if shape is not None:
            h, w = shape[:2]
            for x, y in (self.left, self.right):
                if not (0 <= x <= w - 1 and 0 <= y <= h - 1):
                    raise DegenerateEyes(f"eye ({x}, {y}) outside {w}x{h} image")
        return self

    def transformed(self, matrix: np.ndarray) -> "EyePair":
        """Apply a 2x3 affine matrix acting on ``(x, y, 1)``."""
        pts = np.array([self.left, self.right], float)
        out = pts @ matrix[:, :2].T + matrix[:, 2]
        return EyePair(tuple(out[0]), tuple(out[1]))


@dataclass(frozen=True)
class CanonicalFrame:
    canvas: tuple[int, int] = (256, 256)
    eye_midpoint: tuple[float, float] = (128.0, 80.0)
    d0: float = 40.0

    def __post_init__(self):
        w, h = self.canvas
        x0, y0 = self.eye_midpoint
        if self.d0 <= 0:
            raise ValueError("d0 must be positive")
        if not (0 <= x0 < w and 0 <= y0 < h):
            raise ValueError("eye midpoint must lie inside the canvas")

    def to_json(self) -> dict:
        return {"canvas": list(self.canvas), "eye_midpoint": list(self.eye_midpoint),
                "d0": self.d0}

    @classmethod
    def from_json(cls, obj: dict) -> "CanonicalFrame":
        return cls(tuple(int(v) for v in obj["canvas"]),
                   tuple(float(v) for v in obj["eye_midpoint"]), float(obj["d0"]))


# ---------------------------------------------------------------------------
# validation helpers

def check_image(img, name="image") -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        img = np.repeat(img[:, :, None], 3, axis=2)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"{name} must have shape (h, w, 3), got {img.shape}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError(f"{name} is empty")
    if not np.all(np.isfinite(img)) or img.min() < 0 or img.max() > 255:
        raise ValueError(f"{name} channels must be finite and in [0, 255]")
    return img


def check_mask(mask, shape=None, name="mask") -> np.ndarray:
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {mask.shape}")
    if shape is not None and mask.shape != tuple(shape[:2]):
        raise ValueError(f"{name} shape {mask.shape} does not match {tuple(shape[:2])}")
    return mask.astype(bool)


# ---------------------------------------------------------------------------
# pixel operations

def to_grayscale(img) -> np.ndarray:
    img = check_image(img)
    return img @ GRAY_WEIGHTS


def gradient_magnitude(gray) -> np.ndarray:
    """Sobel magnitude rescaled so the maximum is 1 (constant input stays 0)."""
    gray = np.asarray(gray, dtype=np.float64)
    if gray.ndim != 2 or min(gray.shape) < 3:
        raise ImageTooSmall(f"need at least 3x3 pixels, got {gray.shape[::-1]}")
    gx = ndimage.sobel(gray, axis=1, mode="nearest")
    gy = ndimage.sobel(gray, axis=0, mode="nearest")
    mag = np.hypot(gx, gy)
    peak = mag.max()
    if peak > 0:
        mag /= peak
    return mag


# ---------------------------------------------------------------------------
# face-aligned similarity transforms

def frame_transform(eyes: EyePair, frame: CanonicalFrame) -> np.ndarray:
    """2x3 matrix mapping image ``(x, y)`` to canonical-frame coordinates."""
    eyes.validate()
    vx, vy = eyes.vector
    scale = frame.d0 / eyes.distance
    theta = math.atan2(vy, vx)
    c, s = math.cos(-theta) * scale, math.sin(-theta) * scale
    rot = np.array([[c, -s], [s, c]])
    shift = np.asarray(frame.eye_midpoint, float) - rot @ eyes.midpoint
    return np.hstack([rot, shift[:, None]])


def invert_affine(matrix: np.ndarray) -> np.ndarray:
    lin = np.linalg.inv(matrix[:, :2])
    return np.hstack([lin, (-lin @ matrix[:, 2])[:, None]])


def _warp(src: np.ndarray, inverse: np.ndarray, out_shape, order: int) -> np.ndarray:
    """Sample ``src`` at ``inverse @ (x, y, 1)`` for every output pixel."""
    h, w = out_shape
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    sx = inverse[0, 0] * xs + inverse[0, 1] * ys + inverse[0, 2]
    sy = inverse[1, 0] * xs + inverse[1, 1] * ys + inverse[1, 2]
    coords = np.array([sy, sx])
    if src.ndim == 2:
        return ndimage.map_coordinates(src, coords, order=order, mode="constant", cval=0.0)
    return np.stack([ndimage.map_coordinates(src[..., c], coords, order=order,
                                             mode="constant", cval=0.0)
                     for c in range(src.shape[2])], axis=-1)


def align_to_frame(img_or_mask, eyes: EyePair, frame: CanonicalFrame | None = None):
    """Rotate, scale and translate so the eyes land on the canonical frame.

    Colour images and float fields are sampled bilinearly; boolean masks use
    nearest-neighbour sampling. Samples falling outside the source are 0.
    """
    frame = frame or CanonicalFrame()
    src = np.asarray(img_or_mask)
    fwd = frame_transform(eyes, frame)
    out_shape = (frame.canvas[1], frame.canvas[0])
    if src.dtype == bool:
        out = _warp(src.astype(np.float64), invert_affine(fwd), out_shape, order=0)
        return out > 0.5
    out = _warp(src.astype(np.float64), invert_affine(fwd), out_shape, order=1)
    return np.clip(out, 0.0, 255.0) if out.ndim == 3 else out


def warp_from_frame(canon, eyes: EyePair, frame: CanonicalFrame, image_shape, order=1):
    """Inverse of :func:`align_to_frame`: resample a canvas into image space."""
    fwd = frame_transform(eyes, frame)
    return _warp(np.asarray(canon, np.float64), fwd, image_shape[:2], order=order)


# ---------------------------------------------------------------------------
# file I/O

def read_image(path) -> np.ndarray:
    with Image.open(path) as im:
        if im.mode not in ("RGB", "L"):
            im = im.convert("RGB")
        arr = np.asarray(im, dtype=np.float64)
    return check_image(arr)


def write_image(path, img) -> None:
    arr = np.clip(np.rint(np.asarray(img, float)), 0, 255).astype(np.uint8)
    Image.fromarray(arr).save(path)


def read_mask(path) -> np.ndarray:
    with Image.open(path) as im:
        if im.mode != "L":
            raise InvalidMask(f"{path}: masks must be 8-bit gray, got mode {im.mode}")
        arr = np.asarray(im)
    bad = (arr != 0) & (arr != 255)
    if bad.any():
        raise InvalidMask(f"{path}: mask values must be 0 or 255")
    return arr == 255


def write_mask(path, mask) -> None:
    Image.fromarray(np.where(np.asarray(mask, bool), 255, 0).astype(np.uint8)).save(path)


def eyes_path_for(image_path) -> Path:
    return Path(image_path).with_suffix(".eyes.json")


def read_eyes(path) -> EyePair:
    with open(path) as fh:
        obj = json.load(fh)
    return EyePair(tuple(map(float, obj["left"])), tuple(map(float, obj["right"])))


def write_eyes(path, eyes: EyePair) -> None:
    with open(path, "w") as fh:
        json.dump({"left": list(eyes.left), "right": list(eyes.right)}, fh)
