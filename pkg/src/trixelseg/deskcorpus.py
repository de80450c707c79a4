"""Synthetic head-and-torso images for desk-scale benchmarking.

Each sample is a frontal person on a cluttered background with known eye
positions and exact skin and clothes masks. Evaluation images and the images
used to learn probability maps come from disjoint seeds. The bundled corpus
under ``data/desk`` was produced by :func:`write_corpus` with the defaults
below; ``scripts/make_desk_corpus.py`` regenerates it.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage
from skimage.draw import polygon2mask

from .imaging import CanonicalFrame, EyePair, read_eyes, read_image, read_mask, write_eyes, \
    write_image, write_mask
from .trimap import Stage, build_probability_map

DATA_DIR = Path(__file__).parent / "data" / "desk"
IMAGE_SIZE = (176, 160)  # (w, h)
# tall enough to hold the torso down to the image bottom
MAP_FRAME = CanonicalFrame(canvas=(256, 320), eye_midpoint=(128.0, 80.0), d0=40.0)
EVAL_SEED = 2024
MAP_SEED = 7


@dataclass
class Person:
    image: np.ndarray
    eyes: EyePair
    skin: np.ndarray
    clothes: np.ndarray

    @property
    def people(self) -> np.ndarray:
        return self.skin | self.clothes


def _face_frame(eyes: EyePair):
    v = eyes.vector
    return eyes.midpoint, v, np.array([-v[1], v[0]])


def _poly(pts, m, v, pe, shape):
    pts = np.asarray(pts, float)
    xy = m + pts[:, :1] * v + pts[:, 1:] * pe
    return polygon2mask(shape, xy[:, ::-1])


def _ellipse(center, axes, m, v, pe, shape, n=96):
    t = 2 * np.pi * np.arange(n) / n
    pts = np.stack([center[0] + axes[0] * np.cos(t), center[1] + axes[1] * np.sin(t)], axis=1)
    return _poly(pts, m, v, pe, shape)


def _background(rng, h, w):
    ys, xs = np.mgrid[0:h, 0:w] / max(h, w)
    c0, c1 = rng.uniform(40, 220, 3), rng.uniform(40, 220, 3)
    a = rng.uniform(0, 2 * np.pi)
    t = (np.cos(a) * xs + np.sin(a) * ys)[..., None]
    img = c0 + (c1 - c0) * (t - t.min()) / max(np.ptp(t), 1e-9)
    for _ in range(rng.integers(4, 9)):
        col = rng.uniform(0, 255, 3)
        cx, cy = rng.uniform(0, w), rng.uniform(0, h)
        rx, ry = rng.uniform(6, 30, 2)
        if rng.random() < 0.5:
            sel = ((xs * max(h, w) - cx) / rx) ** 2 + ((ys * max(h, w) - cy) / ry) ** 2 <= 1
        else:
            sel = (np.abs(xs * max(h, w) - cx) <= rx) & (np.abs(ys * max(h, w) - cy) <= ry)
        img[sel] = col
    return img


def render_person(rng: np.random.Generator, size=IMAGE_SIZE, background=None) -> Person:
    """One synthetic person with roll, scale and position jitter.

    ``background`` is an RGB colour for a plain backdrop; by default the
    backdrop is a gradient with random clutter shapes.
    """
    w, h = size
    d = rng.uniform(18, 24)
    roll = math.radians(rng.uniform(-15, 15))
    mid = np.array([w / 2 + rng.uniform(-8, 8), rng.uniform(46, 56)])
    v = 0.5 * d * np.array([math.cos(roll), math.sin(roll)])
    eyes = EyePair(tuple(mid - v), tuple(mid + v))
    m, v, pe = _face_frame(eyes)
    shape = (h, w)

    img = _background(rng, h, w) if background is None else np.tile(
        np.asarray(background, np.float64), (h, w, 1))
    head = _ellipse((0, 0.3), (0.95, 1.3), m, v, pe, shape)
    hair = head & _ellipse((0, -0.55), (1.1, 0.75), m, v, pe, shape)
    neck = _poly([(-0.36, 0.9), (0.36, 0.9), (0.36, 2.2), (-0.36, 2.2)], m, v, pe, shape)
    sw = rng.uniform(2.3, 2.7)
    body = _poly([(-0.6, 1.8), (0.6, 1.8), (1.9, 2.0), (sw, 2.5), (sw + 0.2, 12),
                  (-sw - 0.2, 12), (-sw, 2.5), (-1.9, 2.0)], m, v, pe, shape)
    collar = _poly([(-0.6, 1.75), (0.6, 1.75), (0, 2.5)], m, v, pe, shape)
    skin = (head & ~hair) | (neck & ~body) | (collar & ~head)
    clothes = body & ~collar

    skin_rgb = np.array([rng.uniform(170, 235), rng.uniform(120, 175), rng.uniform(90, 145)])
    rows, cols = np.mgrid[0:h, 0:w]
    shade = (cols / w)[..., None] * rng.uniform(-25, 25)
    img[skin] = np.clip(skin_rgb + shade[skin], 0, 255)
    img[hair] = rng.uniform(10, 90, 3)
    cloth = rng.uniform(0, 255, 3)
    cloth2 = np.clip(cloth + rng.uniform(-60, 60, 3), 0, 255)
    if rng.random() < 0.5:
        stripes = (rows // rng.integers(5, 10)) % 2 == 0
        img[clothes & stripes] = cloth
        img[clothes & ~stripes] = cloth2
    else:
        img[clothes] = cloth
    for side in (-0.5, 0.5):
        img[_ellipse((side, 0.0), (0.12, 0.08), m, v, pe, shape)] = (40, 30, 30)
    img[_ellipse((0, 0.95), (0.3, 0.08), m, v, pe, shape)] = (150, 60, 60)

    img = ndimage.gaussian_filter(img, sigma=(0.7, 0.7, 0))
    img = np.clip(img + rng.normal(0, 4, img.shape), 0, 255)
    return Person(np.rint(img), eyes, skin, clothes)


def people(seed: int, n: int, size=IMAGE_SIZE) -> list[Person]:
    rng = np.random.default_rng(seed)
    return [render_person(rng, size) for _ in range(n)]


def write_corpus(out_dir=DATA_DIR, n=20, n_train=40, seed=EVAL_SEED, map_seed=MAP_SEED) -> Path:
    """Write images, eyes, masks, a manifest and skin/clothes probability maps."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, p in enumerate(people(seed, n)):
        stem = f"person{i:02d}"
        write_image(out / f"{stem}.png", p.image)
        write_eyes(out / f"{stem}.eyes.json", p.eyes)
        write_mask(out / f"{stem}.gt.png", p.people)
        write_mask(out / f"{stem}.skin.gt.png", p.skin)
        write_mask(out / f"{stem}.clothes.gt.png", p.clothes)
        entries.append({"image": f"{stem}.png", "eyes": f"{stem}.eyes.json",
                        "gt": f"{stem}.gt.png", "skin_gt": f"{stem}.skin.gt.png",
                        "clothes_gt": f"{stem}.clothes.gt.png"})
    (out / "manifest.json").write_text(json.dumps(entries, indent=1) + "\n")
    train = people(map_seed, n_train)
    for target, attr in ((Stage.SKIN, "skin"), (Stage.CLOTHES, "clothes")):
        pmap = build_probability_map([(getattr(p, attr), p.eyes) for p in train], MAP_FRAME, target)
        pmap.save(out / f"{attr}_map.png")
    return out / "manifest.json"


@dataclass
class CorpusItem:
    name: str
    image: np.ndarray
    eyes: EyePair
    gt: np.ndarray


def load_manifest(path) -> list[CorpusItem]:
    """Read a ``[{"image", "eyes", "gt"}, ...]`` manifest; paths are relative to it."""
    path = Path(path)
    base = path.parent
    items = []
    for e in json.loads(path.read_text()):
        img = base / e["image"]
        items.append(CorpusItem(Path(e["image"]).stem, read_image(img), read_eyes(base / e["eyes"]),
                                read_mask(base / e["gt"])))
    return items


def desk_manifest() -> Path:
    return DATA_DIR / "manifest.json"
