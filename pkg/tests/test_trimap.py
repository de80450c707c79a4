import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import ndimage

from trixelseg.exceptions import EmptyBackground, EmptyForeground, NoMasks
from trixelseg.imaging import CanonicalFrame, EyePair
from trixelseg.trimap import (BACKGROUND, FOREGROUND, UNKNOWN, GeometricTemplate,
                              ProbabilityMap, ProbTrimapParams, Stage, Trimap,
                              build_probability_map, geometric_pixel_labels, geometric_trimap,
                              probabilistic_pixel_labels, probabilistic_trimap, read_trimap,
                              units_from_pixels, write_trimap)
from trixelseg.tritom import rasterize_and_summarize, triangulate

SHAPE = (320, 240)
EYES = EyePair((100.0, 80.0), (140.0, 80.0))


def test_face_ellipse_centre():
    lab = geometric_pixel_labels(EYES, SHAPE, Stage.SKIN)
    ys, xs = np.nonzero(lab == FOREGROUND)
    assert xs.mean() == pytest.approx(119.5, abs=0.6)
    assert ys.mean() == pytest.approx(80 + 0.4 * 40, abs=0.6)
    # semi-axes 0.75 d and 1.0 d
    assert (xs.max() - xs.min()) == pytest.approx(2 * 30, abs=2)
    assert (ys.max() - ys.min()) == pytest.approx(2 * 40, abs=2)


def test_clothes_stage_regions():
    lab = geometric_pixel_labels(EYES, SHAPE, Stage.CLOTHES)
    ys, xs = np.nonzero(lab == FOREGROUND)
    assert xs.min() == pytest.approx(120 - 60, abs=1) and xs.max() == pytest.approx(120 + 60, abs=1)
    assert ys.min() == pytest.approx(80 + 88, abs=1)
    assert (lab == BACKGROUND).any() and (lab == UNKNOWN).any()


def _near_boundary(lab):
    edges = np.zeros(lab.shape, bool)
    for v in (BACKGROUND, UNKNOWN, FOREGROUND):
        r = lab == v
        edges |= r & ~ndimage.binary_erosion(r, border_value=1)
    return ndimage.binary_dilation(edges, iterations=1)


@pytest.mark.parametrize("stage", [Stage.SKIN, Stage.CLOTHES])
def test_rotation_equivariance(stage):
    n = 300
    eyes = EyePair((130.0, 90.0), (170.0, 90.0))
    lab = geometric_pixel_labels(eyes, (n, n), stage)
    # np.rot90 sends pixel (x, y) to (y, n - 1 - x)
    rot = lambda p: (p[1], n - 1 - p[0])  # noqa: E731
    lab_r = geometric_pixel_labels(EyePair(rot(eyes.left), rot(eyes.right)), (n, n), stage)
    diff = np.rot90(lab) != lab_r
    assert diff.sum() < 0.01 * n * n
    assert not (diff & ~_near_boundary(lab_r)).any()


def test_clothes_prior_covering_torso():
    torso = geometric_pixel_labels(EYES, SHAPE, Stage.CLOTHES) == FOREGROUND
    with pytest.raises(EmptyForeground):
        geometric_trimap(EYES, SHAPE, Stage.CLOTHES, prior_skin_mask=torso)


def test_clothes_needs_prior():
    with pytest.raises(ValueError):
        geometric_trimap(EYES, SHAPE, Stage.CLOTHES)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_prior_skin_never_foreground(seed):
    rng = np.random.default_rng(seed)
    prior = rng.random(SHAPE) < 0.3
    tm = geometric_trimap(EYES, SHAPE, Stage.CLOTHES, prior_skin_mask=prior)
    lab = tm.to_pixels()
    assert not (lab[prior] == FOREGROUND).any()
    assert not (tm.fg & tm.bg).any()


def test_unit_vote_plurality_and_ties():
    mesh = rasterize_and_summarize(triangulate([(0, 0), (4, 0), (0, 4), (4, 4)], (4, 4)),
                                   np.zeros((4, 4, 3)))
    # trixel 0 holds the 10 pixels on and above the anti-diagonal, trixel 1 the other 6
    lab = np.where(mesh.unit_map == 0, UNKNOWN, BACKGROUND).astype(np.uint8)
    idx = np.flatnonzero(mesh.unit_map == 0)
    assert len(idx) == 10
    flat = lab.ravel()
    flat[idx[:4]] = FOREGROUND
    flat[idx[4:8]] = BACKGROUND  # 4 FG, 4 BG, 2 unknown: tie
    tm = units_from_pixels(flat.reshape(4, 4), mesh)
    assert tm.labels.tolist() == [UNKNOWN, BACKGROUND]
    flat[idx[8]] = FOREGROUND  # 5 FG beats 4 BG
    tm = units_from_pixels(flat.reshape(4, 4), mesh)
    assert tm.labels.tolist() == [FOREGROUND, BACKGROUND]


def test_trimap_validation():
    with pytest.raises(ValueError):
        Trimap(np.array([1, 2]), (1, 2))
    with pytest.raises(EmptyForeground):
        Trimap(np.array([0, 128]), (1, 2)).validate()
    with pytest.raises(EmptyBackground):
        Trimap(np.array([255, 128]), (1, 2)).validate()


def test_template_validation():
    with pytest.raises(ValueError):
        GeometricTemplate(face_axes=(0.75, 2.0))
    with pytest.raises(ValueError):
        GeometricTemplate(torso_x=(1, -1))


# --- probability maps -----------------------------------------------------------

FRAME = CanonicalFrame()
CANON_EYES = EyePair((108.0, 80.0), (148.0, 80.0))  # identity alignment on the default frame


def _rect(x0, y0, x1, y1, shape=(256, 256)):
    m = np.zeros(shape, bool)
    m[y0:y1, x0:x1] = True
    return m


def test_single_mask_map():
    mask = _rect(90, 100, 170, 200)
    pm = build_probability_map([(mask, CANON_EYES)], FRAME)
    assert set(np.unique(pm.values)) == {0.0, 1.0}
    assert np.array_equal(pm.values == 1, mask)


def test_disjoint_masks_map():
    pm = build_probability_map([(_rect(10, 10, 50, 50), CANON_EYES),
                                (_rect(100, 100, 150, 150), CANON_EYES)], FRAME)
    assert set(np.unique(pm.values)) == {0.0, 0.5}


def test_identical_masks_map():
    mask = _rect(90, 100, 170, 200)
    one = build_probability_map([(mask, CANON_EYES)], FRAME)
    many = build_probability_map([(mask, CANON_EYES)] * 5, FRAME)
    assert np.array_equal(one.values, many.values)


def test_no_masks():
    with pytest.raises(NoMasks):
        build_probability_map([], FRAME)


def test_map_saturated_errors():
    ones = ProbabilityMap(np.ones((256, 256)), FRAME, Stage.SKIN)
    with pytest.raises(EmptyForeground):
        probabilistic_trimap(CANON_EYES, ones, (256, 256))
    low = ProbabilityMap(np.full((256, 256), 0.05), FRAME, Stage.SKIN)
    with pytest.raises(EmptyForeground):
        probabilistic_trimap(CANON_EYES, low, (256, 256))


def test_map_of_single_mask_gives_exact_trimap():
    mask = _rect(90, 100, 170, 200)
    pm = build_probability_map([(mask, CANON_EYES)], FRAME)
    tm = probabilistic_trimap(CANON_EYES, pm, (256, 256))
    lab = tm.to_pixels()
    assert not tm.unknown.any()
    assert np.array_equal(lab == FOREGROUND, mask)
    assert np.array_equal(lab == BACKGROUND, ~mask)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.15, 0.85), st.floats(0.0, 0.14))
def test_eps_fg_monotone(eps_fg, step):
    rng = np.random.default_rng(3)
    vals = ndimage.gaussian_filter(rng.random((256, 256)), 8)
    vals = (vals - vals.min()) / np.ptp(vals)
    pm = ProbabilityMap(vals, FRAME, Stage.SKIN)
    eyes = EyePair((70.0, 60.0), (100.0, 66.0))
    lo = probabilistic_pixel_labels(eyes, pm, (200, 180), ProbTrimapParams(eps_fg, 0.1))
    hi = probabilistic_pixel_labels(eyes, pm, (200, 180),
                                    ProbTrimapParams(min(eps_fg + step, 0.99), 0.1))
    assert not ((hi == FOREGROUND) & (lo != FOREGROUND)).any()


def test_prob_params_validation():
    with pytest.raises(ValueError):
        ProbTrimapParams(0.1, 0.7)


def test_map_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    frame = CanonicalFrame((64, 80), (32.0, 20.0), 16.0)
    pm = ProbabilityMap(rng.random((80, 64)), frame, Stage.CLOTHES)
    side = pm.save(tmp_path / "m.png")
    assert side.exists()
    back = ProbabilityMap.load(tmp_path / "m.png")
    assert back.frame == frame and back.target is Stage.CLOTHES
    assert np.abs(back.values - pm.values).max() <= 0.5 / 65535 + 1e-12


def test_trimap_file_round_trip(tmp_path):
    lab = geometric_pixel_labels(EYES, SHAPE, Stage.SKIN)
    tm = units_from_pixels(lab)
    write_trimap(tmp_path / "t.png", tm)
    assert np.array_equal(read_trimap(tmp_path / "t.png").labels, tm.labels)
