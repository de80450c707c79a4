import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trixelseg.descriptors import (HOGDescriptor, LBPDescriptor, PatternKind, cell_edges,
                                   concat, hog_descriptor, lbp_codes, lbp_descriptor,
                                   prepare_pattern, read_descriptors, write_descriptors)
from trixelseg.exceptions import BboxOutOfRange, EmptyMask, ImageTooSmall


def random_pattern(seed, shape=(64, 64)):
    return np.random.default_rng(seed).uniform(0, 255, shape)


def monotone_map(rng):
    """A random strictly increasing map of [0, 255] built from positive increments."""
    knots = np.linspace(0, 255, 17)
    vals = np.concatenate([[rng.uniform(-50, 50)], np.cumsum(rng.uniform(0.1, 30, 16))])
    vals[1:] += vals[0]
    return lambda x: np.interp(x, knots, vals)


# --- lengths ---------------------------------------------------------------------

def test_default_lengths():
    p = random_pattern(0)
    assert len(lbp_descriptor(p)) == 6400
    assert len(hog_descriptor(p)) == 1764
    assert len(concat([lbp_descriptor(p), hog_descriptor(p)])) == 8164


@pytest.mark.parametrize("w, h, grid, cell", [(59, 65, 5, 8), (64, 64, 3, 8), (40, 33, 4, 6)])
def test_lengths_follow_layout(w, h, grid, cell):
    p = random_pattern(1, (h, w))
    lbp, hog = lbp_descriptor(p, grid), hog_descriptor(p, cell)
    assert len(lbp) == lbp.layout["length"] == grid * grid * 256
    ncx, ncy = hog.layout["cells"]
    assert (ncx, ncy) == (w // cell, h // cell)
    assert len(hog) == hog.layout["length"] == (ncx - 1) * (ncy - 1) * 4 * 9


def test_cell_edges_absorb_remainder():
    assert cell_edges(64, 5).tolist() == [0, 12, 24, 36, 48, 64]
    assert cell_edges(10, 10).tolist() == list(range(11))


# --- LBP -------------------------------------------------------------------------

def test_lbp_hand_encoded_code():
    ring = [6, 5, 4, 4, 4, 5, 6, 6]  # clockwise from top-left
    g = np.array([[ring[0], ring[1], ring[2]],
                  [ring[7], 5, ring[3]],
                  [ring[6], ring[5], ring[4]]], float)
    assert lbp_codes(g).tolist() == [[0b11000111]]
    assert lbp_codes(g).item() == 199


def test_lbp_uniform_patch():
    d = lbp_descriptor(np.full((20, 20), 77.0), grid=2)
    hists = d.values.reshape(4, 256)
    assert (hists[:, :255] == 0).all() and (hists[:, 255] > 0).all()
    assert (lbp_codes(np.full((5, 5), 3.0)) == 255).all()


def test_lbp_cell_sums_are_interior_counts():
    p = random_pattern(2, (37, 41))
    grid = 4
    hists = lbp_descriptor(p, grid).values.reshape(grid, grid, 256)
    ye, xe = cell_edges(37, grid), cell_edges(41, grid)
    interior = np.zeros((37, 41), bool)
    interior[1:-1, 1:-1] = True
    for i in range(grid):
        for j in range(grid):
            assert hists[i, j].sum() == interior[ye[i]:ye[i + 1], xe[j]:xe[j + 1]].sum()


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_lbp_monotone_invariance(seed):
    rng = np.random.default_rng(seed)
    p = np.round(rng.uniform(0, 255, (64, 64)))
    f = monotone_map(rng)
    assert lbp_descriptor(p).values.tobytes() == lbp_descriptor(f(p)).values.tobytes()


def test_lbp_circle_sampling_differs_on_texture():
    p = random_pattern(3, (16, 16))
    assert not np.array_equal(lbp_codes(p, "circle"), lbp_codes(p, "square"))
    assert (lbp_codes(np.full((6, 6), 9.0), "circle") == 255).all()
    with pytest.raises(ValueError):
        lbp_codes(p, "hexagon")


def test_lbp_too_small():
    with pytest.raises(ImageTooSmall):
        lbp_descriptor(np.zeros((2, 5)))


# --- HOG -------------------------------------------------------------------------

def test_hog_constant_is_zero():
    assert not hog_descriptor(np.full((32, 32), 40.0)).values.any()


def test_hog_vertical_step_single_bin():
    g = np.zeros((32, 32))
    g[:, 13:] = 200.0
    v = hog_descriptor(g).values.reshape(-1, 9)
    assert v.any()
    assert not v[:, 1:].any()


def test_hog_horizontal_step_middle_bin():
    g = np.zeros((32, 32))
    g[13:] = 200.0
    v = hog_descriptor(g).values.reshape(-1, 9)
    assert v.any()
    # 90 degrees falls halfway between the bins centred at 80 and 100
    assert not np.delete(v, [4, 5], axis=1).any()


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(-100, 100), st.floats(0.05, 20))
def test_hog_offset_and_scale_invariance(seed, offset, scale):
    p = random_pattern(seed)
    ref = hog_descriptor(p).values
    assert np.abs(hog_descriptor(p + offset).values - ref).max() < 1e-9
    assert np.abs(hog_descriptor(p * scale).values - ref).max() < 1e-9


def test_hog_block_norms():
    v = hog_descriptor(random_pattern(5)).values.reshape(-1, 36)
    assert (v >= 0).all()
    assert (np.linalg.norm(v, axis=1) <= 1 + 1e-6).all()


def test_hog_too_small():
    with pytest.raises(ImageTooSmall):
        hog_descriptor(np.zeros((15, 40)))


# --- patterns ----------------------------------------------------------------------

def test_prepare_full_frame_resize():
    img = np.random.default_rng(6).uniform(0, 255, (90, 70, 3))
    p = prepare_pattern(img, PatternKind.HEAD_SHOULDERS)
    assert p.image.shape == (64, 64)
    face = prepare_pattern(img, PatternKind.FACE)
    assert face.image.shape == (65, 59)


def test_prepare_clothes_fill():
    img = np.random.default_rng(7).uniform(0, 255, (50, 60, 3))
    mask = np.zeros((50, 60), bool)
    mask[:, :30] = True
    p = prepare_pattern(img, PatternKind.CLOTHES, mask=mask, bbox=(0, 0, 60, 50))
    assert np.allclose(p.image[:, 33:], 128.0)


def test_prepare_uniform_bbox():
    img = np.zeros((40, 40, 3))
    img[10:30, 5:25] = 90.0
    p = prepare_pattern(img, "hs", bbox=(5, 10, 25, 30))
    assert np.allclose(p.image, 90.0)


def test_prepare_errors():
    img = np.zeros((20, 20, 3))
    with pytest.raises(EmptyMask):
        prepare_pattern(img, "clothes", mask=np.zeros((20, 20), bool))
    with pytest.raises(ValueError):
        prepare_pattern(img, "clothes")
    with pytest.raises(BboxOutOfRange):
        prepare_pattern(img, "hs", bbox=(0, 0, 21, 10))
    with pytest.raises(BboxOutOfRange):
        prepare_pattern(img, "hs", bbox=(5, 5, 5, 10))


# --- concat, estimators, CSV ---------------------------------------------------------

def test_concat_order_and_identity():
    a, b = lbp_descriptor(random_pattern(8)), hog_descriptor(random_pattern(8))
    assert concat([a]) is a
    ab, ba = concat([a, b]), concat([b, a])
    assert len(ab) == len(ba) == 8164
    assert not np.array_equal(ab.values, ba.values)
    assert [p["kind"] for p in ab.layout["parts"]] == ["lbp", "hog"]
    with pytest.raises(ValueError):
        concat([])


def test_transformers_match_functions():
    X = [random_pattern(s) for s in range(3)]
    lbp = LBPDescriptor().fit(X)
    hog = HOGDescriptor().fit(X)
    assert lbp.n_features_out_ == 6400 and hog.n_features_out_ == 1764
    assert np.array_equal(lbp.transform(X)[1], lbp_descriptor(X[1]).values)
    assert np.array_equal(hog.transform(X)[2], hog_descriptor(X[2]).values)


def test_csv_round_trip(tmp_path):
    ds = [hog_descriptor(random_pattern(s, (32, 32))) for s in range(3)]
    path = tmp_path / "d.csv"
    write_descriptors(path, ["a", "b", "c"], ds)
    ids, values, layout = read_descriptors(path)
    assert ids == ["a", "b", "c"]
    assert np.array_equal(values, np.stack([d.values for d in ds]))
    assert layout["kind"] == "hog" and layout["length"] == values.shape[1]
