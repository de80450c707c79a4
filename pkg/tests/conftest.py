import numpy as np
import pytest

from trixelseg import deskcorpus
from trixelseg.trimap import ProbabilityMap

ACCEPTANCE_LINES: dict[int, str] = {}


def two_color_image(rng, size=64, margin=2):
    """Two flat colours split by a random horizontal or vertical line, with the mask.

    The boundary stays ``margin`` pixels inside the frame so the mesh can trace it.
    """
    pos = int(rng.integers(margin, size - margin + 1))
    gt = np.zeros((size, size), bool)
    if rng.random() < 0.5:
        gt[:, pos:] = True
    else:
        gt[pos:, :] = True
    if rng.random() < 0.5:
        gt = ~gt
    fg, bg = rng.uniform(0, 255, 3), rng.uniform(0, 255, 3)
    while np.linalg.norm(fg - bg) < 60:
        bg = rng.uniform(0, 255, 3)
    return np.where(gt[..., None], fg, bg), gt


def seeding_trimap(gt, band=3):
    """Foreground/background seeds eroded ``band`` pixels from the boundary."""
    from scipy import ndimage

    lab = np.full(gt.shape, 128, np.uint8)
    lab[ndimage.binary_erosion(gt, iterations=band)] = 255
    lab[ndimage.binary_erosion(~gt, iterations=band, border_value=1)] = 0
    return lab


@pytest.fixture(scope="session")
def desk_corpus():
    return deskcorpus.load_manifest(deskcorpus.desk_manifest())


@pytest.fixture(scope="session")
def desk_maps():
    d = deskcorpus.DATA_DIR
    return {k: ProbabilityMap.load(d / f"{k}_map.png") for k in ("skin", "clothes")}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
