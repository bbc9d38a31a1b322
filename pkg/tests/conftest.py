"""Shared fixtures: a deterministic glyph-digit image corpus written as real
IDX files, and a credit-style CSV corpus with a schema, so the image and
tabular loaders exercise their full file paths without network access."""

import json

import numpy as np
import pytest
from scipy import ndimage

from gpcert.data import write_idx

# seven-segment layout on a 28x28 canvas: (row0, row1, col0, col1)
_SEGMENTS = {
    "A": (4, 6, 9, 20),
    "B": (4, 15, 18, 20),
    "C": (13, 25, 18, 20),
    "D": (23, 25, 9, 20),
    "E": (13, 25, 8, 10),
    "F": (4, 15, 8, 10),
    "G": (13, 15, 9, 20),
}
_DIGIT_SEGMENTS = {
    0: "ABCDEF",
    1: "BC",
    2: "ABGED",
    3: "ABGCD",
    4: "FGBC",
    5: "AFGCD",
    6: "AFGEDC",
    7: "ABC",
    8: "ABCDEFG",
    9: "ABCDFG",
}


def render_digit(digit: int, rng: np.random.Generator) -> np.ndarray:
    """One 28x28 uint8 glyph with jittered geometry and segment intensity.

    Background pixels stay exactly zero so the low-variance filter drops the
    border the way it does on real scans.
    """
    img = np.zeros((28, 28))
    for name in _DIGIT_SEGMENTS[digit]:
        r0, r1, c0, c1 = _SEGMENTS[name]
        img[r0:r1, c0:c1] = rng.uniform(0.3, 1.0)

    theta = rng.uniform(-0.25, 0.25)
    scale = rng.uniform(0.78, 1.22)
    shear = rng.uniform(-0.18, 0.18)
    shift = rng.uniform(-3.5, 3.5, size=2)
    rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    mat = rot @ np.array([[scale, shear], [0.0, scale]])
    center = np.array([13.5, 13.5])
    inv = np.linalg.inv(mat)
    offset = center - inv @ (center + shift)
    img = ndimage.affine_transform(img, inv, offset=offset, order=1, mode="constant", cval=0.0)
    img = ndimage.gaussian_filter(img, sigma=rng.uniform(0.7, 1.2))
    img *= rng.uniform(0.8, 1.0)
    img[img < 0.04] = 0.0
    return np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)


def render_corpus(n_per_digit: int, seed: int):
    rng = np.random.default_rng(seed)
    images = np.zeros((10 * n_per_digit, 28, 28), dtype=np.uint8)
    labels = np.zeros(10 * n_per_digit, dtype=np.uint8)
    k = 0
    for digit in range(10):
        for _ in range(n_per_digit):
            images[k] = render_digit(digit, rng)
            labels[k] = digit
            k += 1
    order = rng.permutation(len(labels))
    return images[order], labels[order]


@pytest.fixture(scope="session")
def digits_dir(tmp_path_factory):
    """Directory holding the four standard IDX files (600/200 per digit)."""
    root = tmp_path_factory.mktemp("digits")
    train_x, train_y = render_corpus(600, seed=1234)
    test_x, test_y = render_corpus(200, seed=5678)
    write_idx(root / "train-images-idx3-ubyte", train_x)
    write_idx(root / "train-labels-idx1-ubyte", train_y)
    write_idx(root / "t10k-images-idx3-ubyte", test_x)
    write_idx(root / "t10k-labels-idx1-ubyte", test_y)
    return str(root)


# credit-style tabular corpus: 6 continuous, 2 binary, 3 categorical columns


def render_credit_rows(n: int, seed: int):
    rng = np.random.default_rng(seed)
    cont = rng.normal(size=(n, 6)) @ np.diag([1.0, 2.0, 0.5, 1.5, 1.0, 3.0])
    cont += rng.normal(scale=0.3, size=(n, 6))
    binary = (rng.random((n, 2)) < [0.4, 0.65]).astype(int)
    cat_levels = [["a", "b", "c"], ["p", "q", "r", "s"], ["u", "v", "w", "x", "y"]]
    cats = [rng.integers(0, len(lv), size=n) for lv in cat_levels]
    cat_effects = [np.array([0.8, -0.4, 0.0]), np.array([0.5, -0.5, 0.2, -0.2]), np.array([1.0, 0.3, -0.3, -1.0, 0.0])]
    score = (
        0.9 * cont[:, 0]
        - 0.7 * cont[:, 1] / 2.0
        + 0.5 * cont[:, 3]
        + 1.1 * binary[:, 0]
        - 0.6 * binary[:, 1]
        + sum(eff[c] for eff, c in zip(cat_effects, cats))
        + rng.normal(scale=1.2, size=n)
    )
    labels = (score > np.median(score)).astype(int)
    rows = []
    for i in range(n):
        cells = [f"{v:.4f}" for v in cont[i]]
        cells += [str(binary[i, 0]), str(binary[i, 1])]
        cells += [cat_levels[j][cats[j][i]] for j in range(3)]
        cells.append(str(labels[i]))
        rows.append(",".join(cells))
    return rows


@pytest.fixture(scope="session")
def credit_dir(tmp_path_factory):
    """Directory with australian_credit.csv and its schema (420 rows)."""
    root = tmp_path_factory.mktemp("credit")
    rows = render_credit_rows(420, seed=99)
    (root / "australian_credit.csv").write_text("\n".join(rows) + "\n")
    schema = {
        "columns": (
            [{"type": "continuous"}] * 6
            + [{"type": "binary"}] * 2
            + [{"type": "categorical"}] * 3
            + [{"type": "label"}]
        ),
        "label_column": 11,
        "positive_label": "1",
        "header": False,
    }
    (root / "australian_credit.schema.json").write_text(json.dumps(schema))
    return str(root)
