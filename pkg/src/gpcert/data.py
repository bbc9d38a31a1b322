"""Dataset generation, ingestion, and preprocessing.

Synthetic generators draw from seeded integer-based streams so every run of a
given (seed, n) is bit-identical.  Image data arrives in the classic IDX
format; tabular data as CSV with a small JSON schema describing the columns.
All features end up in [0, 1]: images by scaling the byte range, tabular data
by min-max normalization with training-split statistics.  Feature masks and
normalization statistics always derive from the training split only.
"""

from __future__ import annotations

import gzip
import hashlib
import json
import os
import struct
from dataclasses import dataclass

import numpy as np

from .gpc import LabeledDataset

IMAGE_FILTER_THRESHOLD = 50.0 / 255.0
TABULAR_FILTER_THRESHOLD = 1e-6


@dataclass
class SplitDataset:
    """Train/test pair plus provenance of the kept feature columns."""

    train: LabeledDataset
    test: LabeledDataset
    kept_dims: np.ndarray | None = None   # indices into the pre-filter columns
    image_shape: tuple | None = None      # (rows, cols) before flattening, if image data


# ---------------------------------------------------------------------------
# synthetic generators


def gen_two_gaussians_3d(seed: int, n: int) -> LabeledDataset:
    """Two spherical Gaussians (sigma 1/4) at (1/4,..) and (3/4,..), clipped to [0,1]^3.

    The low corner is class -1, the high corner +1; n must be even and splits
    half and half.
    """
    if n < 2 or n % 2:
        raise ValueError(f"n must be even and >= 2, got {n}")
    rng = np.random.default_rng(seed)
    half = n // 2
    lo = rng.normal(0.25, 0.25, size=(half, 3))
    hi = rng.normal(0.75, 0.25, size=(half, 3))
    x = np.clip(np.concatenate([lo, hi], axis=0), 0.0, 1.0)
    y = np.concatenate([-np.ones(half), np.ones(half)])
    return LabeledDataset(x=x, y=y)


def gen_three_clusters_8d(seed: int, n: int) -> LabeledDataset:
    """Three spherical clusters (sigma 0.1) along the main diagonal of [0,1]^8.

    Centers at 1/4, 1/2 and 3/4 of the diagonal; the middle cluster carries
    the opposite class (-1) of the outer two (+1), so no linear rule works.
    The middle cluster holds half the points to keep the classes balanced.
    """
    if n < 3:
        raise ValueError(f"n must be >= 3, got {n}")
    rng = np.random.default_rng(seed)
    middle = n // 2
    first = (n - middle + 1) // 2
    sizes = [first, middle, n - middle - first]
    frames = []
    labels = []
    for size, at, lab in zip(sizes, (0.25, 0.5, 0.75), (1.0, -1.0, 1.0)):
        frames.append(rng.normal(at, 0.1, size=(size, 8)))
        labels.append(np.full(size, lab))
    x = np.clip(np.concatenate(frames, axis=0), 0.0, 1.0)
    return LabeledDataset(x=x, y=np.concatenate(labels))


# ---------------------------------------------------------------------------
# IDX images


def _open_maybe_gzip(path):
    with open(path, "rb") as fh:
        magic = fh.read(2)
    if magic == b"\x1f\x8b":
        return gzip.open(path, "rb")
    return open(path, "rb")


def read_idx(path) -> np.ndarray:
    """Read one IDX file (big-endian, unsigned byte payload)."""
    with _open_maybe_gzip(path) as fh:
        zero1, zero2, dtype, ndim = struct.unpack(">BBBB", fh.read(4))
        if zero1 != 0 or zero2 != 0:
            raise ValueError(f"{path}: not an IDX file (bad magic prefix)")
        if dtype != 0x08:
            raise ValueError(f"{path}: only unsigned-byte IDX payloads are supported")
        shape = struct.unpack(f">{ndim}I", fh.read(4 * ndim))
        count = int(np.prod(shape))
        payload = fh.read(count)
        if len(payload) != count:
            raise ValueError(f"{path}: truncated payload ({len(payload)} of {count} bytes)")
    return np.frombuffer(payload, dtype=np.uint8).reshape(shape)


def write_idx(path, array: np.ndarray) -> None:
    """Write an unsigned-byte IDX file (used by fixtures and round-trip tests)."""
    arr = np.ascontiguousarray(array, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">BBBB", 0, 0, 0x08, arr.ndim))
        fh.write(struct.pack(f">{arr.ndim}I", *arr.shape))
        fh.write(arr.tobytes())


def block_average(images: np.ndarray, resolution: int) -> np.ndarray:
    """Area-weighted block averaging of square images to resolution x resolution.

    Output pixel (i, j) averages the input intensity over the rectangle it
    covers, with fractional rows and columns weighted by overlap, so any
    source/target ratio works and divisible ratios reduce to plain means.
    """
    imgs = np.asarray(images, dtype=float)
    single = imgs.ndim == 2
    if single:
        imgs = imgs[None, :, :]
    n, rows, cols = imgs.shape
    if rows != cols:
        raise ValueError(f"images must be square, got {rows}x{cols}")
    if not 1 <= resolution <= rows:
        raise ValueError(f"resolution must be in [1, {rows}], got {resolution}")
    if resolution == rows:
        out = imgs.copy()
    else:
        w = _overlap_weights(rows, resolution)
        out = np.einsum("ip,npq,jq->nij", w, imgs, w)
    return out[0] if single else out


def _overlap_weights(src: int, dst: int) -> np.ndarray:
    """Row weights W[i, p] = overlap of output cell i with input cell p, / cell size."""
    h = src / dst
    w = np.zeros((dst, src))
    for i in range(dst):
        lo, hi = i * h, (i + 1) * h
        p0, p1 = int(np.floor(lo)), int(np.ceil(hi))
        for p in range(p0, min(p1, src)):
            w[i, p] = max(0.0, min(hi, p + 1) - max(lo, p)) / h
    return w


_LOW_DIGITS = (0, 1, 2, 3, 4)
_HIGH_DIGITS = (5, 6, 7, 8, 9)


def _parse_class_spec(class_spec: str):
    """'3v5' -> pair classes; 'low_vs_high' -> digit groups {0..4} vs {5..9}."""
    if class_spec == "low_vs_high":
        return _LOW_DIGITS, _HIGH_DIGITS
    parts = class_spec.split("v")
    if len(parts) == 2 and all(p.isdigit() for p in parts):
        a, b = int(parts[0]), int(parts[1])
        if a != b and 0 <= a <= 9 and 0 <= b <= 9:
            return (a,), (b,)
    raise ValueError(f"bad class spec {class_spec!r}; want 'AvB' or 'low_vs_high'")


def _balanced_pick(labels, wanted, per_group, rng):
    """Indices with per_group samples drawn from each digit group, seeded."""
    picks = []
    for group in wanted:
        pool = np.nonzero(np.isin(labels, group))[0]
        if len(pool) < per_group:
            raise ValueError(f"need {per_group} samples of digits {group}, found {len(pool)}")
        picks.append(rng.choice(pool, size=per_group, replace=False))
    idx = np.concatenate(picks)
    return np.sort(idx)


def load_mnist(
    path,
    resolution: int,
    class_spec: str,
    n_train: int,
    n_test: int,
    seed: int,
) -> SplitDataset:
    """Binary digit task from the four standard IDX files in `path`.

    Images are block-averaged to resolution x resolution, scaled to [0, 1],
    flattened row-major, and low-variance pixels are removed using the
    training range only (threshold 50/255).  Classes: the first group of
    class_spec maps to -1, the second to +1; both splits are balanced halves.
    """
    lo_grp, hi_grp = _parse_class_spec(class_spec)
    if n_train % 2 or n_test % 2:
        raise ValueError("n_train and n_test must be even (balanced halves)")
    files = {
        "train_x": "train-images-idx3-ubyte",
        "train_y": "train-labels-idx1-ubyte",
        "test_x": "t10k-images-idx3-ubyte",
        "test_y": "t10k-labels-idx1-ubyte",
    }
    arrays = {}
    for key, base in files.items():
        full = os.path.join(path, base)
        if not os.path.exists(full) and os.path.exists(full + ".gz"):
            full = full + ".gz"
        if not os.path.exists(full):
            raise FileNotFoundError(f"missing IDX file {full}")
        arrays[key] = read_idx(full)

    rng = np.random.default_rng(seed)
    out = {}
    for split, n in (("train", n_train), ("test", n_test)):
        imgs, labels = arrays[f"{split}_x"], arrays[f"{split}_y"].astype(int)
        idx = _balanced_pick(labels, (lo_grp, hi_grp), n // 2, rng)
        x_img = block_average(imgs[idx], resolution) / 255.0
        x = x_img.reshape(len(idx), -1)
        y = np.where(np.isin(labels[idx], hi_grp), 1.0, -1.0)
        out[split] = (x, y)

    xtr, ytr = out["train"]
    xte, yte = out["test"]
    mask = filter_low_variance(xtr, IMAGE_FILTER_THRESHOLD)
    return SplitDataset(
        train=LabeledDataset(x=xtr[:, mask], y=ytr),
        test=LabeledDataset(x=xte[:, mask], y=yte),
        kept_dims=mask,
        image_shape=(resolution, resolution),
    )


# ---------------------------------------------------------------------------
# tabular CSV + schema


def load_uci(
    name: str,
    path,
    n_train: int,
    n_test: int,
    seed: int,
) -> SplitDataset:
    """Tabular binary task from `<path>/<name>.csv` with `<path>/<name>.schema.json`.

    The schema lists the columns in order: continuous or binary columns pass
    through, categorical columns expand one-of-n with the level vocabulary
    taken from the training rows (unseen test levels encode as all zeros).
    Features are min-max normalized by training statistics, the test split is
    clipped into [0, 1], and near-constant columns (range <= 1e-6 on the
    training rows) are dropped.
    """
    csv_path = os.path.join(path, f"{name}.csv")
    schema_path = os.path.join(path, f"{name}.schema.json")
    for p in (csv_path, schema_path):
        if not os.path.exists(p):
            raise FileNotFoundError(p)
    with open(schema_path, "r", encoding="utf-8") as fh:
        schema = json.load(fh)
    columns = schema["columns"]
    label_col = int(schema["label_column"])
    positive = str(schema["positive_label"])

    rows = []
    with open(csv_path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(line.split(","))
    if schema.get("header", False):
        rows = rows[1:]
    n_total = len(rows)
    if n_train + n_test > n_total:
        raise ValueError(f"asked for {n_train}+{n_test} rows, file has {n_total}")

    labels = np.array([1.0 if r[label_col].strip() == positive else -1.0 for r in rows])
    feature_cols = [i for i in range(len(columns)) if i != label_col]

    rng = np.random.default_rng(seed)
    order = rng.permutation(n_total)
    tr_idx, te_idx = order[:n_train], order[n_train : n_train + n_test]

    blocks_tr, blocks_te = [], []
    for col in feature_cols:
        kind = columns[col]["type"]
        raw = [r[col].strip() for r in rows]
        if kind == "categorical":
            levels = sorted({raw[i] for i in tr_idx})
            enc = np.zeros((n_total, len(levels)))
            index = {lv: k for k, lv in enumerate(levels)}
            for i, value in enumerate(raw):
                k = index.get(value)
                if k is not None:
                    enc[i, k] = 1.0
            block = enc
        elif kind in ("continuous", "binary"):
            block = np.array([float(v) for v in raw])[:, None]
        else:
            raise ValueError(f"unknown column type {kind!r} in schema")
        blocks_tr.append(block[tr_idx])
        blocks_te.append(block[te_idx])

    xtr = np.concatenate(blocks_tr, axis=1)
    xte = np.concatenate(blocks_te, axis=1)
    xtr, xte = normalize_unit(xtr, xte)
    mask = filter_low_variance(xtr, TABULAR_FILTER_THRESHOLD)
    return SplitDataset(
        train=LabeledDataset(x=xtr[:, mask], y=labels[tr_idx]),
        test=LabeledDataset(x=xte[:, mask], y=labels[te_idx]),
        kept_dims=mask,
        image_shape=None,
    )


def normalize_unit(x_train: np.ndarray, x_test: np.ndarray | None = None):
    """Min-max normalize by training statistics; constant columns map to zero.

    The test split is clipped into [0, 1] so later stages can rely on the unit
    domain.  Applying the normalization twice is the identity on the training
    side (columns already spanning [0, 1] keep their endpoints).
    """
    x_train = np.asarray(x_train, dtype=float)
    lo = x_train.min(axis=0)
    span = x_train.max(axis=0) - lo
    safe = np.where(span > 0, span, 1.0)
    xt = (x_train - lo) / safe
    xt[:, span == 0] = 0.0
    if x_test is None:
        return xt
    xe = np.clip((np.asarray(x_test, dtype=float) - lo) / safe, 0.0, 1.0)
    xe[:, span == 0] = 0.0
    return xt, xe


def filter_low_variance(x_train: np.ndarray, threshold: float) -> np.ndarray:
    """Indices of columns whose training range exceeds the threshold."""
    x_train = np.asarray(x_train, dtype=float)
    rng = x_train.max(axis=0) - x_train.min(axis=0)
    mask = np.nonzero(rng > threshold)[0]
    if len(mask) == 0:
        raise ValueError("no feature survives the variance filter; threshold too high")
    return mask


def fingerprint(split: SplitDataset) -> str:
    """Stable content hash of a split, for recording in results."""
    h = hashlib.sha256()
    for ds in (split.train, split.test):
        h.update(np.ascontiguousarray(ds.x).tobytes())
        h.update(np.ascontiguousarray(ds.y).tobytes())
        h.update(str(ds.x.shape).encode())
    if split.kept_dims is not None:
        h.update(np.ascontiguousarray(split.kept_dims).tobytes())
    return h.hexdigest()[:16]


def split_synthetic(generator, seed: int, n_train: int, n_test: int) -> SplitDataset:
    """Two independent draws of a synthetic generator (train stream, test stream)."""
    train = generator(seed, n_train)
    test = generator(seed + 1_000_003, n_test)
    return SplitDataset(train=train, test=test, kept_dims=None, image_shape=None)
