"""Datasets and augmentations.

Toy two-moons / concentric-circles generators, Gaussian and crop/noise
augmentations, an IDX reader/writer for real digit corpora, a procedural
7-segment digit corpus usable when no IDX files are available, and the
digit-addition triplet construction.
"""

import gzip
import os
import struct
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

IDX_IMAGES_MAGIC = 2051
IDX_LABELS_MAGIC = 2049

DATA_DIR_ENV = "GEDI_DATA_DIR"


@dataclass
class LabeledDataset:
    points: np.ndarray  # (n, d) float64
    labels: np.ndarray  # (n,) int64

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.points.ndim != 2 or self.labels.ndim != 1 or len(self.points) != len(self.labels):
            raise ValueError(
                f"points/labels shape mismatch: {self.points.shape} vs {self.labels.shape}")

    def __len__(self):
        return len(self.points)


@dataclass
class AdditionDataset:
    """Triplets (x1, x2, x3) whose digit labels satisfy d1 + d2 = d3."""

    x1: np.ndarray
    x2: np.ndarray
    x3: np.ndarray
    digits: np.ndarray  # (n, 3) int64: (d1, d2, d1+d2)

    def __len__(self):
        return len(self.digits)

    def stacked_images(self):
        """All images in slot order, (3n, d); rows i, n+i, 2n+i form example i."""
        return np.concatenate([self.x1, self.x2, self.x3], axis=0)


def make_moons(n, noise=0.05, seed=0):
    """Two interleaving half-circle arcs with isotropic Gaussian jitter.

    Class 0 traces (cos t, sin t), class 1 traces (1 - cos t, -sin t + 0.5),
    t ~ Uniform[0, pi].
    """
    rng = np.random.default_rng(seed)
    n0 = n // 2
    n1 = n - n0
    t0 = rng.uniform(0.0, np.pi, n0)
    t1 = rng.uniform(0.0, np.pi, n1)
    pts = np.concatenate([
        np.stack([np.cos(t0), np.sin(t0)], axis=1),
        np.stack([1.0 - np.cos(t1), -np.sin(t1) + 0.5], axis=1),
    ])
    pts += rng.normal(0.0, noise, pts.shape)
    labels = np.concatenate([np.zeros(n0, dtype=np.int64), np.ones(n1, dtype=np.int64)])
    order = rng.permutation(n)
    return LabeledDataset(pts[order], labels[order])


def make_circles(n, noise=0.05, ratio=0.5, seed=0):
    """Concentric circles: class 0 at radius 1, class 1 at radius `ratio`."""
    if not 0 < ratio < 1:
        raise ValueError(f"ratio must lie in (0, 1), got {ratio}")
    rng = np.random.default_rng(seed)
    n0 = n // 2
    n1 = n - n0
    a0 = rng.uniform(0.0, 2.0 * np.pi, n0)
    a1 = rng.uniform(0.0, 2.0 * np.pi, n1)
    pts = np.concatenate([
        np.stack([np.cos(a0), np.sin(a0)], axis=1),
        ratio * np.stack([np.cos(a1), np.sin(a1)], axis=1),
    ])
    pts += rng.normal(0.0, noise, pts.shape)
    labels = np.concatenate([np.zeros(n0, dtype=np.int64), np.ones(n1, dtype=np.int64)])
    order = rng.permutation(n)
    return LabeledDataset(pts[order], labels[order])


def augment_gaussian(x, sigma, rng):
    """x' = x + N(0, sigma^2 I); the invariance target for toy data."""
    x = np.asarray(x, dtype=np.float64)
    return x + rng.normal(0.0, sigma, x.shape)


def augment_image(x, rng, pad=2, noise=0.2):
    """Random crop after zero-padding by `pad`, plus Gaussian pixel noise.

    Rows are flattened square images in [0, 1]; output is clipped back to [0, 1].
    """
    x = np.asarray(x, dtype=np.float64)
    n, d = x.shape
    side = int(round(np.sqrt(d)))
    if side * side != d:
        raise ValueError(f"rows of length {d} are not square images")
    imgs = x.reshape(n, side, side)
    padded = np.pad(imgs, ((0, 0), (pad, pad), (pad, pad)))
    out = np.empty_like(imgs)
    offs = rng.integers(0, 2 * pad + 1, size=(n, 2))
    for i in range(n):
        r, c = offs[i]
        out[i] = padded[i, r:r + side, c:c + side]
    out = out.reshape(n, d) + rng.normal(0.0, noise, (n, d))
    return np.clip(out, 0.0, 1.0)


def _open_maybe_gzip(path, mode):
    if str(path).endswith(".gz"):
        return gzip.open(path, mode)
    return open(path, mode)


def load_mnist_idx(images_path, labels_path):
    """Read an IDX image/label file pair into a LabeledDataset.

    Big-endian headers; magic 2051 for images (n, rows, cols, uint8 pixels)
    and 2049 for labels. Pixels are scaled to [0, 1] and rows flattened.
    """
    with _open_maybe_gzip(images_path, "rb") as f:
        magic, n, rows, cols = struct.unpack(">iiii", f.read(16))
        if magic != IDX_IMAGES_MAGIC:
            raise ValueError(f"{images_path}: bad image magic {magic}, expected {IDX_IMAGES_MAGIC}")
        buf = f.read(n * rows * cols)
    images = np.frombuffer(buf, dtype=np.uint8).reshape(n, rows * cols)
    with _open_maybe_gzip(labels_path, "rb") as f:
        magic, n_lab = struct.unpack(">ii", f.read(8))
        if magic != IDX_LABELS_MAGIC:
            raise ValueError(f"{labels_path}: bad label magic {magic}, expected {IDX_LABELS_MAGIC}")
        labels = np.frombuffer(f.read(n_lab), dtype=np.uint8)
    if n != n_lab:
        raise ValueError(f"image count {n} != label count {n_lab}")
    return LabeledDataset(images.astype(np.float64) / 255.0, labels.astype(np.int64))


def save_idx_images(path, images):
    """Write uint8 images (n, rows, cols) in IDX layout (round-trips bit-exactly)."""
    images = np.ascontiguousarray(images, dtype=np.uint8)
    n, rows, cols = images.shape
    with _open_maybe_gzip(path, "wb") as f:
        f.write(struct.pack(">iiii", IDX_IMAGES_MAGIC, n, rows, cols))
        f.write(images.tobytes())


def save_idx_labels(path, labels):
    labels = np.ascontiguousarray(labels, dtype=np.uint8)
    with _open_maybe_gzip(path, "wb") as f:
        f.write(struct.pack(">ii", IDX_LABELS_MAGIC, len(labels)))
        f.write(labels.tobytes())


def find_mnist(data_dir=None, split="train"):
    """Paths to (images, labels) IDX files under data_dir, or None if absent.

    data_dir defaults to the GEDI_DATA_DIR environment variable.
    """
    data_dir = data_dir or os.environ.get(DATA_DIR_ENV)
    if not data_dir:
        return None
    stem = "train" if split == "train" else "t10k"
    for suffix in ("", ".gz"):
        imgs = os.path.join(data_dir, f"{stem}-images-idx3-ubyte{suffix}")
        labs = os.path.join(data_dir, f"{stem}-labels-idx1-ubyte{suffix}")
        if os.path.exists(imgs) and os.path.exists(labs):
            return imgs, labs
    return None


# 7-segment layout on a 28x28 canvas. Letters follow the usual convention:
# a top bar, g middle, d bottom; f/b upper verticals, e/c lower verticals.
_SEG_BOXES = {
    "a": (4, 7, 9, 20),
    "g": (13, 16, 9, 20),
    "d": (22, 25, 9, 20),
    "f": (5, 15, 8, 11),
    "b": (5, 15, 18, 21),
    "e": (14, 24, 8, 11),
    "c": (14, 24, 18, 21),
}

_DIGIT_SEGMENTS = {
    0: "abcdef", 1: "bc", 2: "abged", 3: "abgcd", 4: "fgbc",
    5: "afgcd", 6: "afgdec", 7: "abc", 8: "abcdefg", 9: "abcdfg",
}


def _digit_glyph(digit):
    canvas = np.zeros((28, 28))
    for seg in _DIGIT_SEGMENTS[digit]:
        r0, r1, c0, c1 = _SEG_BOXES[seg]
        canvas[r0:r1, c0:c1] = 1.0
    return canvas


def make_digits(n, seed=0):
    """Procedural 10-class digit images: warped, blurred, noisy 7-segment glyphs.

    Class-balanced by construction; rows are flattened 28x28 images in [0, 1].
    A stand-in corpus for pipelines written against load_mnist_idx.
    """
    rng = np.random.default_rng(seed)
    glyphs = [_digit_glyph(d) for d in range(10)]
    labels = np.tile(np.arange(10, dtype=np.int64), (n + 9) // 10)[:n]
    labels = labels[rng.permutation(n)]
    center = np.array([13.5, 13.5])
    out = np.empty((n, 784))
    for i in range(n):
        theta = rng.uniform(-0.15, 0.15)
        sx, sy = rng.uniform(0.92, 1.08, 2)
        shear = rng.uniform(-0.08, 0.08)
        shift = rng.uniform(-1.5, 1.5, 2)
        rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
        fwd = rot @ np.array([[sx, shear * sx], [0.0, sy]])
        inv = np.linalg.inv(fwd)
        img = ndimage.affine_transform(
            glyphs[labels[i]], inv, offset=center - inv @ (center + shift), order=1)
        img = ndimage.gaussian_filter(img, rng.uniform(0.3, 0.6))
        img = img * rng.uniform(0.8, 1.0) + rng.normal(0.0, 0.04, (28, 28))
        out[i] = np.clip(img, 0.0, 1.0).ravel()
    return LabeledDataset(out, labels)


def make_addition_dataset(base, n_examples, seed=0):
    """Digit-sum triplets drawn without replacement from a labeled image pool.

    Each example picks (a, b) uniformly from the 55 ordered pairs with
    a + b <= 9, then consumes one unused image of digit a, one of b, and one
    of a + b. Raises if some digit's pool runs dry, naming the digit.
    """
    rng = np.random.default_rng(seed)
    pairs = [(a, b) for a in range(10) for b in range(10) if a + b <= 9]
    pools = []
    for d in range(10):
        idx = np.flatnonzero(base.labels == d)
        pools.append(list(idx[rng.permutation(len(idx))]))
    x1, x2, x3, digits = [], [], [], []
    for _ in range(n_examples):
        a, b = pairs[rng.integers(0, len(pairs))]
        for digit, dest in ((a, x1), (b, x2), (a + b, x3)):
            if not pools[digit]:
                raise ValueError(
                    f"not enough images of digit {digit} to draw {n_examples} "
                    f"triplets without replacement")
            dest.append(base.points[pools[digit].pop()])
        digits.append((a, b, a + b))
    return AdditionDataset(
        np.asarray(x1), np.asarray(x2), np.asarray(x3),
        np.asarray(digits, dtype=np.int64))


def data_bounds(x):
    """Per-dimension (lo, hi) bounding box of a point set."""
    x = np.asarray(x)
    return x.min(axis=0), x.max(axis=0)
