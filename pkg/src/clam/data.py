"""Datasets: IDX and CSV loaders, a synthetic hard-class generator, augmentations."""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import map_coordinates

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class IdxFormatError(ValueError):
    pass


class WrongMagicError(IdxFormatError):
    pass


class TruncatedFileError(IdxFormatError):
    pass


class CountMismatchError(IdxFormatError):
    pass


@dataclass(frozen=True)
class Dataset:
    """Samples ``X`` (N x d, or N x h x w[, c] for images) and labels ``y``."""

    X: np.ndarray
    y: np.ndarray
    n_classes: int
    split: str = "train"

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        y = np.array(self.y)
        if len(X) != len(y):
            raise ValueError(f"{len(X)} samples but {len(y)} labels")
        if y.size and (y.min() < 0 or y.max() >= self.n_classes):
            raise ValueError("labels out of range")
        X.setflags(write=False)
        y = y.astype(int)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    def __len__(self):
        return len(self.y)

    @property
    def is_image(self) -> bool:
        return self.X.ndim >= 3

    def flat(self) -> np.ndarray:
        return self.X.reshape(len(self.X), -1)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.y, minlength=self.n_classes)


# -- IDX ---------------------------------------------------------------------

def _read_header(buf: bytes, magic: int, ndim: int, path) -> tuple[int, ...]:
    need = 4 * (1 + ndim)
    if len(buf) < need:
        raise TruncatedFileError(f"{path}: header needs {need} bytes, file has {len(buf)}")
    got = struct.unpack(">I", buf[:4])[0]
    if got != magic:
        raise WrongMagicError(f"{path}: magic 0x{got:08x}, expected 0x{magic:08x}")
    return struct.unpack(f">{ndim}I", buf[4:need])


def read_idx_images(path) -> np.ndarray:
    with open(path, "rb") as fh:
        buf = fh.read()
    count, rows, cols = _read_header(buf, IDX_IMAGES_MAGIC, 3, path)
    size = count * rows * cols
    if len(buf) - 16 < size:
        raise TruncatedFileError(f"{path}: header promises {count} images, data is short")
    pix = np.frombuffer(buf, dtype=np.uint8, count=size, offset=16)
    return pix.reshape(count, rows, cols)


def read_idx_labels(path) -> np.ndarray:
    with open(path, "rb") as fh:
        buf = fh.read()
    (count,) = _read_header(buf, IDX_LABELS_MAGIC, 1, path)
    if len(buf) - 8 < count:
        raise TruncatedFileError(f"{path}: header promises {count} labels, data is short")
    return np.frombuffer(buf, dtype=np.uint8, count=count, offset=8).copy()


def write_idx(images_path, labels_path, images, labels) -> None:
    """Write uint8 images (N x rows x cols) and labels in IDX format."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">4I", IDX_IMAGES_MAGIC, *images.shape))
        fh.write(images.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">2I", IDX_LABELS_MAGIC, len(labels)))
        fh.write(labels.tobytes())


def load_idx(images_path, labels_path, n_classes: int | None = None, split: str = "train") -> Dataset:
    """Fashion-MNIST style pair of IDX files; pixels scaled to [0, 1]."""
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if len(images) != len(labels):
        raise CountMismatchError(f"{len(images)} images but {len(labels)} labels")
    n = int(labels.max()) + 1 if n_classes is None else n_classes
    return Dataset(images / 255.0, labels, n, split)


# -- CSV ---------------------------------------------------------------------

def save_csv(path, ds: Dataset) -> None:
    """Header row ``f0..f{d-1},label``; floats written with full precision."""
    X = ds.flat()
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow([f"f{i}" for i in range(X.shape[1])] + ["label"])
        for row, label in zip(X, ds.y):
            wr.writerow([repr(float(x)) for x in row] + [int(label)])


def load_csv(path, n_classes: int | None = None, split: str = "train") -> Dataset:
    """Header row, real feature columns, integer label in the last column."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ValueError(f"{path}: no data rows")
    body = rows[1:]
    X = np.array([[float(x) for x in r[:-1]] for r in body])
    y = np.array([int(r[-1]) for r in body])
    n = int(y.max()) + 1 if n_classes is None else n_classes
    return Dataset(X, y, n, split)


# -- synthetic ---------------------------------------------------------------

def synthetic_means(n_classes: int, dim: int, separation: float, overlap_pairs=(), overlap: float = 1.0):
    """Class means on a scaled simplex, with listed pairs pulled together.

    Before any pulling, every pair of means is ``separation`` apart.  For a
    pair ``(a, b)`` each mean moves ``overlap / 2`` of the way towards the
    other (``overlap = 1`` makes them identical); a pair may also be given as
    ``(a, b, overlap)``.
    """
    if dim < n_classes:
        raise ValueError("dim must be at least n_classes")
    base = np.zeros((n_classes, dim))
    base[np.arange(n_classes), np.arange(n_classes)] = separation / np.sqrt(2.0)
    means = base.copy()
    for pair in overlap_pairs:
        a, b = int(pair[0]), int(pair[1])
        s = float(pair[2]) if len(pair) > 2 else overlap
        means[a] += 0.5 * s * (base[b] - base[a])
        means[b] += 0.5 * s * (base[a] - base[b])
    return means


def gen_synthetic(
    n_classes: int = 5,
    dim: int = 10,
    samples_per_class: int = 200,
    overlap_pairs=(),
    seed: int = 0,
    *,
    test_per_class: int | None = None,
    separation: float = 10.0,
    overlap: float = 1.0,
) -> tuple[Dataset, Dataset]:
    """Unit-covariance Gaussian blobs; returns independent (train, test) splits."""
    if min(n_classes, dim, samples_per_class) <= 0:
        raise ValueError("n_classes, dim and samples_per_class must be positive")
    test_per_class = samples_per_class if test_per_class is None else test_per_class
    means = synthetic_means(n_classes, dim, separation, overlap_pairs, overlap)
    rng = np.random.default_rng(seed)

    def draw(per_class, split):
        y = np.repeat(np.arange(n_classes), per_class)
        X = means[y] + rng.standard_normal((len(y), dim))
        perm = rng.permutation(len(y))
        return Dataset(X[perm], y[perm], n_classes, split)

    return draw(samples_per_class, "train"), draw(test_per_class, "test")


def synthetic_templates(n_classes: int, size: int, hard_pairs=(), overlap: float = 0.5):
    """Grayscale class templates: one Gaussian bump per class, placed on a ring.

    Bumps near the border are the ones random crops cut away, which makes
    the effect of cropping depend on the class.  Hard pairs get their bump
    centres pulled together.
    """
    ang = 2 * np.pi * np.arange(n_classes) / n_classes
    radius = 0.3 * size
    centres = np.stack([size / 2 + radius * np.sin(ang), size / 2 + radius * np.cos(ang)], axis=1)
    moved = centres.copy()
    for pair in hard_pairs:
        a, b = int(pair[0]), int(pair[1])
        s = float(pair[2]) if len(pair) > 2 else overlap
        moved[a] += 0.5 * s * (centres[b] - centres[a])
        moved[b] += 0.5 * s * (centres[a] - centres[b])
    yy, xx = np.mgrid[0:size, 0:size] + 0.5
    width = 0.12 * size
    d2 = (yy[None] - moved[:, 0, None, None]) ** 2 + (xx[None] - moved[:, 1, None, None]) ** 2
    return np.exp(-d2 / (2 * width**2))


def gen_synthetic_images(
    n_classes: int = 5,
    size: int = 8,
    samples_per_class: int = 200,
    hard_pairs=(),
    seed: int = 0,
    *,
    test_per_class: int | None = None,
    noise: float = 0.25,
    overlap: float = 0.5,
) -> tuple[Dataset, Dataset]:
    """Noisy, randomly shifted copies of per-class templates, clipped to [0, 1]."""
    test_per_class = samples_per_class if test_per_class is None else test_per_class
    tmpl = synthetic_templates(n_classes, size, hard_pairs, overlap)
    rng = np.random.default_rng(seed)

    def draw(per_class, split):
        y = np.repeat(np.arange(n_classes), per_class)
        shifts = rng.integers(-1, 2, size=(len(y), 2))
        X = np.empty((len(y), size, size))
        for k, (label, (dy, dx)) in enumerate(zip(y, shifts)):
            X[k] = np.roll(tmpl[label], (dy, dx), axis=(0, 1))
        X += noise * rng.standard_normal(X.shape)
        perm = rng.permutation(len(y))
        return Dataset(np.clip(X[perm], 0.0, 1.0), y[perm], n_classes, split)

    return draw(samples_per_class, "train"), draw(test_per_class, "test")


# -- augmentation ------------------------------------------------------------

@dataclass(frozen=True)
class AugmentationSpec:
    """``kind`` is ``"none"``, ``"crop"`` (random resized crop) or ``"jitter"``."""

    kind: str = "none"
    crop_lower_bound: float = 1.0
    brightness: float = 0.0
    contrast: float = 0.0
    saturation: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "crop", "jitter"):
            raise ValueError(f"unknown augmentation {self.kind!r}")
        if not 0 < self.crop_lower_bound <= 1:
            raise ValueError("crop_lower_bound must lie in (0, 1]")
        if min(self.brightness, self.contrast, self.saturation) < 0:
            raise ValueError("jitter strengths must be non-negative")

    @property
    def is_identity(self) -> bool:
        if self.kind == "crop":
            return self.crop_lower_bound == 1.0
        if self.kind == "jitter":
            return self.brightness == self.contrast == self.saturation == 0
        return True

    @property
    def tag(self) -> str:
        if self.kind == "crop":
            return f"crop{self.crop_lower_bound:g}"
        if self.kind == "jitter":
            return f"jitter{self.brightness:g}-{self.contrast:g}-{self.saturation:g}"
        return "none"


def random_resized_crop(img: np.ndarray, lower_bound: float, rng) -> np.ndarray:
    """Crop a square-aspect window covering a U[lower_bound, 1] area fraction
    at a random position, then resize back with bilinear interpolation."""
    h, w = img.shape[:2]
    area = rng.uniform(lower_bound, 1.0)
    scale = np.sqrt(area)
    ch, cw = scale * h, scale * w
    top = rng.uniform(0.0, h - ch)
    left = rng.uniform(0.0, w - cw)
    rows = top + (np.arange(h) + 0.5) * (ch / h) - 0.5
    cols = left + (np.arange(w) + 0.5) * (cw / w) - 0.5
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    if img.ndim == 2:
        return map_coordinates(img, [rr, cc], order=1, mode="nearest")
    return np.stack(
        [map_coordinates(img[..., k], [rr, cc], order=1, mode="nearest") for k in range(img.shape[2])],
        axis=-1,
    )


def _factor(strength, rng):
    return rng.uniform(max(0.0, 1.0 - strength), 1.0 + strength)


def color_jitter(img: np.ndarray, brightness: float, contrast: float, saturation: float, rng) -> np.ndarray:
    """Brightness, then contrast about the image mean, then saturation.

    Saturation only acts on 3-channel images; grayscale input is left alone.
    """
    out = img * _factor(brightness, rng)
    m = out.mean()
    out = (out - m) * _factor(contrast, rng) + m
    if img.ndim == 3 and img.shape[2] == 3:
        gray = out @ np.array([0.299, 0.587, 0.114])
        out = (out - gray[..., None]) * _factor(saturation, rng) + gray[..., None]
    return np.clip(out, 0.0, 1.0)


def augment(sample: np.ndarray, spec: AugmentationSpec, rng) -> np.ndarray:
    sample = np.asarray(sample, dtype=float)
    if spec.kind == "none":
        return sample
    if sample.ndim not in (2, 3):
        raise ValueError("image augmentations need an h x w or h x w x c sample")
    if spec.kind == "crop":
        if spec.crop_lower_bound == 1.0:
            return sample
        return np.clip(random_resized_crop(sample, spec.crop_lower_bound, rng), 0.0, 1.0)
    return color_jitter(sample, spec.brightness, spec.contrast, spec.saturation, rng)


def _crop_batch(X: np.ndarray, lower_bound: float, rng) -> np.ndarray:
    # Same transform as random_resized_crop, one map_coordinates call per batch.
    B, h, w = X.shape[:3]
    scale = np.sqrt(rng.uniform(lower_bound, 1.0, size=B))
    ch, cw = scale * h, scale * w
    top = rng.uniform(0.0, h - ch)
    left = rng.uniform(0.0, w - cw)
    rows = top[:, None] + (np.arange(h) + 0.5)[None, :] * (ch / h)[:, None] - 0.5
    cols = left[:, None] + (np.arange(w) + 0.5)[None, :] * (cw / w)[:, None] - 0.5
    bb = np.broadcast_to(np.arange(B)[:, None, None], (B, h, w))
    rr = np.broadcast_to(rows[:, :, None], (B, h, w))
    cc = np.broadcast_to(cols[:, None, :], (B, h, w))
    if X.ndim == 3:
        out = map_coordinates(X, [bb, rr, cc], order=1, mode="nearest")
    else:
        out = np.stack(
            [map_coordinates(X[..., k], [bb, rr, cc], order=1, mode="nearest") for k in range(X.shape[3])],
            axis=-1,
        )
    return np.clip(out, 0.0, 1.0)


def augment_batch(X: np.ndarray, spec: AugmentationSpec, rng) -> np.ndarray:
    """Augment every sample of a batch with fresh randomness."""
    if spec.is_identity:
        return X
    if spec.kind == "crop" and X.ndim in (3, 4):
        return _crop_batch(np.asarray(X, dtype=float), spec.crop_lower_bound, rng)
    return np.stack([augment(x, spec, rng) for x in X])
