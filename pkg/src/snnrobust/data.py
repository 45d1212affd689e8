"""Image dataset loading: MNIST-style IDX files plus a synthetic stand-in.

Images are served as flattened float vectors in [0, 1]; pixel bytes are
scaled by 1/255. The synthetic corpus renders ten distinct digit glyphs with
random shifts, shears, intensity jitter, and noise; it exists so the full
pipeline can run in environments where the MNIST files are not available,
and is clearly labeled as such wherever it is used.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IMAGE_MAGIC = 2051
LABEL_MAGIC = 2049

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


class DataFormatError(ValueError):
    """Malformed or inconsistent dataset files."""


@dataclass
class Dataset:
    images: np.ndarray  # (n, width*height) floats in [0, 1]
    labels: np.ndarray  # (n,) ints in {0..9}
    split: str

    def __post_init__(self):
        if self.images.shape[0] != self.labels.shape[0]:
            raise DataFormatError(
                f"{self.images.shape[0]} images but {self.labels.shape[0]} labels")
        if self.images.size and (self.images.min() < 0.0 or self.images.max() > 1.0):
            raise DataFormatError("pixel values must lie in [0, 1]")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() > 9):
            raise DataFormatError("labels must lie in {0..9}")

    @property
    def n(self) -> int:
        return int(self.images.shape[0])

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices)
        return Dataset(self.images[idx], self.labels[idx], self.split)


def _open_maybe_gzip(path):
    path = Path(path)
    f = open(path, "rb")
    head = f.read(2)
    f.seek(0)
    if head == b"\x1f\x8b":
        f.close()
        return gzip.open(path, "rb")
    return f


def _read_idx(path, expected_magic: int) -> np.ndarray:
    with _open_maybe_gzip(path) as f:
        raw = f.read(4)
        if len(raw) < 4:
            raise DataFormatError(f"{path}: truncated header")
        (magic,) = struct.unpack(">I", raw)
        if magic != expected_magic:
            raise DataFormatError(f"{path}: magic {magic}, expected {expected_magic}")
        ndim = magic & 0xFF
        dims = struct.unpack(f">{ndim}I", f.read(4 * ndim))
        data = f.read()
    count = int(np.prod(dims))
    if len(data) < count:
        raise DataFormatError(f"{path}: expected {count} bytes, found {len(data)}")
    return np.frombuffer(data[:count], dtype=np.uint8).reshape(dims)


def load_idx(images_path, labels_path, split: str = "train") -> Dataset:
    """Load an IDX image/label file pair (plain or gzipped).

    Pixels are scaled by 1/255 and rows are flattened row-major.
    """
    imgs = _read_idx(images_path, IMAGE_MAGIC)
    labels = _read_idx(labels_path, LABEL_MAGIC)
    if imgs.shape[0] != labels.shape[0]:
        raise DataFormatError(
            f"image count {imgs.shape[0]} != label count {labels.shape[0]}")
    flat = imgs.reshape(imgs.shape[0], -1).astype(np.float64) / 255.0
    return Dataset(flat, labels.astype(np.int64), split)


def write_idx_images(path, images_u8: np.ndarray) -> None:
    """Write (n, rows, cols) uint8 images in IDX format (gzipped iff *.gz)."""
    n, rows, cols = images_u8.shape
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "wb") as f:
        f.write(struct.pack(">IIII", IMAGE_MAGIC, n, rows, cols))
        f.write(images_u8.astype(np.uint8).tobytes())


def write_idx_labels(path, labels: np.ndarray) -> None:
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "wb") as f:
        f.write(struct.pack(">II", LABEL_MAGIC, len(labels)))
        f.write(np.asarray(labels, dtype=np.uint8).tobytes())


def find_mnist(data_dir) -> dict[str, tuple[Path, Path]] | None:
    """Locate the standard MNIST IDX files (optionally gzipped) in a directory."""
    data_dir = Path(data_dir)
    found = {}
    for split, (img_name, lbl_name) in MNIST_FILES.items():
        pair = []
        for name in (img_name, lbl_name):
            for candidate in (data_dir / name, data_dir / (name + ".gz")):
                if candidate.exists():
                    pair.append(candidate)
                    break
        if len(pair) != 2:
            return None
        found[split] = (pair[0], pair[1])
    return found


def load_mnist(data_dir) -> tuple[Dataset, Dataset]:
    paths = find_mnist(data_dir)
    if paths is None:
        raise DataFormatError(f"MNIST IDX files not found under {data_dir}")
    train = load_idx(*paths["train"], split="train")
    test = load_idx(*paths["test"], split="test")
    return train, test


def batches(ds: Dataset, batch_size: int, shuffle_seed: int) -> list[np.ndarray]:
    """Deterministic shuffled index batches covering every sample once."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    order = np.random.default_rng(shuffle_seed).permutation(ds.n)
    return [order[i:i + batch_size] for i in range(0, ds.n, batch_size)]


# --- synthetic stand-in corpus -------------------------------------------

_GLYPH_SEGMENTS = {
    0: [(.25, .15, .75, .15), (.75, .15, .75, .85), (.75, .85, .25, .85), (.25, .85, .25, .15)],
    1: [(.5, .1, .5, .9), (.3, .28, .5, .1), (.35, .9, .65, .9)],
    2: [(.2, .28, .5, .1), (.5, .1, .8, .28), (.8, .28, .2, .9), (.2, .9, .8, .9)],
    3: [(.2, .1, .7, .1), (.7, .1, .8, .3), (.8, .3, .5, .5), (.5, .5, .8, .7), (.8, .7, .7, .9), (.7, .9, .2, .9)],
    4: [(.65, .9, .65, .1), (.65, .1, .2, .62), (.2, .62, .85, .62)],
    5: [(.8, .1, .2, .1), (.2, .1, .2, .5), (.2, .5, .7, .5), (.7, .5, .8, .7), (.8, .7, .7, .9), (.7, .9, .2, .9)],
    6: [(.7, .1, .35, .42), (.35, .42, .2, .7), (.2, .7, .45, .9), (.45, .9, .75, .72), (.75, .72, .6, .52), (.6, .52, .28, .58)],
    7: [(.2, .1, .8, .1), (.8, .1, .4, .9)],
    8: [(.32, .1, .68, .1), (.68, .1, .68, .48), (.68, .48, .32, .48), (.32, .48, .32, .1),
        (.26, .48, .74, .48), (.74, .48, .74, .9), (.74, .9, .26, .9), (.26, .9, .26, .48)],
    9: [(.3, .1, .7, .1), (.7, .1, .7, .46), (.7, .46, .3, .46), (.3, .46, .3, .1), (.7, .46, .58, .9)],
}

_STENCIL_SIZE = 18
_CANVAS = 28


def _rasterize(segments, size: int = _STENCIL_SIZE, sigma: float = 0.85) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    canvas = np.zeros((size, size))
    scale = size - 1
    for x0, y0, x1, y1 in segments:
        n_pts = max(2, int(3 * size * max(abs(x1 - x0), abs(y1 - y0))))
        for t in np.linspace(0.0, 1.0, n_pts):
            px = (x0 + t * (x1 - x0)) * scale
            py = (y0 + t * (y1 - y0)) * scale
            canvas = np.maximum(canvas, np.exp(-((xx - px) ** 2 + (yy - py) ** 2) / (2 * sigma ** 2)))
    return canvas


_STENCILS: list[np.ndarray] | None = None


def _stencils() -> list[np.ndarray]:
    global _STENCILS
    if _STENCILS is None:
        _STENCILS = [_rasterize(_GLYPH_SEGMENTS[d]) for d in range(10)]
    return _STENCILS


def synthetic_dataset(n: int, seed: int, split: str = "train",
                      noise: float = 0.10, max_shift: int = 3) -> Dataset:
    """Deterministic 28x28 ten-class glyph corpus.

    A labeled stand-in with MNIST's shape: each sample is a digit glyph with
    random placement, shear, intensity, and additive noise. Not MNIST; meant
    for tests and for running the pipeline where the IDX files are absent.
    """
    rng = np.random.default_rng(seed)
    stencils = _stencils()
    images = np.zeros((n, _CANVAS, _CANVAS))
    labels = rng.integers(0, 10, size=n)
    margin = _CANVAS - _STENCIL_SIZE
    for i in range(n):
        glyph = stencils[labels[i]] * rng.uniform(0.65, 1.0)
        if rng.random() < 0.5:
            shear = rng.integers(-2, 3)
            if shear:
                glyph = np.array([np.roll(row, shear * r // _STENCIL_SIZE)
                                  for r, row in enumerate(glyph)])
        center = margin // 2
        lo = max(0, center - max_shift)
        hi = min(margin, center + max_shift)
        dy = int(rng.integers(lo, hi + 1))
        dx = int(rng.integers(lo, hi + 1))
        images[i, dy:dy + _STENCIL_SIZE, dx:dx + _STENCIL_SIZE] = glyph
        images[i] += rng.normal(0.0, noise, size=(_CANVAS, _CANVAS))
    images = np.clip(images, 0.0, 1.0)
    return Dataset(images.reshape(n, -1), labels.astype(np.int64), split)


def write_synthetic_idx(data_dir, train_n: int, test_n: int, seed: int) -> None:
    """Materialize the synthetic corpus as standard-named IDX files."""
    data_dir = Path(data_dir)
    data_dir.mkdir(parents=True, exist_ok=True)
    for split, count, sub_seed in (("train", train_n, seed), ("test", test_n, seed + 1)):
        ds = synthetic_dataset(count, sub_seed, split)
        imgs = np.round(ds.images * 255).astype(np.uint8).reshape(count, _CANVAS, _CANVAS)
        img_name, lbl_name = MNIST_FILES[split]
        write_idx_images(data_dir / img_name, imgs)
        write_idx_labels(data_dir / lbl_name, ds.labels)
