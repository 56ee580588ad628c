"""Datasets: MNIST IDX files, correlated Gaussian pairs, seeded batching."""

import gzip
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .numkit import as_data_matrix

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
GZIP_MAGIC = b"\x1f\x8b"

MNIST_FILES = {
    "train": "train-images-idx3-ubyte",
    "test": "t10k-images-idx3-ubyte",
}


class IDXFormatError(ValueError):
    pass


@dataclass
class Dataset:
    split: str
    X: np.ndarray

    @property
    def n_samples(self):
        return self.X.shape[0]

    def subset(self, n, seed=None):
        """First ``n`` rows, or a seeded random subset of ``n`` rows."""
        if n > self.n_samples:
            raise ValueError(f"requested {n} samples from a split of {self.n_samples}")
        if seed is None:
            return Dataset(self.split, self.X[:n])
        idx = np.sort(np.random.default_rng(seed).permutation(self.n_samples)[:n])
        return Dataset(self.split, self.X[idx])


def _read_maybe_gzip(path):
    raw = Path(path).read_bytes()
    if raw[:2] == GZIP_MAGIC:
        raw = gzip.decompress(raw)
    return raw


def load_mnist_idx(images_path, split=None, expect_shape=(28, 28)):
    """Read an IDX3 image file (raw or gzipped) into a Dataset scaled to [0, 1].

    The header is four big-endian uint32 values: magic 0x00000803, image
    count, rows, cols; unsigned pixel bytes follow in row-major order.
    """
    raw = _read_maybe_gzip(images_path)
    if len(raw) < 16:
        raise IDXFormatError(f"{images_path}: truncated header ({len(raw)} bytes)")
    magic, count, rows, cols = struct.unpack(">IIII", raw[:16])
    if magic != IDX_IMAGES_MAGIC:
        raise IDXFormatError(
            f"{images_path}: bad magic 0x{magic:08x}, expected 0x{IDX_IMAGES_MAGIC:08x}"
        )
    if expect_shape is not None and (rows, cols) != tuple(expect_shape):
        raise IDXFormatError(
            f"{images_path}: images are {rows}x{cols}, expected "
            f"{expect_shape[0]}x{expect_shape[1]}"
        )
    need = count * rows * cols
    body = raw[16:]
    if len(body) < need:
        raise IDXFormatError(
            f"{images_path}: truncated pixel data ({len(body)} of {need} bytes)"
        )
    pixels = np.frombuffer(body, dtype=np.uint8, count=need)
    X = pixels.reshape(count, rows * cols).astype(np.float64) / 255.0
    if split is None:
        split = "test" if "t10k" in Path(images_path).name else "train"
    return Dataset(split, X)


def load_mnist_labels(labels_path):
    raw = _read_maybe_gzip(labels_path)
    if len(raw) < 8:
        raise IDXFormatError(f"{labels_path}: truncated header")
    magic, count = struct.unpack(">II", raw[:8])
    if magic != IDX_LABELS_MAGIC:
        raise IDXFormatError(f"{labels_path}: bad magic 0x{magic:08x}")
    if len(raw) - 8 < count:
        raise IDXFormatError(f"{labels_path}: truncated label data")
    return np.frombuffer(raw[8:], dtype=np.uint8, count=count).copy()


def write_idx_images(path, images, compress=None):
    """Write uint8 images of shape (count, rows, cols) as IDX3.

    Compresses with gzip when ``compress`` is true or the name ends in ``.gz``.
    """
    images = np.asarray(images)
    if images.dtype != np.uint8:
        raise ValueError("IDX images must be uint8")
    if images.ndim != 3:
        raise ValueError(f"expected (count, rows, cols), got {images.shape}")
    payload = struct.pack(">IIII", IDX_IMAGES_MAGIC, *images.shape) + images.tobytes()
    if compress is None:
        compress = str(path).endswith(".gz")
    if compress:
        payload = gzip.compress(payload, mtime=0)
    Path(path).write_bytes(payload)


def write_idx_labels(path, labels, compress=None):
    labels = np.asarray(labels, dtype=np.uint8)
    payload = struct.pack(">II", IDX_LABELS_MAGIC, labels.shape[0]) + labels.tobytes()
    if compress is None:
        compress = str(path).endswith(".gz")
    if compress:
        payload = gzip.compress(payload, mtime=0)
    Path(path).write_bytes(payload)


def find_mnist_split(data_dir, split):
    """Locate the IDX images file for ``split`` under ``data_dir`` (raw or ``.gz``)."""
    data_dir = Path(data_dir)
    base = MNIST_FILES[split]
    for name in (base, base + ".gz", base.replace("-idx3", ".idx3"), base.replace("-idx3", ".idx3") + ".gz"):
        if (data_dir / name).exists():
            return data_dir / name
    raise FileNotFoundError(f"no MNIST {split} images ({base}[.gz]) in {data_dir}")


def resolve_data_dir(path=None):
    if path:
        return Path(path)
    env = os.environ.get("INFOPLANE_DATA_DIR")
    if env:
        return Path(env)
    raise FileNotFoundError("no dataset path given and INFOPLANE_DATA_DIR is unset")


def load_matrix(path):
    """Load a sample matrix from CSV/whitespace text, ``.npy``, or an IDX3 file."""
    path = Path(path)
    raw = _read_maybe_gzip(path)
    if len(raw) >= 4 and struct.unpack(">I", raw[:4])[0] == IDX_IMAGES_MAGIC:
        return load_mnist_idx(path, expect_shape=None).X
    if path.suffix == ".npy":
        return as_data_matrix(np.load(path), str(path))
    text = raw.decode("utf-8")
    delim = "," if "," in text.splitlines()[0] else None
    try:
        X = np.loadtxt(text.splitlines(), delimiter=delim, ndmin=2)
    except ValueError as exc:
        raise ValueError(f"cannot parse {path}: {exc}") from exc
    return as_data_matrix(X, str(path))


# -- correlated Gaussians ---------------------------------------------------

@dataclass(frozen=True)
class GaussianPairSpec:
    d: int
    rho: float
    n: int
    seed: object = 0

    def __post_init__(self):
        if not abs(self.rho) < 1:
            raise ValueError(f"|rho| must be < 1, got {self.rho}")
        if self.d < 1 or self.n < 1:
            raise ValueError("d and n must be positive")


def sample_correlated_gaussians(spec):
    """Draw ``X ~ N(0, I)`` and ``Y = rho X + sqrt(1 - rho^2) Z`` dimension-wise."""
    rng = np.random.default_rng(spec.seed)
    X = rng.standard_normal((spec.n, spec.d))
    Z = rng.standard_normal((spec.n, spec.d))
    Y = spec.rho * X + np.sqrt(1.0 - spec.rho**2) * Z
    return X, Y


def analytic_gaussian_mi(d, rho):
    """Shannon MI in bits between the correlated Gaussian pair: ``-(d/2) log2(1 - rho^2)``."""
    if not abs(rho) < 1:
        raise ValueError(f"|rho| must be < 1, got {rho}")
    return -0.5 * d * np.log2(1.0 - rho * rho)


# -- batching ---------------------------------------------------------------

def batch_iterator(X, batch_size, epoch_seed):
    """Yield shuffled full batches of rows; the trailing partial batch is dropped."""
    X = X.X if isinstance(X, Dataset) else X
    n = X.shape[0]
    if not 1 <= batch_size <= n:
        raise ValueError(f"batch_size must be in [1, {n}], got {batch_size}")
    perm = np.random.default_rng(epoch_seed).permutation(n)
    for start in range(0, n - batch_size + 1, batch_size):
        yield X[perm[start:start + batch_size]]
