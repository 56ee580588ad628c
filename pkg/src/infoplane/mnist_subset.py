"""Build a small MNIST directory in IDX format from the sample bundled with mlxtend.

mlxtend ships 5000 MNIST digits as CSV, sorted by class. They are shuffled
with a fixed seed and split into disjoint ``train`` (3976 images) and
``t10k`` (1024 images) IDX files so the regular loader and the desk-scale
preset can run without network access.
"""

import argparse
from pathlib import Path

import numpy as np

from .data import write_idx_images, write_idx_labels

N_TEST = 1024
SHUFFLE_SEED = 20200101


def load_bundled_sample():
    try:
        from mlxtend.data import mnist_data
    except ImportError as exc:
        raise ImportError("mlxtend is required for the bundled MNIST sample: pip install mlxtend") from exc
    X, y = mnist_data()
    return X.astype(np.uint8).reshape(-1, 28, 28), y.astype(np.uint8)


def build(out_dir, n_test=N_TEST):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    images, labels = load_bundled_sample()
    order = np.random.default_rng(SHUFFLE_SEED).permutation(images.shape[0])
    images, labels = images[order], labels[order]
    split = images.shape[0] - n_test
    write_idx_images(out_dir / "train-images-idx3-ubyte.gz", images[:split])
    write_idx_labels(out_dir / "train-labels-idx1-ubyte.gz", labels[:split])
    write_idx_images(out_dir / "t10k-images-idx3-ubyte.gz", images[split:])
    write_idx_labels(out_dir / "t10k-labels-idx1-ubyte.gz", labels[split:])
    return out_dir


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("out_dir", help="directory to write the IDX files into")
    args = parser.parse_args(argv)
    print(build(args.out_dir))


if __name__ == "__main__":
    main()
