"""Rebuild data/mnist/ from the 10,000-digit MNIST sample shipped in the npm `mnist` package.

Usage: npm pack mnist@1.1.0 && tar xzf mnist-1.1.0.tgz
       python3 scripts/build_mnist_subset.py package/src/digits data/mnist

Pixels in the package are byte/255 rounded to three decimals, so round(v * 255)
recovers the original byte exactly. Samples are shuffled with a fixed seed and
split 8000 train / 2000 test, then written as gzipped IDX files.
"""
import gzip
import json
import struct
import sys

import numpy as np


def write_idx(path, magic, array):
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(struct.pack(">I", magic))
        for dim in array.shape:
            f.write(struct.pack(">I", dim))
        f.write(array.astype(np.uint8).tobytes())


def main(src, dst):
    images, labels = [], []
    for digit in range(10):
        with open(f"{src}/{digit}.json") as f:
            raw = np.array(json.load(f)["data"], dtype=np.float64).reshape(-1, 784)
        pixels = np.rint(raw * 255.0)
        assert np.all(np.abs(pixels - raw * 255.0) < 0.2)
        images.append(pixels.astype(np.uint8))
        labels += [digit] * len(raw)
    images = np.vstack(images)
    labels = np.array(labels, dtype=np.uint8)
    order = np.random.default_rng(20210501).permutation(len(labels))
    images, labels = images[order], labels[order]
    n_train = 8000
    write_idx(f"{dst}/train-images-idx3-ubyte.gz", 0x803, images[:n_train].reshape(-1, 28, 28))
    write_idx(f"{dst}/train-labels-idx1-ubyte.gz", 0x801, labels[:n_train])
    write_idx(f"{dst}/t10k-images-idx3-ubyte.gz", 0x803, images[n_train:].reshape(-1, 28, 28))
    write_idx(f"{dst}/t10k-labels-idx1-ubyte.gz", 0x801, labels[n_train:])


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
