#!/usr/bin/env python3
"""Build an MNIST-format digit dataset from sklearn's bundled 8x8 digits.

Produces gzipped IDX files (train-images-idx3-ubyte.gz etc.) with 28x28
images, for environments where the original MNIST download is unavailable.
Base images are split into disjoint train/test pools before augmentation
(random shift/rotation/noise), so the two splits share no source digits.

Usage: make_digits_idx.py [OUT_DIR] [N_TRAIN] [N_TEST] [SEED]
"""

import gzip
import struct
import sys

import numpy as np
from scipy import ndimage
from sklearn.datasets import load_digits


def upsample(img8):
    img = ndimage.zoom(img8 / 16.0, 28 / 8, order=3)
    img = np.clip(img, 0.0, 1.0)
    # contrast stretch: thin out the interpolation halo so strokes stay crisp
    img = np.clip((img - 0.15) / 0.6, 0.0, 1.0) ** 1.5
    return img


def augment(img, rng):
    # keep augmentation mild: heavy rotation/translation forces generic
    # translation-invariant features and blurs the class structure
    shift = rng.uniform(-1.0, 1.0, size=2)
    img = ndimage.shift(img, shift, order=1, mode="constant")
    img = img + rng.normal(0, 0.01, img.shape)
    return np.clip(img, 0.0, 1.0)


def build_split(pool_imgs, pool_labels, n_out, rng):
    images = np.empty((n_out, 28, 28), dtype=np.uint8)
    labels = np.empty(n_out, dtype=np.uint8)
    idx = rng.integers(0, len(pool_imgs), size=n_out)
    for i, j in enumerate(idx):
        img = augment(pool_imgs[j], rng)
        images[i] = (img * 255).astype(np.uint8)
        labels[i] = pool_labels[j]
    return images, labels


def write_idx_images(path, images):
    with gzip.open(path, "wb") as f:
        f.write(struct.pack(">IIII", 2051, len(images), 28, 28))
        f.write(images.tobytes())


def write_idx_labels(path, labels):
    with gzip.open(path, "wb") as f:
        f.write(struct.pack(">II", 2049, len(labels)))
        f.write(labels.tobytes())


def main():
    out_dir = sys.argv[1] if len(sys.argv) > 1 else "data"
    n_train = int(sys.argv[2]) if len(sys.argv) > 2 else 20000
    n_test = int(sys.argv[3]) if len(sys.argv) > 3 else 4000
    seed = int(sys.argv[4]) if len(sys.argv) > 4 else 0

    rng = np.random.default_rng(seed)
    digits = load_digits()
    base = np.stack([upsample(img) for img in digits.images])
    labels = digits.target

    order = rng.permutation(len(base))
    n_test_pool = len(base) // 6
    test_pool, train_pool = order[:n_test_pool], order[n_test_pool:]

    import os

    os.makedirs(out_dir, exist_ok=True)
    tr_imgs, tr_labels = build_split(base[train_pool], labels[train_pool], n_train, rng)
    te_imgs, te_labels = build_split(base[test_pool], labels[test_pool], n_test, rng)
    write_idx_images(os.path.join(out_dir, "train-images-idx3-ubyte.gz"), tr_imgs)
    write_idx_labels(os.path.join(out_dir, "train-labels-idx1-ubyte.gz"), tr_labels)
    write_idx_images(os.path.join(out_dir, "t10k-images-idx3-ubyte.gz"), te_imgs)
    write_idx_labels(os.path.join(out_dir, "t10k-labels-idx1-ubyte.gz"), te_labels)
    print(f"wrote {n_train} train / {n_test} test images to {out_dir}")


if __name__ == "__main__":
    main()
