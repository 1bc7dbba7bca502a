"""Dataset ingestion: IDX container parsing, deterministic subsetting,
synthetic cluster generators, and the without-replacement batch sampler."""

from __future__ import annotations

import gzip
import os
import struct

import numpy as np

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801

# Standard file names, with and without .gz.
_MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


class Dataset:
    """Feature matrix plus integer labels in [0, num_classes)."""

    def __init__(self, features, labels, num_classes):
        features = np.asarray(features, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.int64)
        if features.ndim != 2 or features.shape[0] < 1:
            raise ValueError("features must be a nonempty n x d matrix")
        if labels.shape != (features.shape[0],):
            raise ValueError("labels length must match feature rows")
        if num_classes < 1:
            raise ValueError("num_classes must be >= 1")
        if labels.min() < 0 or labels.max() >= num_classes:
            raise ValueError("labels must lie in [0, num_classes)")
        if not np.all(np.isfinite(features)):
            raise ValueError("features contain non-finite entries")
        self.features = features
        self.labels = labels
        self.num_classes = int(num_classes)

    def __len__(self):
        return self.features.shape[0]

    @property
    def dim(self):
        return self.features.shape[1]


def parse_idx(data: bytes) -> np.ndarray:
    """Decode an IDX byte stream (gzip accepted transparently).

    Big-endian header: magic, then one dimension per header slot
    (0x00000801 = 1-D labels, 0x00000803 = 3-D images), then the uint8
    payload, whose length must equal the product of the dimensions.
    """
    if data[:2] == b"\x1f\x8b":
        data = gzip.decompress(data)
    if len(data) < 4:
        raise ValueError("IDX stream shorter than its magic number")
    (magic,) = struct.unpack(">I", data[:4])
    if magic == LABELS_MAGIC:
        ndim = 1
    elif magic == IMAGES_MAGIC:
        ndim = 3
    else:
        raise ValueError(f"bad IDX magic 0x{magic:08x}")
    header_len = 4 + 4 * ndim
    if len(data) < header_len:
        raise ValueError("IDX header truncated")
    dims = struct.unpack(f">{ndim}I", data[4:header_len])
    count = 1
    for d in dims:
        count *= d
    if count > 2 ** 40:
        raise ValueError(f"IDX dims {dims} overflow any sane payload")
    payload = data[header_len:]
    if len(payload) < count:
        raise ValueError(
            f"IDX payload truncated: header claims {count} bytes, got {len(payload)}")
    if len(payload) > count:
        raise ValueError(
            f"IDX payload has {len(payload) - count} trailing bytes")
    return np.frombuffer(payload, dtype=np.uint8).reshape(dims)


def serialize_idx(arr) -> bytes:
    """Encode a uint8 tensor (1-D labels or 3-D images) as IDX bytes."""
    arr = np.ascontiguousarray(arr, dtype=np.uint8)
    if arr.ndim == 1:
        magic = LABELS_MAGIC
    elif arr.ndim == 3:
        magic = IMAGES_MAGIC
    else:
        raise ValueError("only 1-D label or 3-D image tensors are supported")
    header = struct.pack(">I", magic) + struct.pack(
        f">{arr.ndim}I", *arr.shape)
    return header + arr.tobytes()


class BatchSampler:
    """Without-replacement mini-batch index stream.

    Each epoch is a fresh seeded permutation of [0, n); consecutive
    next_batch() calls walk it in batch_size chunks (the last chunk of an
    epoch may be short). Deterministic for a given seed.
    """

    def __init__(self, n, batch_size, seed):
        if batch_size < 1 or batch_size > n:
            raise ValueError(f"batch_size must be in [1, {n}], got {batch_size}")
        self.n = int(n)
        self.batch_size = int(batch_size)
        self.rng_seed = seed
        self._rng = np.random.default_rng(seed)
        self.order = self._rng.permutation(self.n)
        self._pos = 0
        self.epoch = 0

    def next_batch(self) -> np.ndarray:
        if self._pos >= self.n:
            self.order = self._rng.permutation(self.n)
            self._pos = 0
            self.epoch += 1
        batch = self.order[self._pos:self._pos + self.batch_size]
        self._pos += batch.size
        return batch


def mnist_subset(dataset: Dataset, n: int, seed) -> Dataset:
    """Deterministic stratified subsample of n rows.

    Per-class counts follow largest-remainder apportionment of the source
    class proportions (balance within +-1); selected indices are returned
    in their original order, so n == len(dataset) is the identity.
    """
    total = len(dataset)
    if n > total:
        raise ValueError(f"subset size {n} exceeds dataset size {total}")
    if n < dataset.num_classes:
        raise ValueError(
            f"subset size {n} below class count {dataset.num_classes}")

    counts = np.bincount(dataset.labels, minlength=dataset.num_classes)
    quotas = n * counts / total
    take = np.floor(quotas).astype(int)
    remainder = n - take.sum()
    if remainder > 0:
        # Break fraction ties toward lower class ids for determinism.
        fracs = quotas - take
        order = np.lexsort((np.arange(len(fracs)), -fracs))
        for c in order[:remainder]:
            take[c] += 1
    take = np.minimum(take, counts)

    rng = np.random.default_rng(seed)
    chosen = []
    for c in range(dataset.num_classes):
        idx = np.flatnonzero(dataset.labels == c)
        if take[c] == idx.size:
            chosen.append(idx)
        else:
            chosen.append(rng.choice(idx, size=take[c], replace=False))
    keep = np.sort(np.concatenate(chosen))
    return Dataset(dataset.features[keep], dataset.labels[keep],
                   dataset.num_classes)


def synthetic_blobs(n, dim, num_classes, seed, separation=4.0) -> Dataset:
    """Gaussian clusters with unit covariance, labels by cluster.

    For two classes the cluster means sit at +-separation/2 along a random
    unit direction, so the mean gap is exactly `separation`. Row order is
    a seeded permutation. Deterministic for a given seed.
    """
    if n < num_classes:
        raise ValueError("need at least one sample per class")
    rng = np.random.default_rng(seed)
    if num_classes == 1:
        means = np.zeros((1, dim))
    elif num_classes == 2:
        u = rng.normal(size=dim)
        u /= np.linalg.norm(u)
        means = np.vstack([-u, u]) * (separation / 2.0)
    else:
        dirs = rng.normal(size=(num_classes, dim))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        means = dirs * (separation / 2.0)

    counts = np.full(num_classes, n // num_classes)
    counts[: n % num_classes] += 1
    features = np.vstack([
        means[c] + rng.normal(size=(counts[c], dim))
        for c in range(num_classes)
    ])
    labels = np.repeat(np.arange(num_classes), counts)
    perm = rng.permutation(n)
    return Dataset(features[perm], labels[perm], num_classes)


def _find_file(directory, stem):
    for name in (stem, stem + ".gz", stem.replace("-idx", ".idx"),
                 stem.replace("-idx", ".idx") + ".gz"):
        path = os.path.join(directory, name)
        if os.path.isfile(path):
            return path
    return None


def find_mnist_files(mnist_dir=None, kind="train"):
    """Locate the IDX pair under mnist_dir (or $MNIST_DIR); None if absent."""
    directory = mnist_dir or os.environ.get("MNIST_DIR")
    if not directory or not os.path.isdir(directory):
        return None
    image_stem, label_stem = _MNIST_FILES[kind]
    images = _find_file(directory, image_stem)
    labels = _find_file(directory, label_stem)
    if images is None or labels is None:
        return None
    return {"images": images, "labels": labels}


def load_mnist(mnist_dir=None, kind="train"):
    """Load MNIST as a Dataset with pixels scaled to [0,1] by /255.

    Returns None when the files cannot be found, so callers can skip
    real-data tiers instead of failing.
    """
    paths = find_mnist_files(mnist_dir, kind)
    if paths is None:
        return None
    with open(paths["images"], "rb") as f:
        images = parse_idx(f.read())
    with open(paths["labels"], "rb") as f:
        labels = parse_idx(f.read())
    if images.shape[0] != labels.shape[0]:
        raise ValueError("image/label counts disagree")
    features = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return Dataset(features, labels.astype(np.int64), 10)
