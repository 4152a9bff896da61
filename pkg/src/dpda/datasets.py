"""Parsers and batch samplers for the experiment data sources.

Two file formats are supported bit-exactly: LIBSVM sparse text
(``<label> <idx>:<val> ...`` with 1-based strictly increasing indices) and
IDX binary (big-endian, magic 0x00000803 for images / 0x00000801 for
labels).  Files are user-supplied; nothing here touches the network.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .losses import LOGISTIC, LossEvent

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class DataError(ValueError):
    """Malformed or inconsistent input data."""


@dataclass(frozen=True)
class SparseSample:
    """One LIBSVM line: raw label plus sorted 1-based sparse features."""

    label: float
    indices: tuple
    values: tuple

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if any(i < 1 for i in idx):
            raise DataError("feature indices are 1-based")
        if any(a >= b for a, b in zip(idx, idx[1:])):
            raise DataError("feature indices must be strictly increasing")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))


@dataclass(frozen=True)
class DenseDataset:
    """Row-major feature matrix with +-1 labels."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=float)
        labels = np.asarray(self.labels, dtype=float)
        if feats.ndim != 2 or labels.shape != (feats.shape[0],):
            raise DataError("features must be (samples, d) with one label per row")
        if labels.size and not np.all(np.abs(labels) == 1.0):
            raise DataError("labels must be +-1")
        feats.flags.writeable = False
        labels.flags.writeable = False
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)

    @property
    def dim(self):
        return self.features.shape[1]

    @property
    def count(self):
        return self.features.shape[0]


def parse_libsvm_sparse(stream):
    """Read LIBSVM lines into SparseSample records; empty lines are skipped."""
    samples = []
    for lineno, line in enumerate(stream, start=1):
        line = line.strip()
        if not line:
            continue
        tokens = line.split()
        try:
            label = float(tokens[0])
        except ValueError as exc:
            raise DataError(f"line {lineno}: bad label {tokens[0]!r}") from exc
        indices, values = [], []
        for token in tokens[1:]:
            idx_s, sep, val_s = token.partition(":")
            if not sep:
                raise DataError(f"line {lineno}: bad token {token!r}")
            try:
                idx, val = int(idx_s), float(val_s)
            except ValueError as exc:
                raise DataError(f"line {lineno}: bad token {token!r}") from exc
            if idx < 1:
                raise DataError(f"line {lineno}: index {idx} is not 1-based")
            if indices and idx <= indices[-1]:
                raise DataError(f"line {lineno}: non-increasing index {idx}")
            indices.append(idx)
            values.append(val)
        samples.append(SparseSample(label, tuple(indices), tuple(values)))
    return samples


def serialize_libsvm(samples, stream):
    """Write SparseSample records back to LIBSVM text."""
    for s in samples:
        parts = [format(s.label, "g")]
        parts.extend(f"{i}:{format(v, 'g')}" for i, v in zip(s.indices, s.values))
        stream.write(" ".join(parts) + "\n")


def _map_label(raw):
    # mushroom convention: class 1 (poisonous) -> +1, class 2 (edible) -> -1
    if raw in (1.0, +1.0):
        return 1.0
    if raw in (2.0, -1.0):
        return -1.0
    raise DataError(f"cannot map label {raw} to +-1")


def densify(samples, d):
    """Expand sparse samples to a dense dataset of the expected dimension."""
    feats = np.zeros((len(samples), d))
    labels = np.empty(len(samples))
    for r, s in enumerate(samples):
        for idx, val in zip(s.indices, s.values):
            if idx > d:
                raise DataError(f"sample {r}: index {idx} exceeds dimension {d}")
            feats[r, idx - 1] = val
        labels[r] = _map_label(s.label)
    return DenseDataset(feats, labels)


def parse_libsvm(stream, d):
    """Parse a LIBSVM text stream and densify to dimension d."""
    return densify(parse_libsvm_sparse(stream), d)


def _read_exact(stream, nbytes, what):
    buf = stream.read(nbytes)
    if len(buf) != nbytes:
        raise DataError(f"truncated IDX payload while reading {what}")
    return buf


def read_idx(images_stream, labels_stream, digits=(6, 8)):
    """Read an IDX image/label pair and keep two digits as a +-1 problem.

    The first digit maps to -1, the second to +1; pixels are scaled to
    [0, 1].  Bad magic numbers, dimension mismatches, and truncated
    payloads are rejected.
    """
    magic, count, rows, cols = struct.unpack(">IIII", _read_exact(images_stream, 16,
                                                                  "image header"))
    if magic != IDX_IMAGES_MAGIC:
        raise DataError(f"bad image magic 0x{magic:08x}")
    lmagic, lcount = struct.unpack(">II", _read_exact(labels_stream, 8, "label header"))
    if lmagic != IDX_LABELS_MAGIC:
        raise DataError(f"bad label magic 0x{lmagic:08x}")
    if lcount != count:
        raise DataError(f"image/label count mismatch: {count} vs {lcount}")
    pixels = np.frombuffer(_read_exact(images_stream, count * rows * cols, "pixels"),
                           dtype=np.uint8)
    raw_labels = np.frombuffer(_read_exact(labels_stream, count, "labels"),
                               dtype=np.uint8)
    feats = pixels.reshape(count, rows * cols).astype(float) / 255.0
    neg, pos = digits
    keep = (raw_labels == neg) | (raw_labels == pos)
    labels = np.where(raw_labels[keep] == pos, 1.0, -1.0)
    return DenseDataset(feats[keep], labels)


@dataclass(frozen=True)
class Split:
    """Disjoint train/test row indices from one seeded shuffle."""

    train: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        train = np.asarray(self.train, dtype=np.int64)
        test = np.asarray(self.test, dtype=np.int64)
        train.flags.writeable = False
        test.flags.writeable = False
        object.__setattr__(self, "train", train)
        object.__setattr__(self, "test", test)


def split_dataset(dataset, n_train, n_test, rng):
    """Seeded-shuffle split; remaining rows beyond train+test stay unused."""
    if n_train + n_test > dataset.count:
        raise DataError(f"split {n_train}+{n_test} exceeds {dataset.count} samples")
    order = rng.permutation(dataset.count)
    return Split(train=np.sort(order[:n_train]),
                 test=np.sort(order[n_train:n_train + n_test]))


def batch_stream(dataset, T, batch_size, split, rng):
    """Per-round logistic events: batch_size training rows sampled uniformly.

    Rows are drawn without replacement within a round and independently
    across rounds.
    """
    if batch_size > split.train.size:
        raise DataError(f"batch size {batch_size} exceeds train split {split.train.size}")
    events = []
    for _ in range(T):
        rows = split.train[rng.choice(split.train.size, size=batch_size, replace=False)]
        events.append(LossEvent(LOGISTIC, dataset.features[rows], dataset.labels[rows]))
    return events


def accuracy(x, dataset, rows=None):
    """Fraction of rows with sign(x . a) == b; a zero margin counts as wrong."""
    feats = dataset.features if rows is None else dataset.features[rows]
    labels = dataset.labels if rows is None else dataset.labels[rows]
    if labels.size == 0:
        return 0.0
    preds = np.sign(feats @ np.asarray(x, dtype=float))
    return float(np.mean(preds == labels))
