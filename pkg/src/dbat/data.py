"""Datasets: Gaussian blobs, CSV ingestion and doubled-label bookkeeping."""

import csv
import warnings
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        x = np.array(self.features, dtype=np.float64, ndmin=2)
        y = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if x.shape[0] != y.shape[0]:
            raise ValueError(f"{x.shape[0]} feature rows but {y.shape[0]} labels")
        if y.size and (y.min() < 0 or y.max() >= self.num_classes):
            raise ValueError(f"labels must lie in [0, {self.num_classes})")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)

    def __len__(self):
        return self.labels.shape[0]

    @property
    def dim(self):
        return self.features.shape[1]

    def subset(self, idx):
        return LabeledDataset(self.features[idx], self.labels[idx], self.num_classes)

    def missing_classes(self):
        return sorted(set(range(self.num_classes)) - set(self.labels.tolist()))


def make_blobs(centers, std, n_per_blob, seed):
    """Isotropic Gaussian clusters, ``n_per_blob`` points each, label = center index."""
    centers = np.array(centers, dtype=np.float64, ndmin=2)
    if centers.shape[0] < 2:
        raise ValueError("need at least two centers")
    if not std > 0:
        raise ValueError(f"std must be positive, got {std}")
    if n_per_blob < 1:
        raise ValueError("n_per_blob must be >= 1")
    rng = np.random.default_rng(seed)
    k, d = centers.shape
    noise = rng.standard_normal((k, n_per_blob, d)) * std
    x = (centers[:, None, :] + noise).reshape(k * n_per_blob, d)
    y = np.repeat(np.arange(k), n_per_blob)
    return LabeledDataset(x, y, k)


def load_csv(path, label_column="label"):
    """Read a numeric CSV with a header row; every non-label column is a feature."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if label_column not in header:
        raise ValueError(f"{path}: no label column {label_column!r} in header {header}")
    li = header.index(label_column)
    feats, labels = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ValueError(f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}")
        try:
            values = [float(c) for c in row]
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: non-numeric cell ({exc})") from None
        lab = values.pop(li)
        if lab < 0 or lab != int(lab):
            raise ValueError(f"{path}:{lineno}: label {row[li]!r} is not a non-negative integer")
        labels.append(int(lab))
        feats.append(values)
    if not labels:
        raise ValueError(f"{path}: no data rows")
    ds = LabeledDataset(np.array(feats), np.array(labels), max(labels) + 1)
    empty = ds.missing_classes()
    if empty:
        warnings.warn(f"{path}: classes {empty} have no examples", stacklevel=2)
    return ds


def adv_label(y, num_classes):
    """Adversarial counterpart of natural class ``y``: y + C. Works elementwise on arrays."""
    y = np.asarray(y)
    if np.any(y < 0) or np.any(y >= num_classes):
        raise ValueError(f"natural label must lie in [0, {num_classes})")
    out = y + num_classes
    return int(out) if out.ndim == 0 else out


def fold_back(label, num_classes):
    """Map a doubled-space label to its natural class (c >= C -> c - C)."""
    label = np.asarray(label)
    out = np.where(label >= num_classes, label - num_classes, label)
    return int(out) if out.ndim == 0 else out
