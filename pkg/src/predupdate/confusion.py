"""Confusion-matrix estimation from labelled source predictions."""

from __future__ import annotations

import csv
import os
from pathlib import Path

import numpy as np

from .core import ConfusionMatrix
from .errors import DataError

CLAMP = 1e-6
LOAD_ATOL = 1e-6


def _counts(preds, truths, k: int) -> np.ndarray:
    p = np.asarray(preds, dtype=np.int64).reshape(-1)
    t = np.asarray(truths, dtype=np.int64).reshape(-1)
    if p.size == 0:
        raise DataError("cannot estimate a confusion matrix from no samples")
    if p.shape != t.shape:
        raise DataError(f"{p.size} predictions but {t.size} truths")
    if k < 2:
        raise DataError("class count must be >= 2")
    for name, a in (("prediction", p), ("truth", t)):
        if a.min() < 0 or a.max() >= k:
            raise DataError(f"{name} label out of range [0, {k})")
    counts = np.zeros((k, k), dtype=np.int64)
    np.add.at(counts, (p, t), 1)
    return counts


def estimate_diagonal(preds, truths, k: int) -> ConfusionMatrix:
    """Per-class accuracies on the diagonal, errors spread evenly off it.

    Diagonals are clamped to ``[CLAMP, 1 - CLAMP]`` so that no likelihood is
    exactly zero.  A class absent from ``truths`` gets a uniform column.
    """
    counts = _counts(preds, truths, k)
    support = counts.sum(axis=0)
    correct = np.diag(counts)
    diag = np.full(k, 1.0 / k)
    seen = support > 0
    diag[seen] = correct[seen] / support[seen]
    diag = np.clip(diag, CLAMP, 1.0 - CLAMP)
    return ConfusionMatrix.from_diagonal(diag)


def estimate_full_laplace(preds, truths, k: int) -> ConfusionMatrix:
    """Add-one smoothed estimate of every entry: (n_ik + 1) / (n_k + K)."""
    counts = _counts(preds, truths, k)
    smoothed = (counts + 1.0) / (counts.sum(axis=0) + k)[None, :]
    return ConfusionMatrix(smoothed)


def save_cm(cm: ConfusionMatrix, path) -> None:
    """Write K rows of K comma-separated floats; row = predicted, column = true."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in cm.entries.tolist():
            w.writerow([repr(x) for x in row])


def load_cm(path, k: int | None = None) -> ConfusionMatrix:
    path = Path(path)
    if not os.path.exists(path):
        raise DataError(f"confusion file {path} not found")
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                raise DataError(f"{path}:{lineno}: unparsable cell") from None
    n = len(rows)
    if n == 0 or any(len(r) != n for r in rows):
        raise DataError(f"{path}: confusion matrix is not square")
    if k is not None and n != k:
        raise DataError(f"{path}: confusion matrix is {n}x{n}, expected {k}x{k}")
    e = np.array(rows)
    if np.any(e < 0) or not np.all(np.isfinite(e)):
        raise DataError(f"{path}: negative or non-finite entry")
    colsum = e.sum(axis=0)
    bad = np.flatnonzero(np.abs(colsum - 1.0) > LOAD_ATOL)
    if bad.size:
        raise DataError(f"{path}: column {int(bad[0])} sums to {colsum[bad[0]]:.9g}")
    return ConfusionMatrix(e / colsum[None, :])
