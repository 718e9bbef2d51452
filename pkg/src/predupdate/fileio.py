"""Readers and writers for the CLI's plain-text files."""

from __future__ import annotations

import csv
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .core import LabelStore, PredictionBatch, SampleId, _normalize_id
from .errors import DataError


def _open(path):
    try:
        return open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None


def read_ids(path) -> list[SampleId]:
    """One id per line (first CSV column); an optional ``sample_id`` header is skipped.

    Ids are integers when every entry parses as one, strings otherwise.
    """
    raw = []
    with _open(path) as fh:
        for row in csv.reader(fh):
            if not row or not row[0].strip():
                continue
            raw.append(row[0].strip())
    if raw and raw[0] == "sample_id":
        raw = raw[1:]
    if not raw:
        raise DataError(f"{path}: no sample ids")
    try:
        ids = [int(s) for s in raw]
    except ValueError:
        ids = raw
    seen = set()
    for sid in ids:
        if sid in seen:
            raise DataError(f"{path}: duplicate sample id {sid!r}")
        seen.add(sid)
    return [_normalize_id(s) for s in ids]


def read_vector(path) -> np.ndarray:
    """Floats separated by commas and/or newlines."""
    with _open(path) as fh:
        cells = [c.strip() for row in csv.reader(fh) for c in row if c.strip()]
    try:
        return np.array([float(c) for c in cells])
    except ValueError:
        raise DataError(f"{path}: unparsable number") from None


def read_label_csv(path) -> dict[str, int]:
    """``sample_id,label`` rows keyed by the raw id text.  Header optional."""
    out: dict[str, int] = {}
    with _open(path) as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or not "".join(row).strip():
                continue
            if len(row) != 2:
                raise DataError(f"{path}:{lineno}: expected sample_id,label")
            sid, label = row[0].strip(), row[1].strip()
            if lineno == 1 and (sid, label) == ("sample_id", "label"):
                continue
            try:
                value = int(label)
            except ValueError:
                raise DataError(f"{path}:{lineno}: label {label!r} is not an integer") from None
            if sid in out:
                raise DataError(f"{path}:{lineno}: duplicate sample id {sid!r}")
            out[sid] = value
    return out


def read_truth(path, store: LabelStore) -> dict[SampleId, int]:
    return {store.coerce_id(s): v for s, v in read_label_csv(path).items()}


def read_predictions(path, store: LabelStore, step: int) -> PredictionBatch:
    """Hard labels from ``.csv`` or soft labels from ``.jsonl``."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".csv":
        labels = read_label_csv(path)
        ids = [store.coerce_id(s) for s in labels]
        return PredictionBatch(step, ids, labels=np.fromiter(labels.values(), dtype=np.int64,
                                                             count=len(labels)))
    if suffix == ".jsonl":
        ids, probs = [], []
        with _open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                    sid, p = obj["sample_id"], obj["probs"]
                except (ValueError, KeyError, TypeError):
                    raise DataError(f"{path}:{lineno}: expected {{\"sample_id\", \"probs\"}}") from None
                ids.append(store.coerce_id(str(sid)))
                probs.append(p)
        if not ids:
            return PredictionBatch(step, [], labels=np.zeros(0, dtype=np.int64))
        try:
            arr = np.array(probs, dtype=np.float64)
        except ValueError:
            raise DataError(f"{path}: soft labels have inconsistent lengths") from None
        return PredictionBatch(step, ids, probs=arr)
    raise DataError(f"{path}: predictions must be .csv (hard) or .jsonl (soft)")


def atomic_write(path, data: bytes | str) -> None:
    """Write via a temp file in the same directory and rename over ``path``."""
    path = Path(path)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
