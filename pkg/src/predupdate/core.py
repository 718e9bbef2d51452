"""Domain types and the label store.

The store keeps one dense row per sample: the posterior over the true
label, the currently stored label, the vote tally used by the majority
baseline and a cached entropy.  Rows are held in numpy arrays so that a
step over thousands of samples is a handful of vectorised operations.
"""

from __future__ import annotations

from collections.abc import Iterable, Iterator, Mapping, Sequence
from dataclasses import dataclass
from typing import Union

import numpy as np

from ._numeric import first_argmax, row_entropy
from .errors import DataError, SnapshotError, VersionMismatchError

SampleId = Union[int, str]

FORMAT_VERSION = 1
_MAGIC = "predupdate-store"
_COLUMNS = "sample_id\tstored_label\teval_count\tlast_prediction\tvote_counts\tposterior"

STOCHASTIC_ATOL = 1e-9


def _normalize_id(sid) -> SampleId:
    if isinstance(sid, (bool, np.bool_)):
        raise DataError(f"sample id must be int or str, got bool {sid!r}")
    if isinstance(sid, (int, np.integer)):
        return int(sid)
    if isinstance(sid, str):
        if any(c in sid for c in "\t\r\n") or sid == "":
            raise DataError(f"sample id {sid!r} is empty or contains tab/newline")
        return sid
    raise DataError(f"sample id must be int or str, got {type(sid).__name__}")


def _id_kind(ids: Sequence[SampleId]) -> str | None:
    kinds = {type(s) for s in ids}
    if not kinds:
        return None
    if len(kinds) > 1:
        raise DataError("sample ids mix integers and strings")
    return "int" if kinds == {int} else "str"


def make_prior(k: int, prior=None) -> np.ndarray:
    """Resolve ``None``/``"uniform"`` or an explicit vector into a prior."""
    if k < 2:
        raise DataError(f"class count must be >= 2, got {k}")
    if prior is None or (isinstance(prior, str) and prior == "uniform"):
        return np.full(k, 1.0 / k)
    p = np.asarray(prior, dtype=np.float64)
    if p.shape != (k,):
        raise DataError(f"prior has shape {p.shape}, expected ({k},)")
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise DataError("prior entries must be finite and nonnegative")
    if abs(p.sum() - 1.0) > 1e-6:
        raise DataError(f"prior sums to {p.sum():.9g}, expected 1")
    return p / p.sum()


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Column-stochastic likelihood table.

    ``entries[i, k]`` is the probability of predicting class ``i`` when the
    true class is ``k``.
    """

    entries: np.ndarray

    def __post_init__(self):
        e = np.array(self.entries, dtype=np.float64)
        if e.ndim != 2 or e.shape[0] != e.shape[1] or e.shape[0] < 2:
            raise DataError(f"confusion matrix must be square KxK with K>=2, got {e.shape}")
        if not np.all(np.isfinite(e)) or e.min() < 0.0 or e.max() > 1.0:
            raise DataError("confusion matrix entries must lie in [0, 1]")
        colsum = e.sum(axis=0)
        bad = np.flatnonzero(np.abs(colsum - 1.0) > STOCHASTIC_ATOL)
        if bad.size:
            raise DataError(
                f"confusion matrix column {int(bad[0])} sums to {colsum[bad[0]]:.12g}"
            )
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)

    @property
    def k(self) -> int:
        return self.entries.shape[0]

    @classmethod
    def from_diagonal(cls, diag) -> "ConfusionMatrix":
        """Matrix with the given per-class accuracies and constant off-diagonals."""
        d = np.asarray(diag, dtype=np.float64)
        k = d.size
        e = np.empty((k, k))
        e[:] = (1.0 - d) / (k - 1)
        np.fill_diagonal(e, d)
        return cls(e)

    @classmethod
    def uniform_accuracy(cls, k: int, accuracy: float) -> "ConfusionMatrix":
        return cls.from_diagonal(np.full(k, float(accuracy)))

    def __eq__(self, other):
        if not isinstance(other, ConfusionMatrix):
            return NotImplemented
        return np.array_equal(self.entries, other.entries)

    def __repr__(self):
        return f"ConfusionMatrix(k={self.k})"


@dataclass(eq=False)
class PosteriorRecord:
    """A copy of one sample's state, detached from the store."""

    posterior: np.ndarray
    stored_label: int
    entropy: float
    last_prediction: int | None
    vote_counts: np.ndarray
    eval_count: int


class LabelStore:
    """Best-guess labels and label posteriors for a set of samples.

    Sample state lives in the parallel arrays ``posterior`` (N, K),
    ``entropy`` (N,), ``stored`` (N,), ``votes`` (N, K), ``eval_count`` (N,)
    and ``last_prediction`` (N,; -1 means none).  Row ``i`` belongs to
    ``sample_ids[i]``.
    """

    def __init__(self, k, sample_ids, posterior, stored, votes, eval_count,
                 last_prediction, step=0):
        self.k = int(k)
        self.step = int(step)
        self.sample_ids: list[SampleId] = list(sample_ids)
        self.posterior = np.asarray(posterior, dtype=np.float64)
        self.entropy = row_entropy(self.posterior)
        self.stored = np.asarray(stored, dtype=np.int64)
        self.votes = np.asarray(votes, dtype=np.int64)
        self.eval_count = np.asarray(eval_count, dtype=np.int64)
        self.last_prediction = np.asarray(last_prediction, dtype=np.int64)
        self._reindex()

    def _reindex(self):
        self._index = {sid: i for i, sid in enumerate(self.sample_ids)}
        if len(self._index) != len(self.sample_ids):
            seen = set()
            for sid in self.sample_ids:
                if sid in seen:
                    raise DataError(f"duplicate sample id {sid!r}")
                seen.add(sid)
        self.id_type = _id_kind(self.sample_ids) or "int"
        # rank of each row in ascending sample-id order
        order = sorted(range(len(self.sample_ids)), key=self.sample_ids.__getitem__)
        self.id_rank = np.empty(len(order), dtype=np.int64)
        self.id_rank[order] = np.arange(len(order))
        self.id_order = np.asarray(order, dtype=np.int64)

    def __len__(self):
        return len(self.sample_ids)

    def __contains__(self, sid):
        return sid in self._index

    @property
    def n(self) -> int:
        return len(self.sample_ids)

    @property
    def initialized(self) -> bool:
        """True once any prediction has been ingested."""
        return self.step > 0 or bool(self.eval_count.any())

    def rows(self, ids: Iterable[SampleId]) -> np.ndarray:
        try:
            return np.fromiter((self._index[s] for s in ids), dtype=np.int64)
        except KeyError as exc:
            raise DataError(f"unknown sample id {exc.args[0]!r}") from None

    def refresh_entropy(self, rows=None) -> None:
        """Recompute cached entropies after writing ``posterior`` directly."""
        if rows is None:
            self.entropy = row_entropy(self.posterior)
        else:
            self.entropy[rows] = row_entropy(self.posterior[rows])

    def coerce_id(self, raw: str) -> SampleId:
        """Interpret a textual id read from a file using this store's id type."""
        raw = raw.strip()
        if self.id_type == "int":
            try:
                return int(raw)
            except ValueError:
                raise DataError(f"sample id {raw!r} is not an integer") from None
        return raw

    def record(self, sid: SampleId) -> PosteriorRecord:
        i = self._index[sid]
        lp = int(self.last_prediction[i])
        return PosteriorRecord(
            posterior=self.posterior[i].copy(),
            stored_label=int(self.stored[i]),
            entropy=float(self.entropy[i]),
            last_prediction=None if lp < 0 else lp,
            vote_counts=self.votes[i].copy(),
            eval_count=int(self.eval_count[i]),
        )

    @property
    def records(self) -> Mapping[SampleId, PosteriorRecord]:
        return _RecordView(self)

    def stored_labels(self) -> dict[SampleId, int]:
        return dict(zip(self.sample_ids, self.stored.tolist()))

    def copy(self) -> "LabelStore":
        return LabelStore(self.k, self.sample_ids, self.posterior.copy(),
                          self.stored.copy(), self.votes.copy(),
                          self.eval_count.copy(), self.last_prediction.copy(),
                          self.step)

    def __eq__(self, other):
        if not isinstance(other, LabelStore):
            return NotImplemented
        return (
            self.k == other.k
            and self.step == other.step
            and self.sample_ids == other.sample_ids
            and np.array_equal(self.posterior, other.posterior)
            and np.array_equal(self.entropy, other.entropy)
            and np.array_equal(self.stored, other.stored)
            and np.array_equal(self.votes, other.votes)
            and np.array_equal(self.eval_count, other.eval_count)
            and np.array_equal(self.last_prediction, other.last_prediction)
        )

    def __repr__(self):
        return f"LabelStore(k={self.k}, n={self.n}, step={self.step})"


class _RecordView(Mapping):
    def __init__(self, store: LabelStore):
        self._store = store

    def __getitem__(self, sid):
        if sid not in self._store:
            raise KeyError(sid)
        return self._store.record(sid)

    def __iter__(self) -> Iterator[SampleId]:
        return iter(self._store.sample_ids)

    def __len__(self):
        return self._store.n


def new_store(k: int, samples: Sequence[SampleId], prior=None) -> LabelStore:
    """Create a store whose every record holds ``prior`` (uniform by default).

    The stored label starts at the argmax of the prior; it is overwritten
    when the first classifier's predictions are ingested.
    """
    p = make_prior(k, prior)
    ids = [_normalize_id(s) for s in samples]
    if not ids:
        raise DataError("a store needs at least one sample")
    n = len(ids)
    return LabelStore(
        k, ids,
        posterior=np.tile(p, (n, 1)),
        stored=np.full(n, int(first_argmax(p))),
        votes=np.zeros((n, k), dtype=np.int64),
        eval_count=np.zeros(n, dtype=np.int64),
        last_prediction=np.full(n, -1, dtype=np.int64),
    )


def add_samples(store: LabelStore, samples: Sequence[SampleId]) -> LabelStore:
    """Append samples with a uniform prior, in place.  Returns ``store``."""
    ids = [_normalize_id(s) for s in samples]
    if not ids:
        return store
    for sid in ids:
        if sid in store:
            raise DataError(f"sample id {sid!r} already present")
    if len(set(ids)) != len(ids):
        raise DataError("duplicate sample ids in added batch")
    m, k = len(ids), store.k
    store.sample_ids.extend(ids)
    store.posterior = np.vstack([store.posterior, np.full((m, k), 1.0 / k)])
    store.entropy = np.concatenate([store.entropy, row_entropy(store.posterior[-m:])])
    store.stored = np.concatenate([store.stored, np.zeros(m, dtype=np.int64)])
    store.votes = np.vstack([store.votes, np.zeros((m, k), dtype=np.int64)])
    store.eval_count = np.concatenate([store.eval_count, np.zeros(m, dtype=np.int64)])
    store.last_prediction = np.concatenate(
        [store.last_prediction, np.full(m, -1, dtype=np.int64)])
    try:
        store._reindex()
    except DataError:
        # mixed id kinds; roll back
        del store.sample_ids[-m:]
        for name in ("posterior", "entropy", "stored", "votes", "eval_count",
                     "last_prediction"):
            setattr(store, name, getattr(store, name)[:-m])
        store._reindex()
        raise
    return store


# -- snapshot ---------------------------------------------------------------

def snapshot(store: LabelStore) -> bytes:
    """Serialise ``store`` to a versioned, tab-separated text container.

    Floats are written with ``repr`` so ``restore`` yields bit-identical
    posteriors.
    """
    lines = [
        _MAGIC,
        f"format_version\t{FORMAT_VERSION}",
        f"k\t{store.k}",
        f"step\t{store.step}",
        f"id_type\t{store.id_type}",
        f"n\t{store.n}",
        _COLUMNS,
    ]
    post = store.posterior.tolist()
    votes = store.votes.tolist()
    stored = store.stored.tolist()
    evals = store.eval_count.tolist()
    last = store.last_prediction.tolist()
    for i, sid in enumerate(store.sample_ids):
        lp = "" if last[i] < 0 else str(last[i])
        lines.append(
            f"{sid}\t{stored[i]}\t{evals[i]}\t{lp}\t"
            f"{','.join(map(str, votes[i]))}\t{','.join(map(repr, post[i]))}"
        )
    lines.append(f"end\t{store.n}")
    return ("\n".join(lines) + "\n").encode("utf-8")


def _header(lines, pos, key):
    try:
        name, value = lines[pos].split("\t")
    except (IndexError, ValueError):
        raise SnapshotError(f"snapshot truncated or corrupt at header {key!r}") from None
    if name != key:
        raise SnapshotError(f"expected header {key!r}, found {name!r}")
    return value


def restore(data: bytes) -> LabelStore:
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError:
        raise SnapshotError("snapshot is not valid UTF-8") from None
    lines = text.split("\n")
    if not lines or lines[0] != _MAGIC:
        raise SnapshotError("not a label-store snapshot")
    try:
        version = int(_header(lines, 1, "format_version"))
    except ValueError:
        raise SnapshotError("format_version is not an integer") from None
    if version != FORMAT_VERSION:
        raise VersionMismatchError(
            f"snapshot format_version {version}, this build reads {FORMAT_VERSION}")
    try:
        k = int(_header(lines, 2, "k"))
        step = int(_header(lines, 3, "step"))
        id_type = _header(lines, 4, "id_type")
        n = int(_header(lines, 5, "n"))
    except ValueError:
        raise SnapshotError("malformed snapshot header") from None
    if id_type not in ("int", "str"):
        raise SnapshotError(f"unknown id_type {id_type!r}")
    if len(lines) < 7 or lines[6] != _COLUMNS:
        raise SnapshotError("missing record column header")
    body = lines[7:7 + n]
    trailer = lines[7 + n] if len(lines) > 7 + n else ""
    if len(body) != n or trailer != f"end\t{n}":
        raise SnapshotError(f"snapshot truncated: expected {n} records")

    ids = []
    posterior = np.empty((n, k))
    votes = np.empty((n, k), dtype=np.int64)
    stored = np.empty(n, dtype=np.int64)
    evals = np.empty(n, dtype=np.int64)
    last = np.empty(n, dtype=np.int64)
    for i, line in enumerate(body):
        try:
            sid, sl, ec, lp, vc, ps = line.split("\t")
            ids.append(int(sid) if id_type == "int" else sid)
            stored[i] = int(sl)
            evals[i] = int(ec)
            last[i] = -1 if lp == "" else int(lp)
            v = [int(x) for x in vc.split(",")]
            p = [float(x) for x in ps.split(",")]
            if len(v) != k or len(p) != k:
                raise ValueError
            votes[i] = v
            posterior[i] = p
        except ValueError:
            raise SnapshotError(f"corrupt record on line {i + 8}") from None
    if n and (stored.min() < 0 or stored.max() >= k):
        raise SnapshotError("stored label out of range")
    if n and not np.all(np.abs(posterior.sum(axis=1) - 1.0) <= STOCHASTIC_ATOL):
        raise SnapshotError("posterior rows do not sum to 1")
    return LabelStore(k, ids, posterior, stored, votes, evals, last, step)


# -- prediction batches -----------------------------------------------------

class PredictionBatch:
    """One classifier's outputs for a set of samples at one step.

    A batch is either all hard labels (``labels``, shape (M,)) or all soft
    probability vectors (``probs``, shape (M, K)).
    """

    def __init__(self, step: int, sample_ids: Sequence[SampleId], labels=None,
                 probs=None):
        if (labels is None) == (probs is None):
            raise DataError("give exactly one of labels or probs")
        self.step = int(step)
        self.sample_ids = [_normalize_id(s) for s in sample_ids]
        m = len(self.sample_ids)
        if len(set(self.sample_ids)) != m:
            raise DataError("duplicate sample id in prediction batch")
        if labels is not None:
            self.labels = np.asarray(labels, dtype=np.int64).reshape(-1)
            if self.labels.shape != (m,):
                raise DataError("labels do not match sample ids")
            if m and self.labels.min() < 0:
                raise DataError("negative class label in batch")
            self.probs = None
        else:
            self.probs = np.asarray(probs, dtype=np.float64)
            if self.probs.ndim != 2 or self.probs.shape[0] != m:
                raise DataError("probs must have one row per sample id")
            if not np.all(np.isfinite(self.probs)) or np.any(self.probs < 0):
                raise DataError("soft labels must be finite and nonnegative")
            bad = np.flatnonzero(np.abs(self.probs.sum(axis=1) - 1.0) > 1e-6)
            if bad.size:
                raise DataError(
                    f"soft label for {self.sample_ids[bad[0]]!r} does not sum to 1")
            self.labels = first_argmax(self.probs) if m else np.zeros(0, np.int64)
        self._aligned_key = None
        self._aligned = None

    @classmethod
    def from_mapping(cls, step: int, entries: Mapping) -> "PredictionBatch":
        """Build from ``{sample_id: class}`` or ``{sample_id: prob_vector}``."""
        ids = list(entries)
        values = [entries[s] for s in ids]
        if values and all(np.ndim(v) == 0 for v in values):
            return cls(step, ids, labels=np.asarray(values, dtype=np.int64))
        if values and all(np.ndim(v) == 1 for v in values):
            return cls(step, ids, probs=np.vstack(values))
        if not values:
            return cls(step, ids, labels=np.zeros(0, dtype=np.int64))
        raise DataError("a batch must be all hard labels or all soft labels")

    @property
    def is_soft(self) -> bool:
        return self.probs is not None

    @property
    def k(self) -> int | None:
        return None if self.probs is None else self.probs.shape[1]

    def __len__(self):
        return len(self.sample_ids)

    @property
    def entries(self) -> dict:
        if self.is_soft:
            return dict(zip(self.sample_ids, self.probs))
        return dict(zip(self.sample_ids, self.labels.tolist()))

    def positions_in(self, store: LabelStore) -> np.ndarray:
        """Batch row of each store row, or -1 where the batch has no entry."""
        key = (id(store.sample_ids), store.n)
        if self._aligned_key == key:
            return self._aligned
        if self.sample_ids == store.sample_ids:
            pos = np.arange(store.n, dtype=np.int64)
        else:
            pos = np.full(store.n, -1, dtype=np.int64)
            where = {sid: j for j, sid in enumerate(self.sample_ids)}
            for i, sid in enumerate(store.sample_ids):
                pos[i] = where.get(sid, -1)
            extra = set(where).difference(store.sample_ids)
            if extra:
                raise DataError(f"batch has unknown sample id {sorted(extra, key=str)[0]!r}")
        self._aligned_key, self._aligned = key, pos
        return pos
