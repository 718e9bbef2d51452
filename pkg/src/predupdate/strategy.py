"""Budgeted re-evaluation and label-update rules.

One update step (``run_step``) picks up to ``budget`` samples, folds the
new classifier's prediction for each of them into its posterior and then
asks the update policy whether the stored label should change.
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from ._numeric import first_argmax, row_entropy
from .bayes import likelihood_hard, likelihood_soft, update_rows
from .core import ConfusionMatrix, LabelStore, PosteriorRecord, PredictionBatch, SampleId
from .errors import DataError
from .seeding import derive_seed

# -- policies ---------------------------------------------------------------


@dataclass(frozen=True)
class EntropySelection:
    def __str__(self):
        return "entropy"


@dataclass(frozen=True)
class RandomSelection:
    seed: int = 0

    def __str__(self):
        return f"random:{self.seed}"


SelectionPolicy = EntropySelection | RandomSelection


@dataclass(frozen=True)
class Replace:
    name = "Replace"


@dataclass(frozen=True)
class MajorityVote:
    name = "Majority Vote"


@dataclass(frozen=True)
class MaxBelief:
    name = "MB"


@dataclass(frozen=True)
class MaxBeliefMinEntropy:
    name = "MBME"


@dataclass(frozen=True)
class CostRatio:
    """Switch to the MAP label only if its posterior odds over the stored label exceed ``ratio``."""

    ratio: float

    def __post_init__(self):
        if not self.ratio > 0:
            raise DataError(f"cost ratio must be > 0, got {self.ratio}")

    @property
    def name(self):
        return f"CR {self.ratio:g}"


@dataclass(frozen=True)
class Oracle:
    """Accept a new prediction only when it turns a wrong stored label right."""

    truth: Mapping[SampleId, int] = field(hash=False, compare=False)
    name = "Oracle"


UpdatePolicy = Replace | MajorityVote | MaxBelief | MaxBeliefMinEntropy | CostRatio | Oracle


def parse_selection(text: str) -> SelectionPolicy:
    text = text.strip().lower()
    if text == "entropy":
        return EntropySelection()
    if text.startswith("random"):
        _, _, seed = text.partition(":")
        try:
            return RandomSelection(int(seed) if seed else 0)
        except ValueError:
            raise DataError(f"bad random seed in {text!r}") from None
    raise DataError(f"unknown selection policy {text!r}")


def parse_update(text: str, truth: Mapping[SampleId, int] | None = None) -> UpdatePolicy:
    """Parse ``replace``, ``majority``, ``mb``, ``mbme``, ``cr:<ratio>`` or ``oracle``."""
    text = text.strip().lower()
    simple = {"replace": Replace, "majority": MajorityVote, "mb": MaxBelief,
              "mbme": MaxBeliefMinEntropy}
    if text in simple:
        return simple[text]()
    if text.startswith("cr:"):
        try:
            ratio = float(text[3:])
        except ValueError:
            raise DataError(f"bad cost ratio in {text!r}") from None
        return CostRatio(ratio)
    if text == "oracle":
        if truth is None:
            raise DataError("the oracle policy needs ground truth")
        return Oracle(truth)
    raise DataError(f"unknown update policy {text!r}")


def policy_spelling(policy: UpdatePolicy) -> str:
    if isinstance(policy, CostRatio):
        return f"cr:{policy.ratio:g}"
    return {Replace: "replace", MajorityVote: "majority", MaxBelief: "mb",
            MaxBeliefMinEntropy: "mbme", Oracle: "oracle"}[type(policy)]


@dataclass
class StepOutcome:
    selected: list[SampleId]
    changed: list[tuple[SampleId, int, int]]


# -- selection -------------------------------------------------------------

def select_rows(store: LabelStore, budget: int, policy: SelectionPolicy) -> np.ndarray:
    budget = int(budget)
    if budget < 0:
        raise DataError(f"budget must be nonnegative, got {budget}")
    budget = min(budget, store.n)
    if isinstance(policy, EntropySelection):
        # primary key: entropy descending; secondary: sample id ascending
        order = np.lexsort((store.id_rank, -store.entropy))
        return order[:budget]
    if isinstance(policy, RandomSelection):
        rng = np.random.default_rng(derive_seed(policy.seed, "select", store.step))
        picked = rng.choice(store.n, size=budget, replace=False)
        return store.id_order[np.sort(picked)]
    raise DataError(f"unknown selection policy {policy!r}")


def select(store: LabelStore, budget: int, policy: SelectionPolicy) -> list[SampleId]:
    """Samples to re-evaluate this step.

    Entropy selection returns the ``budget`` most uncertain samples ordered
    by (entropy desc, id asc); random selection returns a seeded draw
    without replacement, in ascending id order, fresh at every step.
    """
    ids = store.sample_ids
    return [ids[i] for i in select_rows(store, budget, policy)]


# -- decision rules ----------------------------------------------------------

def decide(record_before: PosteriorRecord, record_after: PosteriorRecord,
           new_prediction: int, policy: UpdatePolicy, sample: SampleId = None) -> int:
    """New stored label for one sample after its prediction was ingested."""
    cur = record_before.stored_label
    if isinstance(policy, Replace):
        return int(new_prediction)
    if isinstance(policy, MajorityVote):
        votes = np.asarray(record_after.vote_counts)
        top = votes.max()
        if votes[new_prediction] == top:
            return int(new_prediction)
        return int(np.argmax(votes))
    post = np.asarray(record_after.posterior)
    m = int(np.argmax(post))
    if isinstance(policy, MaxBelief):
        return m
    if isinstance(policy, MaxBeliefMinEntropy):
        return m if record_after.entropy < record_before.entropy else cur
    if isinstance(policy, CostRatio):
        if m == cur:
            return m
        if post[cur] == 0.0:
            return m
        return m if post[m] / post[cur] > policy.ratio else cur
    if isinstance(policy, Oracle):
        try:
            truth = policy.truth[sample]
        except KeyError:
            raise DataError(f"oracle has no ground truth for sample {sample!r}") from None
        if cur != truth and new_prediction == truth:
            return int(new_prediction)
        return cur
    raise DataError(f"unknown update policy {policy!r}")


def decide_rows(policy: UpdatePolicy, stored_before: np.ndarray, entropy_before: np.ndarray,
                posterior_after: np.ndarray, entropy_after: np.ndarray,
                votes_after: np.ndarray, new_pred: np.ndarray,
                sample_ids: Sequence[SampleId] = ()) -> np.ndarray:
    """Vectorised ``decide`` over a block of samples."""
    if isinstance(policy, Replace):
        return new_pred.copy()
    idx = np.arange(new_pred.size)
    if isinstance(policy, MajorityVote):
        top = votes_after.max(axis=1)
        keep_new = votes_after[idx, new_pred] == top
        return np.where(keep_new, new_pred, np.argmax(votes_after, axis=1))
    m = first_argmax(posterior_after)
    if isinstance(policy, MaxBelief):
        return m
    if isinstance(policy, MaxBeliefMinEntropy):
        return np.where(entropy_after < entropy_before, m, stored_before)
    if isinstance(policy, CostRatio):
        p_m = posterior_after[idx, m]
        p_cur = posterior_after[idx, stored_before]
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(p_cur == 0.0, np.inf, p_m / np.where(p_cur == 0.0, 1.0, p_cur))
        switch = (m == stored_before) | (ratio > policy.ratio)
        return np.where(switch, m, stored_before)
    if isinstance(policy, Oracle):
        try:
            truth = np.fromiter((policy.truth[s] for s in sample_ids), dtype=np.int64,
                                count=len(sample_ids))
        except KeyError as exc:
            raise DataError(f"oracle has no ground truth for sample {exc.args[0]!r}") from None
        fix = (stored_before != truth) & (new_pred == truth)
        return np.where(fix, new_pred, stored_before)
    raise DataError(f"unknown update policy {policy!r}")


# -- steps -------------------------------------------------------------------

def _check_k(store: LabelStore, batch: PredictionBatch, cm: ConfusionMatrix):
    if cm.k != store.k:
        raise DataError(f"confusion matrix has K={cm.k}, store has K={store.k}")
    if batch.is_soft and batch.k != store.k:
        raise DataError(f"soft labels have K={batch.k}, store has K={store.k}")
    if len(batch) and batch.labels.max() >= store.k:
        raise DataError(f"batch label {int(batch.labels.max())} out of range for K={store.k}")


def _ingest(store: LabelStore, rows: np.ndarray, batch: PredictionBatch, cm: ConfusionMatrix):
    """Fold the batch's predictions for ``rows`` into the store.

    Returns the hard predictions.  Nothing is written if the update fails.
    """
    pos = batch.positions_in(store)[rows]
    missing = np.flatnonzero(pos < 0)
    if missing.size:
        sid = store.sample_ids[rows[missing[0]]]
        raise DataError(f"no prediction for selected sample {sid!r}")
    pred = batch.labels[pos]
    if batch.is_soft:
        lik = likelihood_soft(cm, batch.probs[pos])
    else:
        lik = likelihood_hard(cm, pred)
    post = update_rows(store.posterior[rows], lik)
    store.posterior[rows] = post
    store.entropy[rows] = row_entropy(post)
    np.add.at(store.votes, (rows, pred), 1)
    store.eval_count[rows] += 1
    store.last_prediction[rows] = pred
    return pred


def _outcome(store, rows, old, new) -> StepOutcome:
    ids = store.sample_ids
    selected = [ids[i] for i in rows]
    order = np.argsort(store.id_rank[rows], kind="stable")
    changed = [(ids[rows[j]], int(old[j]), int(new[j]))
               for j in order if old[j] != new[j]]
    return StepOutcome(selected, changed)


def run_step(store: LabelStore, batch: PredictionBatch, cm: ConfusionMatrix,
             select_policy: SelectionPolicy, update_policy: UpdatePolicy,
             budget: int) -> StepOutcome:
    """Select, re-evaluate and update; advances ``store.step`` by one."""
    _check_k(store, batch, cm)
    rows = select_rows(store, budget, select_policy)
    stored_before = store.stored[rows].copy()
    entropy_before = store.entropy[rows].copy()
    pred = _ingest(store, rows, batch, cm)
    ids = [store.sample_ids[i] for i in rows] if isinstance(update_policy, Oracle) else ()
    new = decide_rows(update_policy, stored_before, entropy_before,
                      store.posterior[rows], store.entropy[rows], store.votes[rows],
                      pred, ids)
    store.stored[rows] = new
    store.step += 1
    return _outcome(store, rows, stored_before, new)


def initialize_with(store: LabelStore, batch: PredictionBatch, cm: ConfusionMatrix) -> StepOutcome:
    """Ingest the first classifier for every sample and store its labels as-is."""
    _check_k(store, batch, cm)
    if store.initialized:
        raise DataError("store is already initialised")
    pos = batch.positions_in(store)
    if np.any(pos < 0):
        sid = store.sample_ids[int(np.flatnonzero(pos < 0)[0])]
        raise DataError(f"initial batch has no prediction for sample {sid!r}")
    rows = store.id_order
    old = store.stored[rows].copy()
    pred = _ingest(store, rows, batch, cm)
    store.stored[rows] = pred
    return _outcome(store, rows, old, pred)
