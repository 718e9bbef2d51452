"""Synthetic classifiers and end-to-end scenario runs.

Ground truth is drawn i.i.d. from a class prior and every classifier
predicts by sampling from the column of its confusion matrix that belongs
to the true class, so the classifiers are conditionally independent given
the truth by construction.  A run initialises the store with the first
classifier and then performs T budgeted update steps, scoring each step
against the truth.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
import yaml

from .confusion import estimate_diagonal, estimate_full_laplace
from .core import ConfusionMatrix, LabelStore, PredictionBatch, SampleId, make_prior, new_store
from .errors import DataError
from .metrics import RunReport, finalize, step_metrics_arrays
from .seeding import derive_seed
from .strategy import (
    initialize_with,
    parse_selection,
    parse_update,
    run_step,
)

ESTIMATORS = ("diagonal", "laplace", "known")


@dataclass(frozen=True)
class ClassifierSpec:
    """A synthetic classifier: uniform per-class accuracy or an explicit matrix."""

    diag_accuracy: float | None = None
    matrix: ConfusionMatrix | None = None
    reported_accuracy: float | None = None

    def __post_init__(self):
        if (self.diag_accuracy is None) == (self.matrix is None):
            raise DataError("a classifier needs exactly one of diag_accuracy or matrix")
        if self.diag_accuracy is not None and not 0.0 < self.diag_accuracy < 1.0:
            raise DataError(f"diag_accuracy must be in (0, 1), got {self.diag_accuracy}")

    def confusion(self, k: int) -> ConfusionMatrix:
        if self.matrix is not None:
            if self.matrix.k != k:
                raise DataError(f"classifier matrix is {self.matrix.k}x{self.matrix.k}, K={k}")
            return self.matrix
        return ConfusionMatrix.uniform_accuracy(k, self.diag_accuracy)

    @property
    def accuracy(self) -> float:
        """Accuracy used for ordering (reported, else mean diagonal)."""
        if self.reported_accuracy is not None:
            return self.reported_accuracy
        if self.diag_accuracy is not None:
            return self.diag_accuracy
        return float(np.mean(np.diag(self.matrix.entries)))


@dataclass(frozen=True)
class ScenarioSpec:
    k: int
    n_samples: int
    classifiers: tuple[ClassifierSpec, ...]
    class_prior: object = "uniform"
    ordering: str = "improving"
    budget_fraction: float = 1.0
    select_policy: str = "entropy"
    update_policies: tuple[str, ...] = ("replace", "majority", "mb", "mbme",
                                        "cr:2", "cr:5", "cr:10")
    estimator: str = "known"
    source_split_n: int = 100
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "classifiers", tuple(self.classifiers))
        object.__setattr__(self, "update_policies", tuple(self.update_policies))
        if len(self.classifiers) < 2:
            raise DataError("a scenario needs at least two classifiers (T >= 1)")
        if not 0.0 < self.budget_fraction <= 1.0:
            raise DataError(f"budget_fraction must be in (0, 1], got {self.budget_fraction}")
        if self.estimator not in ESTIMATORS:
            raise DataError(f"estimator must be one of {ESTIMATORS}")
        if self.n_samples < 1 or self.k < 2:
            raise DataError("need n_samples >= 1 and k >= 2")
        if self.estimator != "known" and self.source_split_n < 1:
            raise DataError("source_split_n must be positive")
        parse_selection(self.select_policy)
        for p in self.update_policies:
            parse_update(p, truth={})
        make_prior(self.k, self.class_prior)

    @property
    def t(self) -> int:
        return len(self.classifiers) - 1


# -- sampling ----------------------------------------------------------------

def _rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(int(seed) & ((1 << 64) - 1))


def sample_truth(n: int, k: int, class_prior="uniform", seed: int = 0) -> dict[int, int]:
    """Ground-truth labels for samples ``0..n-1``."""
    if n < 1:
        raise DataError("n must be >= 1")
    p = make_prior(k, class_prior)
    labels = _rng(seed).choice(k, size=n, p=p)
    return dict(enumerate(labels.tolist()))


def draw_predictions(truth: np.ndarray, cm: ConfusionMatrix, seed: int) -> np.ndarray:
    """Inverse-CDF draw of one prediction per sample from its true-class column."""
    truth = np.asarray(truth, dtype=np.int64)
    cdf = np.cumsum(cm.entries, axis=0)
    cdf[-1] = 1.0
    u = _rng(seed).random(truth.size)
    pred = (u[:, None] >= cdf.T[truth]).sum(axis=1)
    return np.minimum(pred, cm.k - 1)


def sample_predictions(truth: Mapping[SampleId, int], cm: ConfusionMatrix, seed: int,
                       step: int = 0) -> PredictionBatch:
    ids = list(truth)
    t = np.fromiter((truth[s] for s in ids), dtype=np.int64, count=len(ids))
    return PredictionBatch(step, ids, labels=draw_predictions(t, cm, seed))


def order_classifiers(specs: Sequence[ClassifierSpec], ordering: str = "improving") -> list:
    """Arrange classifiers by accuracy: improving, adversarial or ``random:<seed>``."""
    specs = list(specs)
    if not specs:
        raise DataError("no classifiers to order")
    ordering = ordering.strip().lower()
    if ordering == "improving":
        return sorted(specs, key=lambda s: s.accuracy)
    if ordering == "adversarial":
        return sorted(specs, key=lambda s: -s.accuracy)
    if ordering.startswith("random"):
        _, _, seed = ordering.partition(":")
        try:
            seed = int(seed) if seed else 0
        except ValueError:
            raise DataError(f"bad ordering seed in {ordering!r}") from None
        perm = _rng(derive_seed(seed, "ordering")).permutation(len(specs))
        return [specs[i] for i in perm]
    raise DataError(f"unknown ordering {ordering!r}")


def resolve_budget(fraction: float, n: int) -> int:
    # the epsilon keeps e.g. 0.29 * 100 = 28.999999999999996 from flooring to 28
    return min(n, int(math.floor(fraction * n + 1e-9)))


# -- scenario runs -----------------------------------------------------------

@dataclass
class ScenarioData:
    """Everything random in a scenario, shared by all policies."""

    k: int
    sample_ids: list[int]
    truth: np.ndarray
    true_cms: list[ConfusionMatrix]
    estimates: list[ConfusionMatrix]
    batches: list[PredictionBatch]

    @property
    def truth_map(self) -> dict[int, int]:
        return dict(zip(self.sample_ids, self.truth.tolist()))

    def accuracy_of(self, t: int) -> float:
        return float(np.mean(self.batches[t].labels == self.truth))


def prepare_scenario(spec: ScenarioSpec) -> ScenarioData:
    truth_map = sample_truth(spec.n_samples, spec.k, spec.class_prior,
                             derive_seed(spec.seed, "truth"))
    ids = list(truth_map)
    truth = np.array([truth_map[s] for s in ids], dtype=np.int64)
    ordered = order_classifiers(spec.classifiers, spec.ordering)
    true_cms, estimates, batches = [], [], []
    src_truth = np.repeat(np.arange(spec.k), spec.source_split_n)
    for t, cls in enumerate(ordered):
        cm = cls.confusion(spec.k)
        true_cms.append(cm)
        batches.append(PredictionBatch(
            t, ids, labels=draw_predictions(truth, cm, derive_seed(spec.seed, "target", t))))
        if spec.estimator == "known":
            estimates.append(cm)
            continue
        src_pred = draw_predictions(src_truth, cm, derive_seed(spec.seed, "source", t))
        est = estimate_diagonal if spec.estimator == "diagonal" else estimate_full_laplace
        estimates.append(est(src_pred, src_truth, spec.k))
    return ScenarioData(spec.k, ids, truth, true_cms, estimates, batches)


def run_policy(data: ScenarioData, update_policy: str, select_policy: str,
               budget_fraction: float,
               on_step: Callable[[int, LabelStore], None] | None = None
               ) -> tuple[RunReport, LabelStore]:
    """Run one update policy through every step of a prepared scenario."""
    truth_map = data.truth_map if update_policy.strip().lower() == "oracle" else None
    upd = parse_update(update_policy, truth=truth_map)
    sel = parse_selection(select_policy)
    store = new_store(data.k, data.sample_ids)
    initialize_with(store, data.batches[0], data.estimates[0])
    if on_step is not None:
        on_step(0, store)
    n = store.n
    initial = float(np.mean(store.stored == data.truth))
    budget = resolve_budget(budget_fraction, n)
    steps = []
    for t in range(1, len(data.batches)):
        before = store.stored.copy()
        run_step(store, data.batches[t], data.estimates[t], sel, upd, budget)
        steps.append(step_metrics_arrays(before, store.stored, data.truth, t))
        if on_step is not None:
            on_step(t, store)
    return finalize(steps, initial, n, len(steps)), store


def run_scenario(spec: ScenarioSpec, jobs: int = 1,
                 data: ScenarioData | None = None) -> dict[str, RunReport]:
    """RunReport for every update policy, all fed the same prediction streams."""
    data = data if data is not None else prepare_scenario(spec)

    def one(policy):
        return run_policy(data, policy, spec.select_policy, spec.budget_fraction)[0]

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(one, spec.update_policies))
    else:
        reports = [one(p) for p in spec.update_policies]
    return dict(zip(spec.update_policies, reports))


# -- scenario files ------------------------------------------------------------

_SPEC_KEYS = {f for f in ScenarioSpec.__dataclass_fields__}


def _classifier_from(obj) -> ClassifierSpec:
    if isinstance(obj, (int, float)) and not isinstance(obj, bool):
        return ClassifierSpec(diag_accuracy=float(obj))
    if isinstance(obj, Mapping):
        extra = set(obj) - {"diag_accuracy", "matrix", "reported_accuracy"}
        if extra:
            raise DataError(f"unknown classifier keys {sorted(extra)}")
        matrix = obj.get("matrix")
        return ClassifierSpec(
            diag_accuracy=obj.get("diag_accuracy"),
            matrix=None if matrix is None else ConfusionMatrix(np.array(matrix, dtype=float)),
            reported_accuracy=obj.get("reported_accuracy"),
        )
    raise DataError(f"cannot read classifier entry {obj!r}")


def scenarios_from_dict(cfg: Mapping) -> list[ScenarioSpec]:
    """Specs described by a config mapping.

    ``budget_fraction`` and ``select_policy`` may be lists, in which case one
    spec is produced per combination (selection outer, budget inner).
    """
    if not isinstance(cfg, Mapping):
        raise DataError("scenario file must contain a mapping")
    unknown = set(cfg) - _SPEC_KEYS
    if unknown:
        raise DataError(f"unknown scenario keys: {', '.join(sorted(unknown))}")
    for req in ("k", "n_samples", "classifiers"):
        if req not in cfg:
            raise DataError(f"scenario is missing {req!r}")
    base = dict(cfg)
    base["classifiers"] = tuple(_classifier_from(c) for c in cfg["classifiers"])
    if "update_policies" in base:
        base["update_policies"] = tuple(str(p) for p in base["update_policies"])
    sels = base.pop("select_policy", "entropy")
    budgets = base.pop("budget_fraction", 1.0)
    sels = [sels] if isinstance(sels, str) else list(sels)
    budgets = [budgets] if isinstance(budgets, (int, float)) else list(budgets)
    try:
        proto = ScenarioSpec(**base, select_policy=str(sels[0]),
                             budget_fraction=float(budgets[0]))
    except TypeError as exc:
        raise DataError(str(exc)) from None
    return [replace(proto, select_policy=str(s), budget_fraction=float(b))
            for s in sels for b in budgets]


def load_scenarios(path) -> list[ScenarioSpec]:
    with open(path) as fh:
        try:
            cfg = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise DataError(f"{path}: {exc}") from None
    return scenarios_from_dict(cfg)
