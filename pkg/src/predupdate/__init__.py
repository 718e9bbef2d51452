"""Backward-compatible prediction updates for unlabelled datasets.

Keeps a label posterior per sample, re-evaluates the most uncertain
samples with each new classifier under a budget, and decides per sample
whether the stored label should change.
"""

from .bayes import entropy, map_label, posterior_update, posterior_update_soft, replay_posterior
from .confusion import estimate_diagonal, estimate_full_laplace, load_cm, save_cm
from .core import (
    ConfusionMatrix,
    LabelStore,
    PosteriorRecord,
    PredictionBatch,
    add_samples,
    new_store,
    restore,
    snapshot,
)
from .errors import (
    DataError,
    DegenerateLikelihoodError,
    PredUpdateError,
    SnapshotError,
    VersionMismatchError,
)
from .metrics import RunReport, StepMetrics, finalize, step_metrics
from .sim import (
    ClassifierSpec,
    ScenarioSpec,
    order_classifiers,
    run_scenario,
    sample_predictions,
    sample_truth,
)
from .strategy import (
    CostRatio,
    EntropySelection,
    MajorityVote,
    MaxBelief,
    MaxBeliefMinEntropy,
    Oracle,
    RandomSelection,
    Replace,
    StepOutcome,
    decide,
    initialize_with,
    run_step,
    select,
)

__version__ = "0.1.0"
