"""Posterior recursion over the true label of a sample.

Each classifier contributes a likelihood column of its confusion matrix;
classifiers are treated as conditionally independent given the true label,
so the posterior after step t is the normalised product of the prior and
every column observed so far.  The recursive form multiplies one column
at a time and renormalises.
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from ._numeric import first_argmax, row_entropy
from .core import ConfusionMatrix
from .errors import DataError, DegenerateLikelihoodError

UNDERFLOW = 1e-300


def _normalize_rows(prior: np.ndarray, lik: np.ndarray) -> np.ndarray:
    """Row-normalise ``prior * lik``, falling back to log space on underflow."""
    out = prior * lik
    z = out.sum(axis=1)
    small = z < UNDERFLOW
    if np.any(small):
        with np.errstate(divide="ignore"):
            logp = np.log(prior[small]) + np.log(lik[small])
        top = logp.max(axis=1)
        if np.any(np.isneginf(top)):
            raise DegenerateLikelihoodError(
                "observation has zero likelihood under every class with prior mass")
        w = np.exp(logp - top[:, None])
        out[small] = w
        z[small] = w.sum(axis=1)
    out /= z[:, None]
    return out


def likelihood_hard(cm: ConfusionMatrix, observed: np.ndarray) -> np.ndarray:
    """Likelihood rows ``cm[observed, :]`` for an array of hard labels."""
    observed = np.asarray(observed, dtype=np.int64)
    if observed.size and (observed.min() < 0 or observed.max() >= cm.k):
        raise DataError(f"observed class out of range for K={cm.k}")
    return cm.entries[observed]


def likelihood_soft(cm: ConfusionMatrix, soft: np.ndarray) -> np.ndarray:
    """Mixture likelihood: factor for class k is sum_i soft[i] * cm[i, k]."""
    soft = np.atleast_2d(np.asarray(soft, dtype=np.float64))
    if soft.shape[1] != cm.k:
        raise DataError(f"soft label length {soft.shape[1]} does not match K={cm.k}")
    if np.any(np.abs(soft.sum(axis=1) - 1.0) > 1e-6) or np.any(soft < 0):
        raise DataError("soft label is not a probability vector")
    return soft @ cm.entries


def update_rows(posterior: np.ndarray, lik: np.ndarray) -> np.ndarray:
    """Batched Bayes step: each row of ``posterior`` times the matching likelihood row."""
    return _normalize_rows(np.asarray(posterior, dtype=np.float64), lik)


def _check_posterior(posterior, k):
    p = np.asarray(posterior, dtype=np.float64)
    if p.shape != (k,):
        raise DataError(f"posterior has shape {p.shape}, expected ({k},)")
    return p


def posterior_update(posterior, cm: ConfusionMatrix, observed: int) -> np.ndarray:
    """One Bayes step after ``cm``'s classifier predicted ``observed``.

    >>> cm = ConfusionMatrix(np.array([[0.9, 0.1], [0.1, 0.9]]))
    >>> posterior_update([0.5, 0.5], cm, 0).round(6).tolist()
    [0.9, 0.1]
    """
    p = _check_posterior(posterior, cm.k)
    lik = likelihood_hard(cm, np.array([observed]))
    return update_rows(p[None, :], lik)[0]


def posterior_update_soft(posterior, cm: ConfusionMatrix, soft) -> np.ndarray:
    p = _check_posterior(posterior, cm.k)
    lik = likelihood_soft(cm, soft)
    if lik.shape[0] != 1:
        raise DataError("expected a single soft label vector")
    return update_rows(p[None, :], lik)[0]


def entropy(posterior) -> float:
    """Shannon entropy in nats."""
    return float(row_entropy(np.asarray(posterior, dtype=np.float64)))


def map_label(posterior) -> int:
    """Maximum a posteriori class; ties go to the lowest index."""
    return int(first_argmax(np.asarray(posterior)))


def replay_posterior(prior, factors: Sequence[tuple[ConfusionMatrix, object]]) -> np.ndarray:
    """Posterior from the full likelihood product, normalised once.

    ``factors`` holds ``(confusion_matrix, observation)`` pairs, where an
    observation is a class index or a soft label vector.  Used as a
    reference for the step-by-step recursion.
    """
    p = np.array(prior, dtype=np.float64)
    logp = np.zeros_like(p)
    prod = p.copy()
    for cm, obs in factors:
        if np.ndim(obs) == 0:
            col = cm.entries[int(obs)]
        else:
            col = np.asarray(obs, dtype=np.float64) @ cm.entries
        prod = prod * col
        with np.errstate(divide="ignore"):
            logp = logp + np.log(col)
    z = prod.sum()
    if z >= UNDERFLOW:
        return prod / z
    with np.errstate(divide="ignore"):
        logp = logp + np.log(p)
    top = logp.max()
    if np.isneginf(top):
        raise DegenerateLikelihoodError("likelihood product is zero for every class")
    w = np.exp(logp - top)
    return w / w.sum()
