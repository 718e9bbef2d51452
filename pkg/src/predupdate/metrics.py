"""Flip accounting and backward-compatibility scores."""

from __future__ import annotations

import csv
import io
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from .errors import DataError

STEP_HEADER = ["step", "accuracy", "nf", "pf", "neutral", "cum_nf", "btc", "bec"]
SUMMARY_HEADER = ["strategy", "selection", "budget", "avg_btc", "avg_bec", "acc",
                  "delta_acc", "sum_nf", "nfr", "pf_nf"]


@dataclass(frozen=True)
class StepMetrics:
    step: int
    accuracy: float
    nf: int
    pf: int
    neutral_flips: int
    btc: float
    bec: float


@dataclass(frozen=True)
class RunReport:
    steps: tuple[StepMetrics, ...]
    initial_accuracy: float
    final_accuracy: float
    delta_acc: float
    cum_nf: int
    cum_pf: int
    nfr: float
    pf_nf_ratio: float | None  # None when no negative flip occurred
    avg_btc: float
    avg_bec: float


def step_metrics_arrays(before: np.ndarray, after: np.ndarray, truth: np.ndarray,
                        step: int) -> StepMetrics:
    before, after, truth = (np.asarray(a) for a in (before, after, truth))
    if not (before.shape == after.shape == truth.shape):
        raise DataError("label arrays differ in length")
    if before.size == 0:
        raise DataError("no samples to score")
    ok_before = before == truth
    ok_after = after == truth
    changed = before != after
    nf = int(np.count_nonzero(ok_before & ~ok_after))
    pf = int(np.count_nonzero(~ok_before & ok_after))
    neutral = int(np.count_nonzero(changed & ~ok_before & ~ok_after))
    n_ok_before = int(np.count_nonzero(ok_before))
    n_bad_after = int(np.count_nonzero(~ok_after))
    btc = np.count_nonzero(ok_before & ok_after) / n_ok_before if n_ok_before else 1.0
    bec = np.count_nonzero(~ok_after & ~ok_before) / n_bad_after if n_bad_after else 1.0
    return StepMetrics(
        step=int(step),
        accuracy=np.count_nonzero(ok_after) / truth.size,
        nf=nf, pf=pf, neutral_flips=neutral,
        btc=float(btc), bec=float(bec),
    )


def step_metrics(before_labels: Mapping, after_labels: Mapping, truth: Mapping,
                 step: int) -> StepMetrics:
    """Flip counts, accuracy, BTC and BEC for one update step.

    BTC is the share of previously correct labels still correct; BEC the
    share of current errors that were already errors.  Both are 1.0 when
    their denominator is empty.
    """
    keys = list(before_labels)
    if set(keys) != set(after_labels) or set(keys) != set(truth):
        raise DataError("before, after and truth cover different samples")
    b = np.fromiter((before_labels[s] for s in keys), dtype=np.int64, count=len(keys))
    a = np.fromiter((after_labels[s] for s in keys), dtype=np.int64, count=len(keys))
    t = np.fromiter((truth[s] for s in keys), dtype=np.int64, count=len(keys))
    return step_metrics_arrays(b, a, t, step)


def finalize(steps: Sequence[StepMetrics], initial_accuracy: float, n: int, t: int) -> RunReport:
    steps = tuple(steps)
    if len(steps) != t:
        raise DataError(f"expected {t} steps, got {len(steps)}")
    cum_nf = sum(s.nf for s in steps)
    cum_pf = sum(s.pf for s in steps)
    final = steps[-1].accuracy if steps else initial_accuracy
    return RunReport(
        steps=steps,
        initial_accuracy=initial_accuracy,
        final_accuracy=final,
        delta_acc=final - initial_accuracy,
        cum_nf=cum_nf,
        cum_pf=cum_pf,
        nfr=cum_nf / (n * t) if t else 0.0,
        pf_nf_ratio=cum_pf / cum_nf if cum_nf else None,
        avg_btc=float(np.mean([s.btc for s in steps])) if steps else 1.0,
        avg_bec=float(np.mean([s.bec for s in steps])) if steps else 1.0,
    )


# -- CSV ---------------------------------------------------------------------

def initial_row(accuracy: float) -> StepMetrics:
    """Row 0 of a metrics CSV: the state after the first classifier."""
    return StepMetrics(0, accuracy, 0, 0, 0, 1.0, 1.0)


def write_steps_csv(fh, rows: Sequence[StepMetrics], header: bool = True) -> None:
    w = csv.writer(fh, lineterminator="\n")
    if header:
        w.writerow(STEP_HEADER)
    cum = 0
    for r in rows:
        cum += r.nf
        w.writerow([r.step, repr(r.accuracy), r.nf, r.pf, r.neutral_flips, cum,
                    repr(r.btc), repr(r.bec)])


def steps_csv(report: RunReport) -> str:
    buf = io.StringIO()
    write_steps_csv(buf, (initial_row(report.initial_accuracy),) + report.steps)
    return buf.getvalue()


def read_steps_csv(fh) -> tuple[float | None, list[StepMetrics]]:
    """Parse a metrics CSV.  Returns the step-0 accuracy (if present) and the update steps."""
    reader = csv.reader(fh)
    try:
        head = next(reader)
    except StopIteration:
        raise DataError("empty metrics file") from None
    if head != STEP_HEADER:
        raise DataError(f"metrics header must be {','.join(STEP_HEADER)}")
    initial = None
    steps = []
    for lineno, row in enumerate(reader, 2):
        if not row:
            continue
        try:
            step, acc, nf, pf, neu, _cum, btc, bec = row
            m = StepMetrics(int(step), float(acc), int(nf), int(pf), int(neu),
                            float(btc), float(bec))
        except ValueError:
            raise DataError(f"metrics line {lineno} is malformed") from None
        if m.step == 0:
            initial = m.accuracy
        else:
            steps.append(m)
    return initial, steps


def _pct(x: float, digits: int = 2) -> str:
    return f"{100.0 * x:.{digits}f}"


def summary_row(strategy: str, selection: str, budget: float, report: RunReport) -> list[str]:
    """One summary row, in SUMMARY_HEADER order."""
    pf_nf = "-" if report.pf_nf_ratio is None else f"{report.pf_nf_ratio:.1f}"
    return [strategy, selection, f"{100.0 * budget:g}",
            _pct(report.avg_btc), _pct(report.avg_bec),
            _pct(report.final_accuracy, 1), _pct(report.delta_acc, 1),
            str(report.cum_nf), _pct(report.nfr), pf_nf]
