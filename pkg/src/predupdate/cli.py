"""Command-line interface.

Exit codes: 0 success, 2 bad arguments, 3 data or file-format error,
4 numerical failure (a degenerate likelihood).
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .confusion import estimate_diagonal, estimate_full_laplace, load_cm, save_cm
from .core import new_store, restore, snapshot
from .errors import DataError, DegenerateLikelihoodError
from .fileio import (
    atomic_write,
    read_ids,
    read_label_csv,
    read_predictions,
    read_truth,
    read_vector,
)
from .metrics import (
    SUMMARY_HEADER,
    finalize,
    initial_row,
    read_steps_csv,
    step_metrics_arrays,
    steps_csv,
    summary_row,
    write_steps_csv,
)
from .sim import load_scenarios, prepare_scenario, resolve_budget, run_policy
from .strategy import initialize_with, parse_selection, parse_update, policy_spelling, run_step

log = logging.getLogger("predupdate")

EXIT_DATA, EXIT_NUMERIC = 3, 4


class ArgError(Exception):
    pass


def _fraction(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"budget {text!r} is not a number") from None
    if not 0.0 < value <= 1.0:
        raise argparse.ArgumentTypeError("budget must be a fraction in (0, 1]")
    return value


def _load_state(path):
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read state {path}: {exc.strerror}") from None
    return restore(data)


# -- commands ------------------------------------------------------------------

def cmd_init(args) -> int:
    ids = read_ids(args.samples)
    prior = None
    if args.prior:
        prior = read_vector(args.prior)
        if prior.size != args.classes:
            raise DataError(f"prior has {prior.size} entries, expected {args.classes}")
    store = new_store(args.classes, ids, prior)
    atomic_write(args.out, snapshot(store))
    log.info("initialised store: %d samples, K=%d", store.n, store.k)
    return 0


def cmd_ingest(args) -> int:
    if args.metrics_out and not args.truth:
        raise ArgError("--metrics-out needs --truth")
    store = _load_state(args.state)
    truth = read_truth(args.truth, store) if args.truth else None
    try:
        update = parse_update(args.update, truth)
        select = parse_selection(args.select)
    except DataError as exc:
        raise ArgError(str(exc)) from None
    batch = read_predictions(args.predictions, store, store.step)
    cm = load_cm(args.confusion, k=store.k)

    before = store.stored.copy()
    if not store.initialized:
        outcome = initialize_with(store, batch, cm)
        row = None
    else:
        budget = resolve_budget(args.budget, store.n)
        outcome = run_step(store, batch, cm, select, update, budget)
        row = store.step

    if args.metrics_out:
        missing = [s for s in store.sample_ids if s not in truth]
        if missing:
            raise DataError(f"truth has no label for sample {missing[0]!r}")
        t = np.array([truth[s] for s in store.sample_ids], dtype=np.int64)
        if row is None:
            m = initial_row(float(np.mean(store.stored == t)))
        else:
            m = step_metrics_arrays(before, store.stored, t, row)
        fresh = not os.path.exists(args.metrics_out) or os.path.getsize(args.metrics_out) == 0
        with open(args.metrics_out, "a", newline="") as fh:
            write_steps_csv(fh, [m], header=fresh)

    atomic_write(args.out or args.state, snapshot(store))
    log.info("step %d: re-evaluated %d samples, %d labels changed",
             store.step, len(outcome.selected), len(outcome.changed))
    return 0


def cmd_estimate(args) -> int:
    preds = read_label_csv(args.predictions)
    truth = read_label_csv(args.truth)
    if set(preds) != set(truth):
        raise DataError(f"predictions cover {len(preds)} samples, truth covers {len(truth)};"
                        " sample ids must match")
    keys = list(truth)
    p = [preds[s] for s in keys]
    t = [truth[s] for s in keys]
    est = estimate_diagonal if args.mode == "diagonal" else estimate_full_laplace
    save_cm(est(p, t, args.classes), args.out)
    return 0


def _slug(text: str) -> str:
    return text.replace(":", "").replace(".", "p")


def cmd_simulate(args) -> int:
    specs = load_scenarios(args.scenario)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data = prepare_scenario(specs[0])
    summary = io.StringIO()
    w = csv.writer(summary, lineterminator="\n")
    w.writerow(SUMMARY_HEADER)

    for spec in specs:
        tag = f"{_slug(spec.select_policy)}_b{100 * spec.budget_fraction:g}"
        entropies: list[str] = []

        def record(t, store, _buf=entropies):
            for sid, h in zip(store.sample_ids, store.entropy.tolist()):
                _buf.append(f"{t},{sid},{h!r}\n")

        def one(i_policy):
            i, policy = i_policy
            hook = record if i == 0 else None
            return run_policy(data, policy, spec.select_policy, spec.budget_fraction, hook)[0]

        jobs = max(1, args.jobs)
        items = list(enumerate(spec.update_policies))
        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                reports = list(pool.map(one, items))
        else:
            reports = [one(it) for it in items]

        for policy, report in zip(spec.update_policies, reports):
            upd = parse_update(policy, truth={})
            (out / f"metrics_{tag}_{_slug(policy_spelling(upd))}.csv").write_text(steps_csv(report))
            w.writerow(summary_row(upd.name, spec.select_policy, spec.budget_fraction, report))
        (out / f"entropy_{tag}.csv").write_text("step,sample_id,entropy\n" + "".join(entropies))

    (out / "summary.csv").write_text(summary.getvalue())
    if not args.quiet:
        sys.stdout.write(summary.getvalue())
    return 0


def cmd_metrics(args) -> int:
    with open(args.steps, newline="") as fh:
        initial, steps = read_steps_csv(fh)
    if initial is None:
        raise DataError(f"{args.steps}: no step-0 row with the initial accuracy")
    report = finalize(steps, initial, args.n, len(steps))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_HEADER)
    w.writerow(summary_row(args.name, args.selection, args.budget, report))
    if args.out:
        Path(args.out).write_text(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return 0


def cmd_export_entropy(args) -> int:
    store = _load_state(args.state)
    lines = ["sample_id,entropy,stored_label,eval_count\n"]
    for i in store.id_order:
        lines.append(f"{store.sample_ids[i]},{float(store.entropy[i])!r},"
                     f"{int(store.stored[i])},{int(store.eval_count[i])}\n")
    text = "".join(lines)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


# -- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="predupdate", description=(
        "Maintain Bayesian label posteriors for an unlabelled dataset as new "
        "classifiers arrive."))
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("init", help="create a new state file")
    s.add_argument("--classes", type=int, required=True)
    s.add_argument("--samples", required=True, help="file with one sample id per line")
    s.add_argument("--prior", help="K probabilities (default: uniform)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_init)

    s = sub.add_parser("ingest", help="apply one classifier's predictions")
    s.add_argument("--state", required=True)
    s.add_argument("--predictions", required=True, help=".csv hard labels or .jsonl soft labels")
    s.add_argument("--confusion", required=True)
    s.add_argument("--budget", type=_fraction, default=1.0, help="fraction of samples to re-evaluate")
    s.add_argument("--select", default="entropy", help="entropy | random:<seed>")
    s.add_argument("--update", default="mb", help="replace | majority | mb | mbme | cr:<ratio> | oracle")
    s.add_argument("--truth", help="ground-truth CSV, for metrics and the oracle")
    s.add_argument("--out", help="output state (default: overwrite --state)")
    s.add_argument("--metrics-out", help="append a step-metrics row to this CSV")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("estimate", help="estimate a confusion matrix")
    s.add_argument("--predictions", required=True)
    s.add_argument("--truth", required=True)
    s.add_argument("--classes", type=int, required=True)
    s.add_argument("--mode", choices=("diagonal", "laplace"), default="diagonal")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_estimate)

    s = sub.add_parser("simulate", help="run a synthetic scenario")
    s.add_argument("--scenario", required=True)
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("-q", "--quiet", action="store_true")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("metrics", help="summarise a step-metrics CSV")
    s.add_argument("--steps", required=True)
    s.add_argument("--n", type=int, required=True, help="number of samples")
    s.add_argument("--name", default="run")
    s.add_argument("--selection", default="entropy")
    s.add_argument("--budget", type=_fraction, default=1.0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_metrics)

    s = sub.add_parser("export-entropy", help="dump per-sample entropies from a state file")
    s.add_argument("--state", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_export_entropy)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    try:
        return args.func(args)
    except ArgError as exc:
        parser.error(str(exc))
    except DegenerateLikelihoodError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
