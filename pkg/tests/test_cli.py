import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from predupdate.cli import main
from predupdate.confusion import load_cm, save_cm
from predupdate.core import ConfusionMatrix, restore

ROOT = Path(__file__).resolve().parents[1]


def run(*argv):
    try:
        return main([str(a) for a in argv])
    except SystemExit as exc:
        return exc.code


def write_lines(path, lines):
    path.write_text("".join(f"{x}\n" for x in lines))
    return path


def labels_csv(path, mapping):
    return write_lines(path, ["sample_id,label"] + [f"{s},{v}" for s, v in mapping.items()])


@pytest.fixture
def workspace(tmp_path):
    rng = np.random.default_rng(3)
    n, k = 1000, 4
    write_lines(tmp_path / "ids.csv", range(n))
    truth = rng.integers(0, k, n)
    labels_csv(tmp_path / "truth.csv", dict(enumerate(truth.tolist())))
    for t, acc in enumerate((0.6, 0.8)):
        noisy = np.where(rng.random(n) < acc, truth, rng.integers(0, k, n))
        labels_csv(tmp_path / f"pred{t}.csv", dict(enumerate(noisy.tolist())))
        save_cm(ConfusionMatrix.uniform_accuracy(k, acc), tmp_path / f"cm{t}.csv")
    assert run("init", "--classes", k, "--samples", tmp_path / "ids.csv",
               "--out", tmp_path / "state") == 0
    return tmp_path


def test_init_rejects_duplicate_id(tmp_path, capsys):
    write_lines(tmp_path / "ids.csv", ["a", "b", "a"])
    code = run("init", "--classes", 3, "--samples", tmp_path / "ids.csv", "--out", tmp_path / "s")
    assert code == 3
    assert "'a'" in capsys.readouterr().err
    assert not (tmp_path / "s").exists()


def test_init_rejects_short_prior(tmp_path, capsys):
    write_lines(tmp_path / "ids.csv", range(5))
    write_lines(tmp_path / "prior.csv", [0.1] * 9)
    code = run("init", "--classes", 10, "--samples", tmp_path / "ids.csv",
               "--prior", tmp_path / "prior.csv", "--out", tmp_path / "s")
    assert code == 3
    assert "9 entries" in capsys.readouterr().err


def test_init_writes_loadable_state(workspace):
    store = restore((workspace / "state").read_bytes())
    assert store.n == 1000 and store.k == 4 and store.step == 0


def _ingest(ws, t, *extra):
    return run("ingest", "--state", ws / "state", "--predictions", ws / f"pred{t}.csv",
               "--confusion", ws / f"cm{t}.csv", *extra)


def test_ingest_budget_reevaluates_exactly_floor(workspace):
    ws = workspace
    metrics = ws / "m.csv"
    assert _ingest(ws, 0, "--truth", ws / "truth.csv", "--metrics-out", metrics) == 0
    first = restore((ws / "state").read_bytes())
    assert first.step == 0 and np.all(first.eval_count == 1)
    assert _ingest(ws, 1, "--update", "mb", "--select", "entropy", "--budget", "0.1",
                   "--truth", ws / "truth.csv", "--metrics-out", metrics) == 0
    store = restore((ws / "state").read_bytes())
    assert store.step == 1
    assert int(np.count_nonzero(store.eval_count == 2)) == 100
    rows = metrics.read_text().splitlines()
    assert rows[0].startswith("step,accuracy") and len(rows) == 3
    assert rows[1].split(",")[0] == "0" and rows[2].split(",")[0] == "1"
    assert run("metrics", "--steps", metrics, "--n", 1000, "--out", ws / "sum.csv") == 0
    assert (ws / "sum.csv").read_text().splitlines()[0].startswith("strategy,selection")


def test_ingest_argument_errors(workspace):
    ws = workspace
    before = (ws / "state").read_bytes()
    assert _ingest(ws, 0) == 0
    assert _ingest(ws, 1, "--update", "cr:0") == 2
    assert _ingest(ws, 1, "--update", "oracle") == 2
    assert _ingest(ws, 1, "--budget", "1.5") == 2
    assert _ingest(ws, 1, "--metrics-out", ws / "m.csv") == 2
    assert _ingest(ws, 1, "--update", "cr:10", "--out", ws / "next") == 0
    assert (ws / "state").read_bytes() != before
    assert restore((ws / "next").read_bytes()).step == 1


def test_ingest_failure_leaves_state_intact(workspace):
    ws = workspace
    assert _ingest(ws, 0) == 0
    before = (ws / "state").read_bytes()
    labels_csv(ws / "bad.csv", {0: 1})
    code = run("ingest", "--state", ws / "state", "--predictions", ws / "bad.csv",
               "--confusion", ws / "cm1.csv", "--budget", "1.0")
    assert code == 3
    assert (ws / "state").read_bytes() == before
    assert not [p for p in ws.iterdir() if p.name.endswith(".tmp")]


def test_ingest_soft_labels(tmp_path):
    write_lines(tmp_path / "ids.csv", ["x", "y"])
    run("init", "--classes", 2, "--samples", tmp_path / "ids.csv", "--out", tmp_path / "s")
    save_cm(ConfusionMatrix.uniform_accuracy(2, 0.9), tmp_path / "cm.csv")
    with open(tmp_path / "p.jsonl", "w") as fh:
        fh.write(json.dumps({"sample_id": "x", "probs": [0.2, 0.8]}) + "\n")
        fh.write(json.dumps({"sample_id": "y", "probs": [1.0, 0.0]}) + "\n")
    assert run("ingest", "--state", tmp_path / "s", "--predictions", tmp_path / "p.jsonl",
               "--confusion", tmp_path / "cm.csv") == 0
    store = restore((tmp_path / "s").read_bytes())
    assert store.stored_labels() == {"x": 1, "y": 0}
    np.testing.assert_allclose(store.record("x").posterior, [0.26, 0.74])


def test_ingest_degenerate_likelihood_exit_code(tmp_path):
    write_lines(tmp_path / "ids.csv", [0])
    run("init", "--classes", 2, "--samples", tmp_path / "ids.csv", "--out", tmp_path / "s")
    save_cm(ConfusionMatrix(np.eye(2)), tmp_path / "eye.csv")
    labels_csv(tmp_path / "p0.csv", {0: 0})
    labels_csv(tmp_path / "p1.csv", {0: 1})
    base = ("ingest", "--state", tmp_path / "s", "--confusion", tmp_path / "eye.csv")
    assert run(*base, "--predictions", tmp_path / "p0.csv") == 0
    assert run(*base, "--predictions", tmp_path / "p1.csv") == 4


def test_estimate_modes(tmp_path):
    labels_csv(tmp_path / "t.csv", {0: 0, 1: 0, 2: 1, 3: 1})
    labels_csv(tmp_path / "p.csv", {0: 0, 1: 1, 2: 1, 3: 1})
    common = ("estimate", "--predictions", tmp_path / "p.csv", "--truth", tmp_path / "t.csv",
              "--classes", 2)
    assert run(*common, "--mode", "diagonal", "--out", tmp_path / "d.csv") == 0
    d = load_cm(tmp_path / "d.csv").entries
    np.testing.assert_allclose(d[:, 0], [0.5, 0.5], atol=1e-12)
    np.testing.assert_allclose(d[:, 1], [1e-6, 1 - 1e-6], atol=1e-12)
    assert run(*common, "--mode", "laplace", "--out", tmp_path / "l.csv") == 0
    np.testing.assert_allclose(load_cm(tmp_path / "l.csv").entries[:, 1], [0.25, 0.75], atol=1e-12)


def test_estimate_label_out_of_range(tmp_path, capsys):
    labels_csv(tmp_path / "t.csv", {0: 0, 1: 1})
    labels_csv(tmp_path / "p.csv", {0: 5, 1: 1})
    code = run("estimate", "--predictions", tmp_path / "p.csv", "--truth", tmp_path / "t.csv",
               "--classes", 2, "--out", tmp_path / "o.csv")
    assert code == 3
    assert "range" in capsys.readouterr().err


def test_export_entropy(workspace, capsys):
    assert _ingest(workspace, 0) == 0
    capsys.readouterr()
    assert run("export-entropy", "--state", workspace / "state") == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "sample_id,entropy,stored_label,eval_count"
    assert len(lines) == 1001 and lines[1].startswith("0,")


SMALL = """\
k: 4
n_samples: 300
classifiers: [0.5, 0.6, 0.7, 0.8]
budget_fraction: [0.1, 1.0]
select_policy: [entropy, 'random:1']
update_policies: [oracle, replace, mb, 'cr:5']
seed: 2
"""


def test_simulate_outputs(tmp_path, capsys):
    (tmp_path / "s.yaml").write_text(SMALL)
    assert run("simulate", "--scenario", tmp_path / "s.yaml", "--out", tmp_path / "o") == 0
    summary = (tmp_path / "o" / "summary.csv").read_text()
    assert capsys.readouterr().out == summary
    rows = [r.split(",") for r in summary.splitlines()]
    assert rows[0] == ["strategy", "selection", "budget", "avg_btc", "avg_bec", "acc",
                       "delta_acc", "sum_nf", "nfr", "pf_nf"]
    assert len(rows) == 1 + 4 * 4
    oracle = [r for r in rows if r[0] == "Oracle"]
    assert oracle and all(r[7] == "0" and r[9] == "-" for r in oracle)
    names = sorted(p.name for p in (tmp_path / "o").iterdir())
    assert "metrics_entropy_b10_cr5.csv" in names and "entropy_random1_b100.csv" in names
    ent = (tmp_path / "o" / "entropy_entropy_b10.csv").read_text().splitlines()
    assert ent[0] == "step,sample_id,entropy" and len(ent) == 1 + 4 * 300


def test_simulate_repeatable(tmp_path):
    (tmp_path / "s.yaml").write_text(SMALL)
    outs = []
    for i, jobs in enumerate((1, 1, 3)):
        out = tmp_path / f"o{i}"
        assert run("simulate", "--scenario", tmp_path / "s.yaml", "--out", out, "-q",
                   "--jobs", jobs) == 0
        outs.append({p.name: p.read_bytes() for p in out.iterdir()})
    assert outs[0] == outs[1] == outs[2]


def test_simulate_bad_scenario(tmp_path):
    (tmp_path / "s.yaml").write_text("k: 3\nn_samples: 10\nclassifiers: [0.5]\n")
    assert run("simulate", "--scenario", tmp_path / "s.yaml", "--out", tmp_path / "o") == 3


def test_reference_selection_sweep(tmp_path):
    out = tmp_path / "ref"
    assert run("simulate", "--scenario", ROOT / "scenarios" / "reference.yaml",
               "--out", out, "-q") == 0
    rows = {(r[0], r[1], r[2]): r for r in
            (line.split(",") for line in (out / "summary.csv").read_text().splitlines()[1:])}
    # high cost ratios can stall under entropy selection, so only the permissive rules
    for policy in ("Replace", "Majority Vote", "MB", "MBME"):
        assert float(rows[(policy, "random:1", "10")][6]) < float(rows[(policy, "entropy", "10")][6])


def test_console_script_exit_codes(tmp_path):
    cmd = [sys.executable, "-m", "predupdate.cli"]
    r = subprocess.run(cmd + ["--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.strip()
    r = subprocess.run(cmd + ["ingest"], capture_output=True, text=True)
    assert r.returncode == 2
