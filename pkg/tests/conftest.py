import numpy as np
import pytest

from predupdate.core import ConfusionMatrix, LabelStore


def random_cm(rng, k, floor=0.0):
    e = rng.dirichlet(np.ones(k), size=k).T + floor
    return ConfusionMatrix(e / e.sum(axis=0))


def random_store(rng, n, k, step=1):
    post = rng.dirichlet(np.full(k, 0.5), size=n)
    votes = rng.integers(0, 4, size=(n, k))
    return LabelStore(
        k, list(range(n)), post,
        stored=rng.integers(0, k, size=n),
        votes=votes,
        eval_count=votes.sum(axis=1),
        last_prediction=rng.integers(0, k, size=n),
        step=step,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    # one line per criterion; parametrised cases fold into their base test
    status = {}
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            if "test_acceptance.py" not in rep.nodeid:
                continue
            if outcome == "passed" and rep.when != "call":
                continue
            name = rep.nodeid.split("::")[-1].split("[")[0]
            if outcome != "passed" or name not in status:
                status[name] = "PASS" if outcome == "passed" else "FAIL"
    if status:
        terminalreporter.section("acceptance criteria")
        for name in sorted(status):
            terminalreporter.write_line(f"{status[name]}  {name}")
