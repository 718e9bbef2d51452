import numpy as np
import pytest

from predupdate.confusion import (
    CLAMP,
    estimate_diagonal,
    estimate_full_laplace,
    load_cm,
    save_cm,
)
from predupdate.core import ConfusionMatrix
from predupdate.errors import DataError

from conftest import random_cm

TRUTHS = [0, 0, 1, 1]
PREDS = [0, 1, 1, 1]


def test_diagonal_toy():
    cm = estimate_diagonal(PREDS, TRUTHS, 2)
    np.testing.assert_allclose(np.diag(cm.entries), [0.5, 1 - CLAMP])
    np.testing.assert_allclose(cm.entries[:, 0], [0.5, 0.5])
    np.testing.assert_allclose(cm.entries[:, 1], [CLAMP, 1 - CLAMP], rtol=1e-9)


def test_diagonal_perfect_predictor_is_clamped():
    t = [0, 1, 2] * 5
    cm = estimate_diagonal(t, t, 3)
    np.testing.assert_allclose(np.diag(cm.entries), 1 - CLAMP)
    off = cm.entries[~np.eye(3, dtype=bool)]
    np.testing.assert_allclose(off, CLAMP / 2, rtol=1e-9)


def test_diagonal_zero_support_column_is_uniform():
    cm = estimate_diagonal([0, 1, 1, 0], [0, 1, 0, 1], 3)
    np.testing.assert_allclose(cm.entries[:, 2], 1 / 3, atol=1e-15)


def test_diagonal_equals_empirical_accuracy(rng):
    t = rng.integers(0, 4, size=400)
    p = np.where(rng.random(400) < 0.6, t, rng.integers(0, 4, size=400))
    cm = estimate_diagonal(p, t, 4)
    for k in range(4):
        assert cm.entries[k, k] == np.mean(p[t == k] == k)


def test_laplace_toy():
    cm = estimate_full_laplace(PREDS, TRUTHS, 2)
    np.testing.assert_allclose(cm.entries[:, 0], [2 / 4, 2 / 4])
    np.testing.assert_allclose(cm.entries[:, 1], [1 / 4, 3 / 4])


def test_laplace_empty_support():
    cm = estimate_full_laplace([0, 1], [0, 0], 2)
    np.testing.assert_allclose(cm.entries[:, 1], [0.5, 0.5])


def test_laplace_constant_predictor():
    cm = estimate_full_laplace([0, 0, 0, 0], [0, 0, 1, 1], 2)
    np.testing.assert_allclose(cm.entries[:, 0], [3 / 4, 1 / 4])
    np.testing.assert_allclose(cm.entries[:, 1], [3 / 4, 1 / 4])


@pytest.mark.parametrize("est", [estimate_diagonal, estimate_full_laplace])
def test_estimators_positive_and_stochastic(rng, est):
    for _ in range(50):
        k = int(rng.integers(2, 9))
        n = int(rng.integers(1, 60))
        cm = est(rng.integers(0, k, n), rng.integers(0, k, n), k)
        assert cm.entries.min() > 0
        np.testing.assert_allclose(cm.entries.sum(axis=0), 1.0, atol=1e-9)


@pytest.mark.parametrize("est", [estimate_diagonal, estimate_full_laplace])
@pytest.mark.parametrize("preds, truths, k", [
    ([], [], 2),
    ([0, 1], [0], 2),
    ([0, 2], [0, 1], 2),
    ([0, 1], [0, -1], 2),
])
def test_estimators_reject(est, preds, truths, k):
    with pytest.raises(DataError):
        est(preds, truths, k)


def test_laplace_converges(rng):
    k = 4
    true = random_cm(rng, k, floor=0.05)
    n = 20_000
    truths = np.repeat(np.arange(k), n)
    preds = np.concatenate([rng.choice(k, size=n, p=true.entries[:, c]) for c in range(k)])
    est = estimate_full_laplace(preds, truths, k)
    assert np.abs(est.entries - true.entries).max() < 0.02


def test_save_load_roundtrip(tmp_path, rng):
    cm = random_cm(rng, 5)
    save_cm(cm, tmp_path / "cm.csv")
    back = load_cm(tmp_path / "cm.csv", k=5)
    np.testing.assert_allclose(back.entries, cm.entries, atol=1e-12)


def test_load_dimension_errors(tmp_path):
    f = tmp_path / "cm.csv"
    f.write_text("0.5,0.5\n0.25,0.25\n0.25,0.25\n")
    with pytest.raises(DataError):
        load_cm(f, k=3)
    f.write_text("0.5,0.5\n0.5,0.5\n")
    with pytest.raises(DataError):
        load_cm(f, k=3)


def test_load_non_stochastic(tmp_path):
    f = tmp_path / "cm.csv"
    f.write_text("0.80,0.5\n0.10,0.5\n")
    with pytest.raises(DataError, match="column 0"):
        load_cm(f)


def test_load_renormalises_within_tolerance(tmp_path):
    f = tmp_path / "cm.csv"
    f.write_text("0.9000004,0.1\n0.1,0.9\n")
    cm = load_cm(f)
    np.testing.assert_allclose(cm.entries.sum(axis=0), 1.0, atol=1e-15)


def test_load_unparsable(tmp_path):
    f = tmp_path / "cm.csv"
    f.write_text("0.9,x\n0.1,0.9\n")
    with pytest.raises(DataError, match="unparsable"):
        load_cm(f)


def test_confusion_matrix_is_read_only(rng):
    cm = random_cm(rng, 3)
    assert isinstance(cm, ConfusionMatrix)
    with pytest.raises(ValueError):
        cm.entries[0, 0] = 1.0
