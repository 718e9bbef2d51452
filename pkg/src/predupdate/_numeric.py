import numpy as np


def row_entropy(p: np.ndarray) -> np.ndarray:
    """Shannon entropy in nats of each row of ``p``, with 0 log 0 = 0."""
    p = np.asarray(p, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0.0, p * np.log(p), 0.0)
    h = -terms.sum(axis=-1)
    # -0.0 and tiny negative round-off from p == 1 rows
    return np.maximum(h, 0.0)


def first_argmax(p: np.ndarray) -> np.ndarray:
    # np.argmax already returns the first maximal index
    return np.argmax(p, axis=-1)
