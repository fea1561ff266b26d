import numpy as np
import pytest

from fraudlens._kernels import warm_up
from fraudlens.ingest import Dataset


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    # one-time numba compilation so timing-sensitive tests measure the
    # algorithms, not the JIT
    warm_up()


def make_dataset(rows, suspicion_dim=0):
    """Rows of (card, merchant, amount, ts[, label[, suspicion tuple]])."""
    cards, merchants, amounts, ts, labels, susp = [], [], [], [], [], []
    for row in rows:
        cards.append(row[0])
        merchants.append(row[1])
        amounts.append(row[2])
        ts.append(row[3])
        labels.append(row[4] if len(row) > 4 else "")
        susp.append(tuple(row[5]) if len(row) > 5 else (0,) * suspicion_dim)
    matrix = np.array(susp, dtype=np.int64).reshape(len(rows), suspicion_dim)
    return Dataset(cards, merchants, amounts, ts, matrix, labels)


def random_dataset(rng, max_cards=50, max_txns=500, suspicion_dim=0, label_frac=0.1):
    n = int(rng.integers(1, max_txns + 1))
    n_cards = int(rng.integers(1, max_cards + 1))
    n_merchants = int(rng.integers(1, 20))
    rows = []
    for _ in range(n):
        label = ""
        r = rng.random()
        if r < label_frac / 2:
            label = "fraud"
        elif r < label_frac:
            label = "honest"
        susp = tuple(int(v) for v in rng.integers(0, 3, suspicion_dim))
        rows.append(
            (
                f"c{int(rng.integers(0, n_cards)):03d}",
                f"m{int(rng.integers(0, n_merchants)):02d}",
                int(rng.integers(0, 10000)),
                int(rng.integers(0, 10**6)),
                label,
                susp,
            )
        )
    return make_dataset(rows, suspicion_dim=suspicion_dim)
