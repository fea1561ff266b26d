"""The numba kernels and their vectorized numpy twins must agree exactly."""

import numpy as np
import pytest

from fraudlens import _kernels as K
from fraudlens._accel import HAVE_NUMBA, backend, set_backend

pytestmark = pytest.mark.skipif(not HAVE_NUMBA, reason="numba unavailable")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def grouped_columns(rng, n_groups=300):
    sizes = rng.integers(1, 40, n_groups)
    starts = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    n = int(starts[-1])
    ts = np.empty(n, np.int64)
    for g in range(n_groups):
        s, e = starts[g], starts[g + 1]
        ts[s:e] = np.sort(rng.integers(0, 10**6, e - s))
    amounts = rng.integers(1, 2000, n)
    merchants = rng.integers(0, 25, n)
    return starts, ts, amounts, merchants


def test_group_stats_flavors_agree(rng):
    starts, ts, amounts, merchants = grouped_columns(rng)
    nb = K._group_stats_nb(starts, ts, amounts, merchants)
    np_ = K._group_stats_np(starts, ts, amounts, merchants)
    for a, b in zip(nb, np_):
        if a.dtype.kind == "f":
            assert np.allclose(a, b, rtol=1e-12, atol=1e-12)
        else:
            assert np.array_equal(a, b)


def test_hist2d_flavors_agree(rng):
    ux = rng.random(20000) * 4.3
    uy = rng.random(20000) * 1.7
    a = K._hist2d_nb(ux, uy, 32, 24, 4.3, 1.7)
    b = K._hist2d_np(ux, uy, 32, 24, 4.3, 1.7)
    assert np.array_equal(a, b)
    assert a.sum() == 20000


def random_csr(rng, n_nodes=60, n_edges=200):
    adj = [set() for _ in range(n_nodes)]
    for _ in range(n_edges):
        u, v = rng.integers(0, n_nodes, 2)
        if u != v:
            adj[int(u)].add(int(v))
            adj[int(v)].add(int(u))
    indptr = np.concatenate([[0], np.cumsum([len(a) for a in adj])]).astype(np.int64)
    if indptr[-1]:
        indices = np.concatenate([sorted(a) for a in adj if a]).astype(np.int64)
    else:
        indices = np.zeros(0, np.int64)
    return indptr, indices


def test_core_numbers_flavors_agree(rng):
    for _ in range(20):
        indptr, indices = random_csr(rng)
        a = K._core_numbers_nb(indptr, indices)
        b = K._core_numbers_impl(indptr, indices)
        assert np.array_equal(a, b)


def test_tree_build_and_scoring_flavors_agree(rng):
    X = rng.normal(0, 1, (500, 5))
    idx = rng.choice(500, 256, replace=False).astype(np.int64)
    uf, us = rng.random(1100), rng.random(1100)

    def build(flavor):
        cap = 1100
        feat = np.full(cap, -1, np.int64)
        thresh = np.zeros(cap)
        left = np.full(cap, -1, np.int64)
        right = np.full(cap, -1, np.int64)
        size = np.zeros(cap, np.int64)
        used = flavor(X, idx.copy(), 8, uf, us, feat, thresh, left, right, size)
        return used, feat[:used], thresh[:used], left[:used], right[:used], size[:used]

    a = build(K._build_tree_nb)
    b = build(K._build_tree_impl)
    assert a[0] == b[0]
    for p, q in zip(a[1:], b[1:]):
        assert np.array_equal(p, q)

    used, feat, thresh, left, right, size = a
    c_leaf = np.where(left < 0, np.log1p(size.astype(float)), 0.0)
    roots = np.array([0], np.int64)
    pa = K._path_lengths_nb(X, feat, thresh, left, right, c_leaf, roots)
    pb = K._path_lengths_np(X, feat, thresh, left, right, c_leaf, roots)
    assert np.allclose(pa, pb, rtol=1e-13, atol=0)


def test_backend_switch_round_trip():
    original = backend()
    try:
        set_backend("numpy")
        assert backend() == "numpy"
        set_backend("numba")
        assert backend() == "numba"
    finally:
        set_backend(original)
    with pytest.raises(ValueError):
        set_backend("cuda")


def test_extract_features_identical_across_backends(rng):
    from fraudlens.features import extract_features
    from conftest import random_dataset

    d = random_dataset(rng, max_cards=30, max_txns=400)
    original = backend()
    try:
        set_backend("numba")
        a = extract_features(d)
        set_backend("numpy")
        b = extract_features(d)
    finally:
        set_backend(original)
    assert np.array_equal(a.card_ids, b.card_ids)
    for name in a.columns:
        col_a, col_b = a.column(name), b.column(name)
        if col_a.dtype.kind == "f":
            assert np.allclose(col_a, col_b, rtol=1e-12, atol=1e-12)
        else:
            assert np.array_equal(col_a, col_b)
