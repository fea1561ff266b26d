"""Unsupervised anomaly scoring, ranking metrics, and feature selection.

The isolation forest is built from scratch: axis-parallel random splits,
subsampled trees with depth cap ceil(log2(subsample_size)), and the
classic score 2^(-E[h]/c(n)). Trees live in flat arrays so the scoring
kernel can run compiled; all randomness is pre-drawn from numpy
generators, which makes fits bit-reproducible per seed on either kernel
backend.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from ._kernels import build_tree, forest_path_lengths

EULER_GAMMA = 0.5772156649015329


class EmptyMatrix(ValueError):
    pass


class InvalidParams(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


class NoPositives(ValueError):
    pass


class LengthMismatch(ValueError):
    pass


class KTooLarge(ValueError):
    pass


def c_factor(s: int) -> float:
    """Average unsuccessful-search path length in a BST of s points."""
    if s <= 1:
        return 0.0
    if s == 2:
        return 1.0
    h = math.log(s - 1) + EULER_GAMMA
    return 2.0 * h - 2.0 * (s - 1) / s


@dataclass(frozen=True)
class IsolationForestModel:
    """Forest of random partition trees in flattened preorder arrays.

    Node j is internal iff left[j] >= 0; leaves carry the training sample
    count that reached them (`size`) and its path-length adjustment
    (`c_leaf`). Immutable after fit; scoring is pure.
    """

    n_trees: int
    subsample_size: int
    max_depth: int
    n_features: int
    seed: int
    feat: np.ndarray
    thresh: np.ndarray
    left: np.ndarray
    right: np.ndarray
    size: np.ndarray
    roots: np.ndarray
    c_leaf: np.ndarray

    def tree_slice(self, t: int) -> slice:
        end = self.roots[t + 1] if t + 1 < self.n_trees else len(self.feat)
        return slice(int(self.roots[t]), int(end))

    def path_lengths(self, X: np.ndarray) -> np.ndarray:
        X = _as_matrix(X)
        if X.shape[1] != self.n_features:
            raise DimensionMismatch(
                f"model expects {self.n_features} features, got {X.shape[1]}"
            )
        return forest_path_lengths(
            X, self.feat, self.thresh, self.left, self.right, self.c_leaf, self.roots
        )

    def scores(self, X: np.ndarray) -> np.ndarray:
        """Anomaly scores in (0, 1); higher means easier to isolate."""
        e_h = self.path_lengths(X)
        return np.power(2.0, -e_h / c_factor(self.subsample_size))


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    return np.ascontiguousarray(X)


def fit(
    X: np.ndarray,
    n_trees: int = 100,
    subsample_size: int = 256,
    seed: int = 0,
) -> IsolationForestModel:
    """Grow an isolation forest; deterministic per seed."""
    X = _as_matrix(X)
    if X.size == 0:
        raise EmptyMatrix("cannot fit on an empty matrix")
    n, d = X.shape
    if n_trees < 1:
        raise InvalidParams("n_trees must be >= 1")
    if not 2 <= subsample_size <= n:
        raise InvalidParams(
            f"subsample_size must be in [2, {n}], got {subsample_size}"
        )
    max_depth = int(math.ceil(math.log2(subsample_size)))

    cap = 4 * subsample_size + 64
    feats, threshs, lefts, rights, sizes, roots = [], [], [], [], [], []
    offset = 0
    children = np.random.SeedSequence(seed).spawn(n_trees)
    for t in range(n_trees):
        rng = np.random.Generator(np.random.PCG64(children[t]))
        idx = rng.choice(n, size=subsample_size, replace=False).astype(np.int64)
        u_feat = rng.random(cap)
        u_split = rng.random(cap)
        feat = np.full(cap, -1, np.int64)
        thresh = np.zeros(cap, np.float64)
        left = np.full(cap, -1, np.int64)
        right = np.full(cap, -1, np.int64)
        size = np.zeros(cap, np.int64)
        used = build_tree(X, idx, max_depth, u_feat, u_split,
                          feat, thresh, left, right, size)
        internal = left[:used] >= 0
        feats.append(feat[:used])
        threshs.append(thresh[:used])
        lefts.append(np.where(internal, left[:used] + offset, -1))
        rights.append(np.where(internal, right[:used] + offset, -1))
        sizes.append(size[:used])
        roots.append(offset)
        offset += used

    size_all = np.concatenate(sizes)
    c_leaf = np.array([c_factor(int(s)) for s in size_all], np.float64)
    left_all = np.concatenate(lefts)
    c_leaf[left_all >= 0] = 0.0
    return IsolationForestModel(
        n_trees=n_trees,
        subsample_size=subsample_size,
        max_depth=max_depth,
        n_features=d,
        seed=seed,
        feat=np.concatenate(feats),
        thresh=np.concatenate(threshs),
        left=left_all,
        right=np.concatenate(rights),
        size=size_all,
        roots=np.array(roots, np.int64),
        c_leaf=c_leaf,
    )


def score(model: IsolationForestModel, rows: np.ndarray) -> np.ndarray:
    """Anomaly score of each row under a fitted model."""
    return model.scores(rows)


def _positives(labels) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.dtype == bool:
        return labels
    return np.array([v in ("fraud", True, 1) for v in labels], bool)


def average_precision(scores, labels) -> float:
    """Mean of precision at each positive's rank, descending by score.

    Ties keep input order (stable sort), so equal scores rank earlier
    items first.
    """
    scores = np.asarray(scores, np.float64)
    pos = _positives(labels)
    if len(scores) != len(pos):
        raise LengthMismatch(f"{len(scores)} scores vs {len(pos)} labels")
    if not pos.any():
        raise NoPositives("no positive labels")
    order = np.argsort(-scores, kind="stable")
    hits = pos[order]
    ranks = np.flatnonzero(hits) + 1
    cum_pos = np.arange(1, len(ranks) + 1)
    return float(np.mean(cum_pos / ranks))


def precision_at_k(scores, labels, k: int) -> float:
    """Fraction of positives among the k highest-scored items."""
    scores = np.asarray(scores, np.float64)
    pos = _positives(labels)
    if len(scores) != len(pos):
        raise LengthMismatch(f"{len(scores)} scores vs {len(pos)} labels")
    if k < 1:
        raise KTooLarge("k must be >= 1")
    if k > len(scores):
        raise KTooLarge(f"k={k} exceeds {len(scores)} items")
    order = np.argsort(-scores, kind="stable")[:k]
    return float(pos[order].mean())


def _fold_assignment(pos: np.ndarray, n_folds: int, rng) -> np.ndarray:
    """Stratified folds: positives spread evenly to tame CV variance."""
    fold = np.empty(len(pos), np.int64)
    pos_idx = np.flatnonzero(pos)
    neg_idx = np.flatnonzero(~pos)
    fold[pos_idx[rng.permutation(len(pos_idx))]] = np.arange(len(pos_idx)) % n_folds
    fold[neg_idx[rng.permutation(len(neg_idx))]] = np.arange(len(neg_idx)) % n_folds
    return fold


def _cv_ap(X, pos, fold, n_folds, n_trees, subsample_size, fit_seeds) -> float:
    """Mean AP over folds and forest seeds (repeated CV steadies the greedy)."""
    aps = []
    for f in range(n_folds):
        test = fold == f
        train = ~test
        if not pos[test].any() or train.sum() < 2:
            continue
        ssize = min(subsample_size, int(train.sum()))
        for r in range(fit_seeds.shape[1]):
            model = fit(X[train], n_trees=n_trees, subsample_size=ssize,
                        seed=int(fit_seeds[f, r]))
            aps.append(average_precision(model.scores(X[test]), pos[test]))
    return float(np.mean(aps)) if aps else 0.0


def forward_select(
    columns: Mapping[str, np.ndarray],
    labels,
    candidates: Sequence[str],
    max_k: int,
    n_trees: int = 100,
    subsample_size: int = 256,
    n_folds: int = 3,
    eps: float = 1e-3,
    seed: int = 0,
    cv_repeats: int = 2,
) -> list[tuple[str, float]]:
    """Greedy forward selection maximizing cross-validated ranking AP.

    At each step the candidate with the best CV average precision joins
    the set (name order breaks ties); the gain test compares against the
    selected set re-evaluated under the same step seeds, so forest noise
    largely cancels. Selection stops at `max_k` features or, after the
    first pick, when the best gain is at most `eps`. The returned growth
    curve lists (feature, AP after adding it) per step.
    """
    candidates = sorted(candidates)
    if max_k > len(candidates):
        raise InvalidParams(f"max_k={max_k} exceeds {len(candidates)} candidates")
    pos = _positives(labels)
    if not pos.any():
        raise NoPositives("no positive labels")
    rng = np.random.Generator(np.random.PCG64(seed))
    fold = _fold_assignment(pos, n_folds, rng)

    selected: list[str] = []
    curve: list[tuple[str, float]] = []
    remaining = list(candidates)
    for step in range(max_k):
        fit_seeds = np.random.SeedSequence(seed, spawn_key=(step,)).generate_state(
            n_folds * cv_repeats
        ).reshape(n_folds, cv_repeats)
        # baseline under this step's seeds so the gain test is paired
        if selected:
            base = np.column_stack(
                [np.asarray(columns[c], np.float64) for c in selected]
            )
            base_ap = _cv_ap(base, pos, fold, n_folds, n_trees, subsample_size, fit_seeds)
        else:
            base_ap = 0.0
        best_name = None
        best_ap = -1.0
        for name in remaining:
            X = np.column_stack(
                [np.asarray(columns[c], np.float64) for c in selected + [name]]
            )
            ap = _cv_ap(X, pos, fold, n_folds, n_trees, subsample_size, fit_seeds)
            if ap > best_ap:
                best_ap = ap
                best_name = name
        if best_name is None:
            break
        if step > 0 and best_ap - base_ap <= eps:
            break
        selected.append(best_name)
        remaining.remove(best_name)
        curve.append((best_name, best_ap))
    return curve
