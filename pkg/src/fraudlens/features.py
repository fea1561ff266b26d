"""Per-card lockstep feature extraction, single pass and linear time.

Each card is summarized by counts of repetition (distinct inter-arrival
times, distinct amounts), robust amount statistics, counterparty fanout,
and night-time activity. Inter-arrival times are whole-second differences
of consecutive time-ordered txns; repetition at human scales is the
signal, so sub-second noise never enters the counts.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from ._kernels import group_stats
from .ingest import Dataset, factorize


class UnknownFeature(KeyError):
    """Requested feature column does not exist."""


class EmptyInput(ValueError):
    """Operation requires at least one value."""


FEATURE_COLUMNS = (
    "n_txns",
    "n_distinct_iat",
    "n_distinct_amounts",
    "median_amount_cents",
    "median_iat_s",
    "variance_iat_s2",
    "variance_amount",
    "n_merchants",
    "fraction_night",
)

_INT_COLUMNS = frozenset(
    ("n_txns", "n_distinct_iat", "n_distinct_amounts", "median_amount_cents",
     "median_iat_s", "n_merchants")
)


@dataclass(frozen=True)
class CardFeatures:
    card_id: str
    n_txns: int
    n_distinct_iat: int
    n_distinct_amounts: int
    median_amount_cents: int
    median_iat_s: int
    variance_iat_s2: float
    variance_amount: float
    n_merchants: int
    fraction_night: float


class FeatureTable:
    """One row per card, stored column-wise; rows sorted by card id.

    Immutable and shareable; column access by feature name raises
    UnknownFeature for anything not in FEATURE_COLUMNS.
    """

    def __init__(self, card_ids: np.ndarray, columns: dict[str, np.ndarray]):
        self.card_ids = np.asarray(card_ids, dtype=object)
        self._columns = columns
        self._index: dict[str, int] | None = None
        for name in FEATURE_COLUMNS:
            if name not in columns:
                raise ValueError(f"missing feature column {name}")
            if len(columns[name]) != len(self.card_ids):
                raise ValueError(f"column {name} length mismatch")

    def __len__(self) -> int:
        return len(self.card_ids)

    def column(self, name: str) -> np.ndarray:
        try:
            return self._columns[name]
        except KeyError:
            raise UnknownFeature(name) from None

    @property
    def columns(self) -> dict[str, np.ndarray]:
        return dict(self._columns)

    def index_of(self, card_id: str) -> int:
        if self._index is None:
            self._index = {c: i for i, c in enumerate(self.card_ids)}
        try:
            return self._index[card_id]
        except KeyError:
            raise KeyError(f"unknown card {card_id!r}") from None

    def row(self, i: int) -> CardFeatures:
        return CardFeatures(
            card_id=self.card_ids[i],
            **{
                name: (int if name in _INT_COLUMNS else float)(self._columns[name][i])
                for name in FEATURE_COLUMNS
            },
        )

    def get(self, card_id: str) -> CardFeatures:
        return self.row(self.index_of(card_id))

    def __iter__(self) -> Iterator[CardFeatures]:
        for i in range(len(self)):
            yield self.row(i)

    def matrix(self, names: Sequence[str]) -> np.ndarray:
        """Float matrix of the named columns, one card per row."""
        return np.column_stack([self.column(n).astype(np.float64) for n in names])

    def to_csv(self, path: str) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write("card_id," + ",".join(FEATURE_COLUMNS) + "\n")
            cols = [self._columns[n] for n in FEATURE_COLUMNS]
            ints = [n in _INT_COLUMNS for n in FEATURE_COLUMNS]
            for i in range(len(self)):
                vals = [
                    str(int(col[i])) if is_int else repr(float(col[i]))
                    for col, is_int in zip(cols, ints)
                ]
                fh.write(self.card_ids[i] + "," + ",".join(vals) + "\n")

    @staticmethod
    def from_csv(path: str) -> "FeatureTable":
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline().rstrip("\n").split(",")
            if header != ["card_id", *FEATURE_COLUMNS]:
                raise ValueError(f"unexpected feature CSV header in {path}")
            cards = []
            raw: list[list[str]] = [[] for _ in FEATURE_COLUMNS]
            for line in fh:
                parts = line.rstrip("\n").split(",")
                cards.append(parts[0])
                for k, v in enumerate(parts[1:]):
                    raw[k].append(v)
        columns = {}
        for k, name in enumerate(FEATURE_COLUMNS):
            dtype = np.int64 if name in _INT_COLUMNS else np.float64
            columns[name] = np.array(raw[k], dtype=dtype)
        return FeatureTable(np.array(cards, dtype=object), columns)


def sorted_card_view(d: Dataset):
    """Rows reordered by (card, timestamp), ties by ingestion order.

    Returns (order, codes_sorted, starts, card_tokens, merchant_codes_sorted,
    merchant_tokens); shared by feature extraction and dashboard assembly.
    """
    card_codes, card_tokens = d.card_codes()
    merchant_codes, merchant_tokens = d.merchant_codes()
    order = np.lexsort((d.timestamps, card_codes))
    codes_sorted = card_codes[order]
    counts = np.bincount(card_codes, minlength=len(card_tokens))
    starts = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    return order, codes_sorted, starts, card_tokens, merchant_codes[order], merchant_tokens


def extract_features(d: Dataset) -> FeatureTable:
    """FeatureTable with one row per distinct card, in card-id order."""
    if len(d) == 0:
        empty = {
            name: np.zeros(0, np.int64 if name in _INT_COLUMNS else np.float64)
            for name in FEATURE_COLUMNS
        }
        return FeatureTable(np.zeros(0, dtype=object), empty)

    order, _, starts, card_tokens, merchants_sorted, _ = sorted_card_view(d)
    ts_sorted = d.timestamps[order]
    amounts_sorted = d.amount_cents[order]

    (n_txns, n_distinct_iat, n_distinct_amt, median_amt, median_iat,
     var_iat, var_amt, n_merchants, night_frac) = group_stats(
        starts, ts_sorted, amounts_sorted, merchants_sorted
    )

    columns = {
        "n_txns": n_txns.astype(np.int64),
        "n_distinct_iat": n_distinct_iat.astype(np.int64),
        "n_distinct_amounts": n_distinct_amt.astype(np.int64),
        "median_amount_cents": median_amt.astype(np.int64),
        "median_iat_s": median_iat.astype(np.int64),
        "variance_iat_s2": var_iat.astype(np.float64),
        "variance_amount": var_amt.astype(np.float64),
        "n_merchants": n_merchants.astype(np.int64),
        "fraction_night": night_frac.astype(np.float64),
    }
    return FeatureTable(card_tokens, columns)


def median(values: Sequence) -> int | float:
    """Lower median: element at index ceil(n/2)-1 of the sorted values."""
    if len(values) == 0:
        raise EmptyInput("median of empty list")
    ordered = sorted(values)
    return ordered[(len(ordered) - 1) // 2]
