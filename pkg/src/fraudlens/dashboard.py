"""Evidence views for one target card: cadence, ledger, tempo, egonet.

Four views back every alarm: the gap-before/gap-after scatter that puts
machine-gun cadence on the diagonal, an annotated spreadsheet of the
card's txns, dual-granularity temporal evolution against the normalized
activity of everyone else, and the two-step egonet with its main core.

`DashboardContext` does the linear preprocessing once (triplet grids,
temporal totals, group index); assembling a payload afterwards touches
only the target's txns, its two-hop neighborhood, and those precomputed
aggregates.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from ._kernels import hist2d
from .features import FeatureTable, sorted_card_view
from .graph import BipartiteGraph, EgonetView, UnknownCard, egonet_view
from .heatmap import CardClass, HeatmapGrid, transform
from .ingest import Dataset, LABEL_FRAUD

FINE_BIN_MIN = 10
COARSE_BIN_MIN = 60
IAT_X = "dt_before_s"
IAT_Y = "dt_after_s"


class InvalidBinLength(ValueError):
    """Temporal bins come only in the fine (10 min) or coarse (60 min) size."""


@dataclass(frozen=True)
class IatPoint:
    dt_before_s: int
    dt_after_s: int


@dataclass(frozen=True)
class SpreadsheetRow:
    merchant_token: str
    amount_cents: int
    timestamp: int
    iat_s: int | None  # blank for the first txn
    suspicion_counts: tuple[int, ...]
    fraud_label: str
    repeated_merchant: bool
    repeated_amount: bool
    repeated_iat: bool
    nonzero_suspicion: bool
    confirmed_fraud: bool


@dataclass(frozen=True)
class TemporalBins:
    """Per-bin activity of the target with the normalized background.

    `bins` holds (bin_start, txn_count, total_amount_cents) for the target;
    `background` holds (bin_start, norm_count, norm_amount) for all other
    cards, scaled so each background series peaks at the target's peak.
    Bins tile the dataset window, aligned to midnight of its first day.
    """

    bin_length_min: int
    bins: tuple[tuple[int, int, int], ...]
    background: tuple[tuple[int, float, float], ...]


def iat_scatter(timestamps: np.ndarray) -> list[IatPoint]:
    """(gap before, gap after) for every consecutive txn triplet.

    Timestamps must be sorted; fewer than three txns yield no points.
    """
    ts = np.asarray(timestamps, np.int64)
    if len(ts) < 3:
        return []
    db = ts[1:-1] - ts[:-2]
    da = ts[2:] - ts[1:-1]
    return [IatPoint(int(b), int(a)) for b, a in zip(db, da)]


def _all_triplets(d: Dataset):
    """(dt_before, dt_after, group id, card tokens) over the whole dataset."""
    order, codes, starts, card_tokens, _, _ = sorted_card_view(d)
    ts = d.timestamps[order]
    if len(ts) < 3:
        empty = np.zeros(0, np.int64)
        return empty, empty, empty, card_tokens
    valid = codes[:-2] == codes[2:]
    db = (ts[1:-1] - ts[:-2])[valid]
    da = (ts[2:] - ts[1:-1])[valid]
    gid = codes[:-2][valid]
    return db, da, gid, card_tokens


def _grid_excluding(db, da, keep: np.ndarray, n_bins: int) -> HeatmapGrid:
    """Grid over every triplet's domain, counting only the kept ones."""
    u_db = transform(db)
    u_da = transform(da)
    x_hi = float(u_db.max()) if len(u_db) and u_db.max() > 0 else 1.0
    y_hi = float(u_da.max()) if len(u_da) and u_da.max() > 0 else 1.0
    kept_x = u_db[keep]
    kept_y = u_da[keep]
    if len(kept_x):
        counts = hist2d(kept_x, kept_y, n_bins, n_bins, x_hi, y_hi)
    else:
        counts = np.zeros((n_bins, n_bins), np.int64)
    return HeatmapGrid(
        x_feature=IAT_X,
        y_feature=IAT_Y,
        x_edges=np.linspace(0.0, x_hi, n_bins + 1),
        y_edges=np.linspace(0.0, y_hi, n_bins + 1),
        counts=counts,
        total_cards=int(len(kept_x)),
    )


def iat_background(d: Dataset, exclude: str, n_bins: int = 64) -> HeatmapGrid:
    """Triplet-density grid of every card except `exclude`.

    The edge span covers all cards (including the excluded one) so the
    target's own scatter can overlay the grid in the same coordinates.
    """
    db, da, gid, card_tokens = _all_triplets(d)
    excl_code = np.searchsorted(card_tokens, exclude)
    if excl_code < len(card_tokens) and card_tokens[excl_code] == exclude:
        keep = gid != excl_code
    else:
        keep = np.ones(len(gid), bool)
    return _grid_excluding(db, da, keep, n_bins)


def spreadsheet_rows(
    merchants: np.ndarray,
    amounts: np.ndarray,
    timestamps: np.ndarray,
    suspicion: np.ndarray | None = None,
    labels: np.ndarray | None = None,
) -> list[SpreadsheetRow]:
    """Chronological ledger rows for one card with highlight flags.

    A repeated_* flag is set when that row's value occurs at least twice
    within the card's txns.
    """
    n = len(timestamps)
    if suspicion is None:
        suspicion = np.zeros((n, 0), np.int64)
    if labels is None:
        labels = np.full(n, "", dtype=object)
    ts = np.asarray(timestamps, np.int64)
    iats: list[int | None] = [None] + [int(b - a) for a, b in zip(ts, ts[1:])]

    def repeated(values) -> set:
        seen: dict = {}
        for v in values:
            seen[v] = seen.get(v, 0) + 1
        return {v for v, c in seen.items() if c >= 2}

    rep_m = repeated(merchants)
    rep_a = repeated(int(a) for a in amounts)
    rep_i = repeated(i for i in iats if i is not None)

    rows = []
    for i in range(n):
        susp = tuple(int(v) for v in suspicion[i])
        rows.append(
            SpreadsheetRow(
                merchant_token=merchants[i],
                amount_cents=int(amounts[i]),
                timestamp=int(ts[i]),
                iat_s=iats[i],
                suspicion_counts=susp,
                fraud_label=labels[i],
                repeated_merchant=merchants[i] in rep_m,
                repeated_amount=int(amounts[i]) in rep_a,
                repeated_iat=iats[i] is not None and iats[i] in rep_i,
                nonzero_suspicion=any(v > 0 for v in susp),
                confirmed_fraud=labels[i] == LABEL_FRAUD,
            )
        )
    return rows


def _bin_grid(window: tuple[int, int], l_minutes: int) -> tuple[int, int, int]:
    """(first bin start, bin length s, bin count) tiling the window."""
    bin_len = l_minutes * 60
    bin0 = (window[0] // 86400) * 86400  # midnight of the first day
    n_bins = int((window[1] - bin0) // bin_len) + 1
    return bin0, bin_len, n_bins


def _series(ts, amounts, bin0, bin_len, n_bins):
    idx = (np.asarray(ts, np.int64) - bin0) // bin_len
    counts = np.bincount(idx, minlength=n_bins).astype(np.int64)
    totals = np.bincount(
        idx, weights=np.asarray(amounts, np.float64), minlength=n_bins
    ).astype(np.int64)
    return counts, totals


def _scaled(background: np.ndarray, target_max: int) -> np.ndarray:
    bg_max = background.max() if len(background) else 0
    if target_max == 0 or bg_max == 0:
        return np.zeros(len(background), np.float64)
    return background * (float(target_max) / float(bg_max))


def temporal_evolution(
    target_ts: np.ndarray,
    target_amounts: np.ndarray,
    d: Dataset,
    l_minutes: int,
) -> TemporalBins:
    """Target activity per bin against everyone else's, max-normalized."""
    if l_minutes not in (FINE_BIN_MIN, COARSE_BIN_MIN):
        raise InvalidBinLength(f"bin length must be 10 or 60, got {l_minutes}")
    bin0, bin_len, n_bins = _bin_grid(d.time_window, l_minutes)
    tgt_counts, tgt_amounts = _series(target_ts, target_amounts, bin0, bin_len, n_bins)
    all_counts, all_amounts = _series(d.timestamps, d.amount_cents, bin0, bin_len, n_bins)
    bg_counts = all_counts - tgt_counts
    bg_amounts = all_amounts - tgt_amounts
    return _temporal_from_series(
        l_minutes, bin0, bin_len, tgt_counts, tgt_amounts, bg_counts, bg_amounts
    )


def _temporal_from_series(
    l_minutes, bin0, bin_len, tgt_counts, tgt_amounts, bg_counts, bg_amounts
) -> TemporalBins:
    starts = bin0 + bin_len * np.arange(len(tgt_counts), dtype=np.int64)
    norm_counts = _scaled(bg_counts, int(tgt_counts.max()) if len(tgt_counts) else 0)
    norm_amounts = _scaled(bg_amounts, int(tgt_amounts.max()) if len(tgt_amounts) else 0)
    return TemporalBins(
        bin_length_min=l_minutes,
        bins=tuple(
            (int(s), int(c), int(a))
            for s, c, a in zip(starts, tgt_counts, tgt_amounts)
        ),
        background=tuple(
            (int(s), float(c), float(a))
            for s, c, a in zip(starts, norm_counts, norm_amounts)
        ),
    )


@dataclass(frozen=True)
class DashboardPayload:
    target_card: str
    features: "CardFeaturesDoc"
    egonet: EgonetView
    iat_points: tuple[IatPoint, ...]
    iat_background: HeatmapGrid
    spreadsheet: tuple[SpreadsheetRow, ...]
    temporal_fine: TemporalBins
    temporal_coarse: TemporalBins
    card_class: CardClass

    def to_doc(self) -> dict:
        return {
            "target_card": self.target_card,
            "features": self.features,
            "egonet": self.egonet.to_doc(),
            "iat_points": [[p.dt_before_s, p.dt_after_s] for p in self.iat_points],
            "iat_background": json.loads(self.iat_background.to_json()),
            "spreadsheet": [
                {
                    "merchant_token": r.merchant_token,
                    "amount_cents": r.amount_cents,
                    "timestamp": r.timestamp,
                    "iat_s": r.iat_s,
                    "suspicion_counts": list(r.suspicion_counts),
                    "fraud_label": r.fraud_label,
                    "repeated_merchant": r.repeated_merchant,
                    "repeated_amount": r.repeated_amount,
                    "repeated_iat": r.repeated_iat,
                    "nonzero_suspicion": r.nonzero_suspicion,
                    "confirmed_fraud": r.confirmed_fraud,
                }
                for r in self.spreadsheet
            ],
            "temporal_fine": _temporal_doc(self.temporal_fine),
            "temporal_coarse": _temporal_doc(self.temporal_coarse),
            "card_class": self.card_class.value,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_doc(), separators=(",", ":"))


CardFeaturesDoc = dict


def _temporal_doc(t: TemporalBins) -> dict:
    return {
        "bin_length_min": t.bin_length_min,
        "bins": [list(b) for b in t.bins],
        "background": [list(b) for b in t.background],
    }


class DashboardContext:
    """One-time linear preprocessing for fast per-card dashboards."""

    def __init__(
        self,
        d: Dataset,
        features: FeatureTable,
        g: BipartiteGraph,
        classes: dict[str, CardClass] | None = None,
        n_bins: int = 64,
    ):
        self.dataset = d
        self.features = features
        self.graph = g
        self.classes = classes or {}
        self.n_bins = n_bins

        order, codes, starts, card_tokens, merch_codes, merch_tokens = sorted_card_view(d)
        self._starts = starts
        self._card_tokens = card_tokens
        self._ts = d.timestamps[order]
        self._amounts = d.amount_cents[order]
        self._merchants = d.merchant_ids[order]
        self._labels = d.labels[order]
        self._suspicion = d.suspicion_counts[order]

        # triplets are contiguous per card in the sorted order
        if len(self._ts) >= 3:
            valid = codes[:-2] == codes[2:]
            self._trip_db = (self._ts[1:-1] - self._ts[:-2])[valid]
            self._trip_da = (self._ts[2:] - self._ts[1:-1])[valid]
        else:
            self._trip_db = np.zeros(0, np.int64)
            self._trip_da = np.zeros(0, np.int64)
        sizes = np.diff(starts)
        trip_counts = np.maximum(sizes - 2, 0)
        self._trip_starts = np.concatenate([[0], np.cumsum(trip_counts)]).astype(np.int64)

        self._u_db = transform(self._trip_db)
        self._u_da = transform(self._trip_da)
        self._x_hi = float(self._u_db.max()) if len(self._u_db) and self._u_db.max() > 0 else 1.0
        self._y_hi = float(self._u_da.max()) if len(self._u_da) and self._u_da.max() > 0 else 1.0
        if len(self._u_db):
            self._global_grid = hist2d(
                self._u_db, self._u_da, n_bins, n_bins, self._x_hi, self._y_hi
            )
        else:
            self._global_grid = np.zeros((n_bins, n_bins), np.int64)

        self._temporal = {}
        for l in (FINE_BIN_MIN, COARSE_BIN_MIN):
            bin0, bin_len, nb = _bin_grid(d.time_window, l)
            counts, totals = _series(d.timestamps, d.amount_cents, bin0, bin_len, nb)
            self._temporal[l] = (bin0, bin_len, counts, totals)

    def _group(self, target: str) -> int:
        i = int(np.searchsorted(self._card_tokens, target))
        if i >= len(self._card_tokens) or self._card_tokens[i] != target:
            raise UnknownCard(target)
        return i

    def _background_grid(self, gi: int) -> HeatmapGrid:
        lo, hi = self._trip_starts[gi], self._trip_starts[gi + 1]
        counts = self._global_grid
        if hi > lo:
            own = hist2d(
                self._u_db[lo:hi],
                self._u_da[lo:hi],
                self.n_bins,
                self.n_bins,
                self._x_hi,
                self._y_hi,
            )
            counts = counts - own
        return HeatmapGrid(
            x_feature=IAT_X,
            y_feature=IAT_Y,
            x_edges=np.linspace(0.0, self._x_hi, self.n_bins + 1),
            y_edges=np.linspace(0.0, self._y_hi, self.n_bins + 1),
            counts=counts,
            total_cards=int(counts.sum()),
        )

    def assemble(self, target: str) -> DashboardPayload:
        gi = self._group(target)
        s, e = self._starts[gi], self._starts[gi + 1]
        ts = self._ts[s:e]
        amounts = self._amounts[s:e]

        feats = self.features.get(target)
        feature_doc = {
            "card_id": feats.card_id,
            "n_txns": feats.n_txns,
            "n_distinct_iat": feats.n_distinct_iat,
            "n_distinct_amounts": feats.n_distinct_amounts,
            "median_amount_cents": feats.median_amount_cents,
            "median_iat_s": feats.median_iat_s,
            "variance_iat_s2": feats.variance_iat_s2,
            "variance_amount": feats.variance_amount,
            "n_merchants": feats.n_merchants,
            "fraction_night": feats.fraction_night,
        }

        temporal = {}
        for l, (bin0, bin_len, g_counts, g_totals) in self._temporal.items():
            t_counts, t_totals = _series(ts, amounts, bin0, bin_len, len(g_counts))
            temporal[l] = _temporal_from_series(
                l, bin0, bin_len, t_counts, t_totals,
                g_counts - t_counts, g_totals - t_totals,
            )

        return DashboardPayload(
            target_card=target,
            features=feature_doc,
            egonet=egonet_view(self.graph, target),
            iat_points=tuple(iat_scatter(ts)),
            iat_background=self._background_grid(gi),
            spreadsheet=tuple(
                spreadsheet_rows(
                    self._merchants[s:e],
                    amounts,
                    ts,
                    self._suspicion[s:e],
                    self._labels[s:e],
                )
            ),
            temporal_fine=temporal[FINE_BIN_MIN],
            temporal_coarse=temporal[COARSE_BIN_MIN],
            card_class=self.classes.get(target, CardClass.Unlabeled),
        )


def assemble_dashboard(
    d: Dataset,
    features: FeatureTable,
    g: BipartiteGraph,
    classes: dict[str, CardClass],
    target: str,
    n_bins: int = 64,
) -> DashboardPayload:
    """One-shot assembly; servers should hold a DashboardContext instead."""
    return DashboardContext(d, features, g, classes, n_bins).assemble(target)
