"""Labeled synthetic ledgers: honest background plus injected lockstep cards.

The honest population draws amounts from a clipped log-normal and
timestamps from a diurnal business-hours profile with a lunch dip, so the
background heatmaps show the dense skewed mass the detectors must ignore.
Injected cards come in three behavior archetypes:

* DoubleMachineGun - many txns, one fixed amount, near-constant cadence.
* PennyHunter      - many txns, small round amounts, near-constant cadence.
* BurstyPoster     - a short burst of varied amounts at an odd hour.

Every generated card is recorded in the ground-truth map, and equal
(config, seed) pairs produce identical datasets.
"""

from __future__ import annotations

from calendar import timegm
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .ingest import Dataset, LABEL_FRAUD, LABEL_UNKNOWN

KIND_HONEST = "honest"
KIND_DMG = "DoubleMachineGun"
KIND_PH = "PennyHunter"
KIND_BP = "BurstyPoster"
ARCHETYPE_KINDS = (KIND_DMG, KIND_PH, KIND_BP)

DEFAULT_WINDOW_START = timegm((2021, 3, 1, 0, 0, 0))

# relative txn weight per hour of day: business-hours peak, lunch dip,
# quiet nights (the background the dashboard's temporal curves show)
HOUR_WEIGHTS = np.array(
    [0.2, 0.2, 0.2, 0.2, 0.2, 0.3, 0.5, 1.0, 2.0, 3.0, 3.2, 3.2,
     1.6, 3.0, 3.2, 3.0, 2.8, 2.4, 1.6, 1.2, 0.8, 0.5, 0.4, 0.3]
)

_BATCH = 65536


class InvalidConfig(Exception):
    """A generator config violates one of its invariants."""


@dataclass(frozen=True)
class AmountModel:
    """How an archetype card picks amounts: one of three shapes."""

    kind: str  # fixed_amount | small_round_set | varied_amounts
    fixed_cents: int = 0
    round_set: tuple[int, ...] = ()
    varied_range: tuple[int, int] = (0, 0)

    @staticmethod
    def fixed_amount(cents: int) -> "AmountModel":
        return AmountModel("fixed_amount", fixed_cents=cents)

    @staticmethod
    def small_round_set(values: Sequence[int]) -> "AmountModel":
        return AmountModel("small_round_set", round_set=tuple(values))

    @staticmethod
    def varied_amounts(lo: int, hi: int) -> "AmountModel":
        return AmountModel("varied_amounts", varied_range=(lo, hi))


@dataclass(frozen=True)
class InterArrival:
    """Cadence model: base gap +/- jitter, in whole seconds.

    Each card commits to at most `support` distinct gap values inside
    [base-jitter, base+jitter]; repetition across a card's txns is the
    machine-gun signature the features are built to catch.
    """

    base_s: int
    jitter_s: int = 0
    support: int = 3


@dataclass(frozen=True)
class ArchetypeSpec:
    kind: str
    n_cards: int
    txns_per_card: tuple[int, int]
    inter_arrival: InterArrival
    amount_model: AmountModel
    merchant_fanout: int = 1
    time_of_day_window: tuple[int, int] | None = None  # clock seconds

    def validate(self) -> None:
        if self.kind not in ARCHETYPE_KINDS:
            raise InvalidConfig(f"unknown archetype kind {self.kind!r}")
        if self.n_cards <= 0:
            raise InvalidConfig("n_cards must be positive")
        lo, hi = self.txns_per_card
        if not (1 <= lo <= hi):
            raise InvalidConfig(f"bad txns_per_card range ({lo}, {hi})")
        ia = self.inter_arrival
        if ia.base_s - ia.jitter_s < 1:
            raise InvalidConfig("inter-arrival base - jitter must be >= 1 s")
        if ia.support < 1:
            raise InvalidConfig("inter-arrival support must be >= 1")
        if self.merchant_fanout < 1:
            raise InvalidConfig("merchant_fanout must be >= 1")
        if self.time_of_day_window is not None:
            s0, s1 = self.time_of_day_window
            if not (0 <= s0 < s1 <= 86400):
                raise InvalidConfig("time_of_day_window must be within one day")
        if self.kind == KIND_DMG and self.amount_model.kind != "fixed_amount":
            raise InvalidConfig("DoubleMachineGun requires a fixed amount")
        if self.kind == KIND_PH:
            if self.amount_model.kind != "small_round_set":
                raise InvalidConfig("PennyHunter requires a small round amount set")
            if any(v > 500 for v in self.amount_model.round_set):
                raise InvalidConfig("PennyHunter amounts must all be <= 500 cents")
        if self.kind == KIND_BP:
            worst = (hi - 1) * (ia.base_s + ia.jitter_s)
            if worst > 300:
                raise InvalidConfig(
                    f"BurstyPoster burst may span {worst} s; limit is 300 s"
                )


@dataclass(frozen=True)
class HonestProfile:
    """Honest background: four routine spending behaviors.

    * menu cards: a personal price list (subscriptions, favorite shops,
      possibly a single recurring charge), occasional-to-busy usage.
    * commuter cards: near-daily usage with a fresh amount every txn.
    * transit cards: frequent small round amounts (quarters up to $5).
    * micro menus: small price lists of small amounts (vending, snacks).

    Counts are capped at `max_txns` for the month and every segment puts
    real mass at its cap, so the busy end of the population is a crowd
    rather than a lone extreme. Repetition of inter-arrival times is the
    one thing no honest segment exhibits.
    """

    median_txns: float = 4.0
    sigma_txns: float = 1.1
    max_txns: int = 30
    menu_lambda: float = 3.5  # menu size = 1 + Poisson(menu_lambda)
    menu_median_cents: float = 1200.0
    menu_sigma: float = 0.75
    menu_range: tuple[int, int] = (50, 12000)
    commuter_frac: float = 0.15
    commuter_min_txns: int = 10
    commuter_geom_p: float = 0.12
    commuter_median_cents: float = 1500.0
    commuter_sigma: float = 0.7
    transit_frac: float = 0.08
    transit_min_txns: int = 14
    transit_geom_p: float = 0.13
    transit_median_cents: float = 150.0
    transit_sigma: float = 0.5
    transit_range: tuple[int, int] = (25, 500)
    micro_frac: float = 0.05
    micro_median_cents: float = 150.0
    micro_sigma: float = 0.5
    micro_range: tuple[int, int] = (25, 500)
    # scheduled auto-pay / delivery cards: near-regular cadence with a
    # per-card jitter support, so distinct-gap counts ladder down from
    # the usual n-1 toward bot territory (a few land in flag range; real
    # issuers see those honest false alarms too)
    scheduled_frac: float = 0.025
    scheduled_min_txns: int = 12
    scheduled_geom_p: float = 0.12
    scheduled_gap_range_s: tuple[int, int] = (1800, 14400)
    scheduled_support_range: tuple[int, int] = (2, 24)


@dataclass(frozen=True)
class SynthConfig:
    n_honest_cards: int = 1000
    n_merchants: int = 200
    honest: HonestProfile = field(default_factory=HonestProfile)
    archetypes: tuple[ArchetypeSpec, ...] = ()
    fraud_label_policy: float = 0.25
    seed: int = 0
    window_start: int = DEFAULT_WINDOW_START
    window_days: int = 30

    def validate(self) -> None:
        if self.n_honest_cards < 0:
            raise InvalidConfig("n_honest_cards must be >= 0")
        if self.n_merchants < 1:
            raise InvalidConfig("n_merchants must be >= 1")
        if not 0.0 <= self.fraud_label_policy <= 1.0:
            raise InvalidConfig("fraud_label_policy must be in [0, 1]")
        if self.window_days < 1:
            raise InvalidConfig("window_days must be >= 1")
        for spec in self.archetypes:
            spec.validate()
            if spec.merchant_fanout > max(1, self.n_merchants // 2):
                raise InvalidConfig(
                    "merchant_fanout exceeds the low-traffic merchant pool"
                )


def double_machine_gun(n_cards: int, amount_cents: int = 99) -> ArchetypeSpec:
    """Stock profile: ~66 txns of one amount at every ~3 minutes."""
    return ArchetypeSpec(
        kind=KIND_DMG,
        n_cards=n_cards,
        txns_per_card=(66, 66),
        inter_arrival=InterArrival(base_s=180, jitter_s=10, support=3),
        amount_model=AmountModel.fixed_amount(amount_cents),
        merchant_fanout=1,
    )


def penny_hunter(n_cards: int) -> ArchetypeSpec:
    """Stock profile: ~65 small round amounts at every ~15 seconds."""
    return ArchetypeSpec(
        kind=KIND_PH,
        n_cards=n_cards,
        txns_per_card=(65, 65),
        inter_arrival=InterArrival(base_s=15, jitter_s=2, support=3),
        amount_model=AmountModel.small_round_set(tuple(range(25, 501, 25))),
        merchant_fanout=1,
    )


def bursty_poster(n_cards: int) -> ArchetypeSpec:
    """Stock profile: ~16 varied amounts at ~1 s apart, around 22:00."""
    return ArchetypeSpec(
        kind=KIND_BP,
        n_cards=n_cards,
        txns_per_card=(16, 16),
        inter_arrival=InterArrival(base_s=1, jitter_s=0, support=1),
        amount_model=AmountModel.varied_amounts(100, 9900),
        merchant_fanout=2,
        time_of_day_window=(21 * 3600 + 1800, 22 * 3600 + 1800),
    )


SEG_MENU, SEG_COMMUTER, SEG_TRANSIT, SEG_MICRO, SEG_SCHEDULED = 0, 1, 2, 3, 4


def _round_quarters(values: np.ndarray, lo: int, hi: int) -> np.ndarray:
    return np.clip(np.rint(values / 25) * 25, lo, hi).astype(np.int64)


def _honest_cards(rng, profile: HonestProfile, n_cards: int):
    """Per-card (segment, txn count); every segment has mass at the cap."""
    u = rng.random(n_cards)
    segment = np.full(n_cards, SEG_MENU, np.int64)
    segment[u < profile.commuter_frac] = SEG_COMMUTER
    band = profile.commuter_frac
    segment[(u >= band) & (u < band + profile.transit_frac)] = SEG_TRANSIT
    band += profile.transit_frac
    segment[(u >= band) & (u < band + profile.micro_frac)] = SEG_MICRO
    band += profile.micro_frac
    segment[(u >= band) & (u < band + profile.scheduled_frac)] = SEG_SCHEDULED

    raw = rng.lognormal(np.log(profile.median_txns), profile.sigma_txns, n_cards)
    counts = np.clip(np.rint(raw), 1, profile.max_txns).astype(np.int64)
    geo_c = profile.commuter_min_txns + rng.geometric(profile.commuter_geom_p, n_cards)
    geo_t = profile.transit_min_txns + rng.geometric(profile.transit_geom_p, n_cards)
    geo_s = profile.scheduled_min_txns + rng.geometric(profile.scheduled_geom_p, n_cards)
    counts = np.where(segment == SEG_COMMUTER,
                      np.minimum(geo_c, profile.max_txns), counts)
    counts = np.where(segment == SEG_TRANSIT,
                      np.minimum(geo_t, profile.max_txns), counts)
    counts = np.where(segment == SEG_SCHEDULED,
                      np.minimum(geo_s, profile.max_txns), counts)
    return segment, counts


def _honest_cards_for_total(rng, profile: HonestProfile, target: int):
    """Draw cards until their counts sum exactly to `target` txns."""
    seg_chunks, cnt_chunks = [], []
    total = 0
    while total < target:
        segment, counts = _honest_cards(rng, profile, _BATCH)
        seg_chunks.append(segment)
        cnt_chunks.append(counts)
        total += int(counts.sum())
    segment = np.concatenate(seg_chunks)
    counts = np.concatenate(cnt_chunks)
    cum = np.cumsum(counts)
    k = int(np.searchsorted(cum, target, side="left"))
    segment, counts = segment[: k + 1].copy(), counts[: k + 1].copy()
    counts[k] -= int(cum[k] - target)
    if counts[k] == 0:
        segment, counts = segment[:k], counts[:k]
    return segment, counts


def _honest_block(rng, config: SynthConfig, segment: np.ndarray, counts: np.ndarray):
    n = int(counts.sum())
    prof = config.honest
    n_cards = len(counts)
    card_idx = np.repeat(np.arange(n_cards), counts)

    day = rng.integers(0, config.window_days, n)
    hour = rng.choice(24, size=n, p=HOUR_WEIGHTS / HOUR_WEIGHTS.sum())
    sec = rng.integers(0, 3600, n)
    ts = config.window_start + day * 86400 + hour * 3600 + sec

    # menu segments pick from a per-card price list; a size-1 menu is a
    # single recurring charge
    menu_k = 1 + rng.poisson(prof.menu_lambda, n_cards)
    max_k = int(menu_k.max()) if n_cards else 1
    menu_vals = _round_quarters(
        rng.lognormal(np.log(prof.menu_median_cents), prof.menu_sigma, (n_cards, max_k)),
        *prof.menu_range,
    )
    micro_vals = _round_quarters(
        rng.lognormal(np.log(prof.micro_median_cents), prof.micro_sigma, (n_cards, max_k)),
        *prof.micro_range,
    )
    menus = np.where((segment == SEG_MICRO)[:, None], micro_vals, menu_vals)
    pick = rng.integers(0, 2**62, n)
    amt = menus[card_idx, pick % menu_k[card_idx]]

    seg_txn = segment[card_idx]
    fresh = rng.lognormal(np.log(prof.commuter_median_cents), prof.commuter_sigma, n)
    fresh = np.clip(np.rint(fresh), *prof.menu_range).astype(np.int64)
    amt = np.where(seg_txn == SEG_COMMUTER, fresh, amt)
    quarters = _round_quarters(
        rng.lognormal(np.log(prof.transit_median_cents), prof.transit_sigma, n),
        *prof.transit_range,
    )
    amt = np.where(seg_txn == SEG_TRANSIT, quarters, amt)

    # scheduled cards replace their i.i.d. timestamps with a near-regular
    # cadence: per-card base gap plus a small arithmetic jitter support
    sched_cards = np.flatnonzero(segment == SEG_SCHEDULED)
    if len(sched_cards):
        n_s = len(sched_cards)
        s_lo, s_hi = prof.scheduled_support_range
        g_lo, g_hi = prof.scheduled_gap_range_s
        support = rng.integers(s_lo, s_hi + 1, n_s)
        base_gap = rng.integers(g_lo, g_hi + 1, n_s)
        stride = 1 + rng.integers(0, np.maximum(1, 600 // support), n_s)
        day0 = rng.integers(0, max(1, config.window_days - 6), n_s)
        tod0 = rng.integers(6 * 3600, 20 * 3600, n_s)

        compact = np.full(n_cards, -1, np.int64)
        compact[sched_cards] = np.arange(n_s)
        mask = seg_txn == SEG_SCHEDULED
        cid = compact[card_idx[mask]]
        if len(cid):
            gaps = base_gap[cid] + stride[cid] * rng.integers(0, support[cid], len(cid))
            first = np.concatenate([[True], cid[1:] != cid[:-1]])
            gaps[first] = 0
            cum = np.cumsum(gaps)
            starts = np.flatnonzero(first)
            sizes = np.diff(np.concatenate([starts, [len(cid)]]))
            rel = cum - np.repeat(cum[starts], sizes)
            ts[mask] = config.window_start + day0[cid] * 86400 + tod0[cid] + rel

    # quadratic skew toward low merchant ids: a few busy merchants, a
    # long tail of small ones
    merch_idx = np.floor(config.n_merchants * rng.random(n) ** 2).astype(np.int64)
    merch_idx = np.minimum(merch_idx, config.n_merchants - 1)

    return card_idx, merch_idx, amt.astype(np.int64), ts.astype(np.int64)


def _archetype_card(rng, spec: ArchetypeSpec, config: SynthConfig):
    lo, hi = spec.txns_per_card
    n = int(rng.integers(lo, hi + 1))

    ia = spec.inter_arrival
    width = 2 * ia.jitter_s + 1
    k = min(ia.support, width)
    offsets = rng.choice(np.arange(-ia.jitter_s, ia.jitter_s + 1), size=k, replace=False)
    iats = ia.base_s + rng.choice(offsets, size=max(0, n - 1))
    duration = int(iats.sum()) if n > 1 else 0

    if spec.time_of_day_window is not None:
        s0, s1 = spec.time_of_day_window
        start_tod = int(rng.integers(s0, s1))
    else:
        start_tod = int(rng.integers(0, max(1, 86400 - duration)))
    day = int(rng.integers(0, config.window_days))
    t0 = config.window_start + day * 86400 + start_tod
    ts = t0 + np.concatenate([[0], np.cumsum(iats)]).astype(np.int64)

    am = spec.amount_model
    if am.kind == "fixed_amount":
        amt = np.full(n, am.fixed_cents, dtype=np.int64)
    elif am.kind == "small_round_set":
        amt = rng.choice(np.asarray(am.round_set, dtype=np.int64), size=n)
    else:
        a, b = am.varied_range
        amt = rng.integers(a, b + 1, n)

    # colluding merchants live in the low-traffic half of the pool
    pool_lo = config.n_merchants // 2
    pool = np.arange(pool_lo, config.n_merchants)
    fanout = min(spec.merchant_fanout, len(pool))
    merchants = rng.choice(pool, size=fanout, replace=False)
    merch_idx = rng.choice(merchants, size=n)

    labels = np.where(
        rng.random(n) < config.fraud_label_policy, LABEL_FRAUD, LABEL_UNKNOWN
    )
    return n, merch_idx.astype(np.int64), amt, ts, labels


def generate(
    config: SynthConfig, *, _target_total: int | None = None
) -> tuple[Dataset, dict[str, str]]:
    """Build a Dataset plus the card -> archetype-kind ground truth.

    With `_target_total` set, the honest population is sized so the whole
    dataset holds exactly that many txns (used by `scale_series`).
    """
    config.validate()
    rng = np.random.Generator(np.random.PCG64(config.seed))

    # archetype cards first so the honest filler can hit an exact total
    arch_cards: list[str] = []
    arch_merch: list[np.ndarray] = []
    arch_amt: list[np.ndarray] = []
    arch_ts: list[np.ndarray] = []
    arch_labels: list[np.ndarray] = []
    arch_card_idx: list[np.ndarray] = []
    ground_truth: dict[str, str] = {}
    prefix = {KIND_DMG: "dmg", KIND_PH: "ph", KIND_BP: "bp"}
    serial = {k: 0 for k in ARCHETYPE_KINDS}
    arch_total = 0
    for spec in config.archetypes:
        for _ in range(spec.n_cards):
            token = f"{prefix[spec.kind]}{serial[spec.kind]:04d}"
            serial[spec.kind] += 1
            n, merch, amt, ts, labels = _archetype_card(rng, spec, config)
            arch_cards.append(token)
            arch_card_idx.append(np.full(n, len(arch_cards) - 1, dtype=np.int64))
            arch_merch.append(merch)
            arch_amt.append(amt)
            arch_ts.append(ts)
            arch_labels.append(labels)
            ground_truth[token] = spec.kind
            arch_total += n

    if _target_total is not None:
        if _target_total < arch_total:
            raise InvalidConfig(
                f"target of {_target_total} txns is below the "
                f"{arch_total} archetype txns alone"
            )
        segment, counts = _honest_cards_for_total(
            rng, config.honest, _target_total - arch_total
        )
    else:
        segment, counts = _honest_cards(rng, config.honest, config.n_honest_cards)

    h_card_idx, h_merch, h_amt, h_ts = _honest_block(rng, config, segment, counts)
    honest_tokens = np.array([f"c{i:06d}" for i in range(len(counts))], dtype=object)
    for tok in honest_tokens:
        ground_truth[tok] = KIND_HONEST

    merchant_tokens = np.array(
        [f"m{i:05d}" for i in range(config.n_merchants)], dtype=object
    )

    if arch_cards:
        arch_tokens = np.array(arch_cards, dtype=object)
        cards = np.concatenate(
            [honest_tokens[h_card_idx], arch_tokens[np.concatenate(arch_card_idx)]]
        )
        merch = np.concatenate([h_merch, np.concatenate(arch_merch)])
        amt = np.concatenate([h_amt, np.concatenate(arch_amt)])
        ts = np.concatenate([h_ts, np.concatenate(arch_ts)])
        labels = np.concatenate(
            [np.full(len(h_ts), LABEL_UNKNOWN, dtype=object),
             np.concatenate(arch_labels).astype(object)]
        )
    else:
        cards = honest_tokens[h_card_idx]
        merch = h_merch
        amt = h_amt
        ts = h_ts
        labels = np.full(len(h_ts), LABEL_UNKNOWN, dtype=object)

    order = rng.permutation(len(cards))
    dataset = Dataset(
        cards[order],
        merchant_tokens[merch[order]],
        amt[order],
        ts[order],
        labels=labels[order],
    )
    return dataset, ground_truth


def scaled_config(config: SynthConfig, base_seed: int, index: int) -> SynthConfig:
    """Config for the index-th dataset of a scale series (derived seed)."""
    sub = int(
        np.random.SeedSequence(base_seed, spawn_key=(index,)).generate_state(1)[0]
    )
    return replace(config, seed=sub)


def scale_series(
    config: SynthConfig, sizes: Sequence[int], seed: int | None = None
) -> list[tuple[Dataset, dict[str, str]]]:
    """Generate one dataset per requested total txn count.

    Sizes must be ascending; each output matches its size exactly. Each
    dataset draws from an independent seed derived from (seed, index).
    Memory-conscious callers should generate one at a time through
    `scaled_config` instead of holding the whole list.
    """
    sizes = list(sizes)
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise InvalidConfig("sizes must be strictly ascending")
    base_seed = config.seed if seed is None else seed
    return [
        generate(scaled_config(config, base_seed, i), _target_total=int(size))
        for i, size in enumerate(sizes)
    ]


def write_ground_truth(ground_truth: dict[str, str], path: str) -> None:
    """Sidecar CSV `card_id,kind`, sorted by card id."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("card_id,kind\n")
        for card in sorted(ground_truth):
            fh.write(f"{card},{ground_truth[card]}\n")


def read_ground_truth(path: str) -> dict[str, str]:
    out: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        next(fh)
        for line in fh:
            line = line.strip()
            if line:
                card, kind = line.split(",", 1)
                out[card] = kind
    return out
