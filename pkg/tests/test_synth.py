import io

import numpy as np
import pytest

from fraudlens import synth
from fraudlens.features import extract_features
from fraudlens.heatmap import flag_mg_dollar, flag_mg_t, flag_small_dollar
from fraudlens.ingest import write_dataset
from fraudlens.synth import (
    AmountModel,
    ArchetypeSpec,
    InterArrival,
    InvalidConfig,
    SynthConfig,
    bursty_poster,
    double_machine_gun,
    generate,
    penny_hunter,
    scale_series,
)


def small_config(seed=0):
    return SynthConfig(
        n_honest_cards=300,
        n_merchants=50,
        seed=seed,
        archetypes=(double_machine_gun(2), penny_hunter(2), bursty_poster(2)),
    )


def test_determinism_same_config_same_dataset():
    d1, g1 = generate(small_config())
    d2, g2 = generate(small_config())
    assert d1.equals(d2)
    assert g1 == g2


def test_different_seed_differs():
    d1, _ = generate(small_config(seed=0))
    d2, _ = generate(small_config(seed=1))
    assert not d1.equals(d2)


def test_ground_truth_covers_every_card_exactly_once():
    d, gt = generate(small_config())
    cards = set(d.card_ids)
    assert cards == set(gt)


def test_dmg_profile_matches_expected_shape():
    cfg = SynthConfig(n_honest_cards=0, n_merchants=10, seed=4,
                      archetypes=(double_machine_gun(1),))
    d, gt = generate(cfg)
    assert gt["dmg0000"] == synth.KIND_DMG
    assert len(d) == 66
    assert set(d.amount_cents.tolist()) == {99}
    assert len(set(d.merchant_ids)) == 1
    ts = np.sort(d.timestamps)
    iats = np.diff(ts)
    assert np.all((iats >= 170) & (iats <= 190))
    assert len(set(iats.tolist())) <= 3  # jitter support keeps repetition


def test_ph_profile_small_round_amounts():
    cfg = SynthConfig(n_honest_cards=0, n_merchants=10, seed=4,
                      archetypes=(penny_hunter(1),))
    d, _ = generate(cfg)
    assert len(d) == 65
    assert d.amount_cents.max() <= 500
    assert np.all(d.amount_cents % 25 == 0)
    iats = np.diff(np.sort(d.timestamps))
    assert np.all((iats >= 13) & (iats <= 17))


def test_bp_profile_burst_at_night():
    cfg = SynthConfig(n_honest_cards=0, n_merchants=10, seed=4,
                      archetypes=(bursty_poster(1),))
    d, _ = generate(cfg)
    assert len(d) == 16
    spread = int(d.timestamps.max() - d.timestamps.min())
    assert spread <= 300  # whole burst within five minutes
    tod = int(d.timestamps.min()) % 86400
    assert 21 * 3600 + 1800 <= tod <= 22 * 3600 + 1800
    assert len(set(d.merchant_ids)) == 2


def test_invalid_archetype_configs_rejected():
    with pytest.raises(InvalidConfig):
        ArchetypeSpec(
            kind=synth.KIND_DMG, n_cards=1, txns_per_card=(5, 5),
            inter_arrival=InterArrival(10),
            amount_model=AmountModel.varied_amounts(1, 10),
        ).validate()
    with pytest.raises(InvalidConfig):
        ArchetypeSpec(
            kind=synth.KIND_PH, n_cards=1, txns_per_card=(5, 5),
            inter_arrival=InterArrival(10),
            amount_model=AmountModel.small_round_set((100, 900)),
        ).validate()
    with pytest.raises(InvalidConfig):
        ArchetypeSpec(
            kind=synth.KIND_BP, n_cards=1, txns_per_card=(100, 100),
            inter_arrival=InterArrival(10),
            amount_model=AmountModel.varied_amounts(1, 10),
        ).validate()
    with pytest.raises(InvalidConfig):
        SynthConfig(fraud_label_policy=1.5).validate()


def test_honest_amounts_within_range():
    d, _ = generate(SynthConfig(n_honest_cards=500, n_merchants=20, seed=9))
    assert d.amount_cents.min() >= 25  # transit quarters reach down to 25
    assert d.amount_cents.max() <= 30000


def test_timestamps_within_window():
    cfg = small_config()
    d, _ = generate(cfg)
    lo, hi = d.time_window
    assert lo >= cfg.window_start
    assert hi < cfg.window_start + cfg.window_days * 86400


def test_scale_series_exact_totals():
    cfg = SynthConfig(n_honest_cards=0, n_merchants=30, seed=2,
                      archetypes=(double_machine_gun(1),))
    sizes = [2000, 4000, 8000]
    out = scale_series(cfg, sizes)
    assert [len(d) for d, _ in out] == sizes


def test_scale_series_deterministic():
    cfg = small_config()
    a = scale_series(cfg, [1500, 3000], seed=5)
    b = scale_series(cfg, [1500, 3000], seed=5)
    for (da, _), (db, _) in zip(a, b):
        buf_a, buf_b = io.StringIO(), io.StringIO()
        write_dataset(da, buf_a)
        write_dataset(db, buf_b)
        assert buf_a.getvalue() == buf_b.getvalue()


def test_scale_series_requires_ascending():
    with pytest.raises(InvalidConfig):
        scale_series(small_config(), [2000, 1000])


def test_archetype_fidelity_under_default_flags():
    d, gt = generate(small_config(seed=21))
    table = extract_features(d)
    mg_t = flag_mg_t(table)
    mg_d = flag_mg_dollar(table)
    small_d = flag_small_dollar(table)
    for card, kind in gt.items():
        if kind == synth.KIND_DMG:
            assert card in mg_t and card in mg_d
        elif kind == synth.KIND_PH:
            assert card in mg_t and card in small_d and card not in mg_d
        elif kind == synth.KIND_BP:
            assert card in mg_t and card not in mg_d and card not in small_d


def test_ground_truth_sidecar_round_trip(tmp_path):
    _, gt = generate(small_config())
    path = str(tmp_path / "truth.csv")
    synth.write_ground_truth(gt, path)
    assert synth.read_ground_truth(path) == gt
