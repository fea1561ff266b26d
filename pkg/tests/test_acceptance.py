"""Acceptance suite: one test per shipping criterion, stated tolerances.

Run with `pytest tests/test_acceptance.py -s` to see the per-criterion
PASS lines. Everything runs against seeded synthetic data; no UI needed.
"""

import time
from itertools import product

import numpy as np
import pytest
from fastapi.testclient import TestClient

from fraudlens.anomaly import average_precision, fit, forward_select, precision_at_k
from fraudlens.bench import bench
from fraudlens.dashboard import DashboardContext
from fraudlens.features import extract_features
from fraudlens.graph import build_graph, core_decomposition
from fraudlens.heatmap import CardClass, auto_classes
from fraudlens.server import Session, create_app
from fraudlens.synth import (
    KIND_HONEST,
    SynthConfig,
    bursty_poster,
    double_machine_gun,
    generate,
    penny_hunter,
)

from conftest import random_dataset
from test_features import assert_matches_oracle, oracle_features
from test_graph import graph_from_pairs, oracle_cores

DEFAULT_FEATURES = (
    "n_txns",
    "median_amount_cents",
    "n_distinct_amounts",
    "n_distinct_iat",
)


def report(criterion: str, detail: str = ""):
    print(f"\n[acceptance] {criterion}: PASS {detail}")


@pytest.fixture(scope="module")
def flagged_dataset():
    """Criterion-3 scenario: 100k honest cards plus 20 of each archetype."""
    config = SynthConfig(
        n_honest_cards=100_000,
        n_merchants=2000,
        seed=42,
        archetypes=(double_machine_gun(20), penny_hunter(20), bursty_poster(20)),
    )
    dataset, truth = generate(config)
    table = extract_features(dataset)
    labels = np.array([truth[c] != KIND_HONEST for c in table.card_ids], bool)
    return dataset, truth, table, labels


def test_criterion_1_feature_oracle_equivalence():
    """100 random datasets: kernel features match the brute-force oracle."""
    rng = np.random.default_rng(2026)
    datasets = [random_dataset(rng, max_cards=50, max_txns=500) for _ in range(100)]
    start = time.perf_counter()
    for d in datasets:
        assert_matches_oracle(extract_features(d), oracle_features(d))
    elapsed = time.perf_counter() - start
    assert elapsed < 10.0, f"oracle sweep took {elapsed:.1f}s"
    report("criterion 1 (feature oracle equivalence)", f"({elapsed:.1f}s)")


def test_criterion_2_linear_scaling():
    """Per-txn pipeline time varies < 25% per doubling; 3.2M under 600 s."""
    sizes = [100_000, 200_000, 400_000, 800_000, 1_600_000, 3_200_000]
    rows = bench(sizes, seed=7, repeats=5)
    per_txn = [r.total_s / r.n_txns for r in rows]
    ratios = [b / a for a, b in zip(per_txn, per_txn[1:])]
    for size, ratio in zip(sizes[1:], ratios):
        assert abs(ratio - 1.0) < 0.25, (
            f"per-txn time moved {ratio:.3f}x at {size} txns"
        )
    assert rows[-1].total_s < 600.0, f"3.2M pipeline took {rows[-1].total_s:.0f}s"
    report(
        "criterion 2 (linear scaling)",
        f"(3.2M in {rows[-1].total_s:.1f}s; worst doubling {max(ratios):.3f}x)",
    )


def test_criterion_3_archetype_detection(flagged_dataset):
    """Default flags recover >= 95% of injected cards; < 1% honest flagged."""
    _, truth, table, _ = flagged_dataset
    classes = auto_classes(table)
    injected = {c: k for c, k in truth.items() if k != KIND_HONEST}
    correct = sum(
        1
        for card, kind in injected.items()
        if classes.get(card, CardClass.Unlabeled).value == kind
    )
    assert correct >= 0.95 * len(injected), f"only {correct}/{len(injected)} recovered"

    honest_total = sum(1 for k in truth.values() if k == KIND_HONEST)
    honest_flagged = sum(
        1
        for card, cls in classes.items()
        if truth.get(card) == KIND_HONEST and cls != CardClass.Unlabeled
    )
    assert honest_flagged < 0.01 * honest_total, (
        f"{honest_flagged} honest cards flagged"
    )
    report(
        "criterion 3 (archetype detection)",
        f"({correct}/{len(injected)} recovered; "
        f"{honest_flagged}/{honest_total} honest flagged)",
    )


def test_criterion_4_kcore_correctness():
    """Peeling matches exhaustive deletion on 1000 random bipartite graphs."""
    star = graph_from_pairs([(0, m) for m in range(5)])
    assert set(core_decomposition(star).values()) == {1}
    cycle = graph_from_pairs([(0, 0), (0, 1), (1, 0), (1, 1)])
    assert set(core_decomposition(cycle).values()) == {2}

    rng = np.random.default_rng(4)
    for _ in range(1000):
        n_c = int(rng.integers(1, 16))
        n_m = int(rng.integers(1, 16))
        pairs = sorted(
            {
                (int(rng.integers(0, n_c)), int(rng.integers(0, n_m)))
                for _ in range(int(rng.integers(0, 40)))
            }
        )
        g = graph_from_pairs(pairs, n_cards=n_c, n_merchants=n_m)
        assert core_decomposition(g) == oracle_cores(g)
    report("criterion 4 (k-core correctness)", "(1000 graphs, exact)")


def test_criterion_5_triplet_law_and_conservation(flagged_dataset):
    """|iat points| = max(0, n-2); bins sum exactly at both granularities."""
    rng = np.random.default_rng(55)
    small = [random_dataset(rng, max_cards=25, max_txns=300) for _ in range(5)]
    dataset, _, table, _ = flagged_dataset

    checked = 0
    for d in small:
        t = extract_features(d)
        ctx = DashboardContext(d, t, build_graph(d), {})
        for row in t:
            payload = ctx.assemble(row.card_id)
            assert len(payload.iat_points) == max(0, row.n_txns - 2)
            idx = np.flatnonzero(d.card_ids == row.card_id)
            total_amt = int(d.amount_cents[idx].sum())
            for bins in (payload.temporal_fine, payload.temporal_coarse):
                assert sum(b[1] for b in bins.bins) == row.n_txns
                assert sum(b[2] for b in bins.bins) == total_amt
            checked += 1

    # spot-check the large scenario on every injected card plus a sample
    ctx = DashboardContext(dataset, table, build_graph(dataset), {})
    sample = [c for c in table.card_ids if not c.startswith("c")]
    sample += list(table.card_ids[:: max(1, len(table) // 50)])
    for card in sample:
        row = table.get(card)
        payload = ctx.assemble(card)
        assert len(payload.iat_points) == max(0, row.n_txns - 2)
        for bins in (payload.temporal_fine, payload.temporal_coarse):
            assert sum(b[1] for b in bins.bins) == row.n_txns
        checked += 1
    report("criterion 5 (triplet law & conservation)", f"({checked} cards)")


def test_criterion_6_ranking_metrics(flagged_dataset):
    """Metrics match enumeration; random AP near prevalence; forest beats 10x."""

    def oracle_ap(scores, labels):
        order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
        hits = 0
        precs = []
        for rank, i in enumerate(order, 1):
            if labels[i]:
                hits += 1
                precs.append(hits / rank)
        return sum(precs) / len(precs)

    rng = np.random.default_rng(66)
    for n in range(1, 9):
        for labs in product([0, 1], repeat=n):
            if not any(labs):
                continue
            scores = rng.integers(0, 4, n).astype(float)
            assert average_precision(scores, np.array(labs, bool)) == pytest.approx(
                oracle_ap(list(scores), list(labs)), rel=1e-12
            )
            for k in range(1, n + 1):
                order = sorted(range(n), key=lambda i: (-scores[i], i))
                expected = sum(1 for i in order[:k] if labs[i]) / k
                assert precision_at_k(scores, np.array(labs, bool), k) == pytest.approx(
                    expected, rel=1e-12
                )

    # random-score AP over prevalence-0.002 labels, 1000 Monte-Carlo shuffles
    n, n_pos = 50_000, 100
    labels = np.zeros(n, bool)
    labels[:n_pos] = True
    aps = [average_precision(rng.random(n), labels) for _ in range(1000)]
    mean_ap = float(np.mean(aps))
    assert 0.001 <= mean_ap <= 0.003, f"random AP {mean_ap:.5f}"

    # substitute property: the absolute numbers of the private benchmark
    # are out of reach, so the forest must beat 10x prevalence here
    _, _, table, fraud = flagged_dataset
    prevalence = fraud.mean()
    X = np.log1p(table.matrix(DEFAULT_FEATURES))
    model = fit(X, n_trees=100, subsample_size=256, seed=0)
    scores = model.scores(X)
    ap = average_precision(scores, fraud)
    p100 = precision_at_k(scores, fraud, 100)
    assert ap >= 10 * prevalence, f"AP {ap:.4f} under 10x prevalence"
    assert p100 >= 10 * prevalence, f"Prec@100 {p100:.4f} under 10x prevalence"
    report(
        "criterion 6 (ranking metrics)",
        f"(random AP {mean_ap:.4f}; forest AP {ap:.3f} = {ap / prevalence:.0f}x, "
        f"Prec@100 {p100:.2f} = {p100 / prevalence:.0f}x)",
    )


def test_criterion_7_forward_selection(flagged_dataset):
    """First 5 picks include n_txns and n_distinct_iat in >= 9 of 10 seeds."""
    _, _, table, fraud = flagged_dataset
    columns = {n: np.log1p(table.column(n).astype(float)) for n in DEFAULT_FEATURES}
    rng = np.random.default_rng(1000)
    for i in range(6):
        columns[f"noise_{i}"] = rng.normal(0, 1, len(table))

    wins = 0
    for seed in range(10):
        curve = forward_select(columns, fraud, list(columns), max_k=5, seed=seed)
        picked = [name for name, _ in curve]
        assert len(picked) <= 5
        if "n_txns" in picked and "n_distinct_iat" in picked:
            wins += 1
    assert wins >= 9, f"signal features picked in only {wins}/10 seeds"
    report("criterion 7 (forward selection)", f"({wins}/10 seeds)")


def test_criterion_8_replay_determinism():
    """A scripted mark/assign sequence replays to byte-identical classes."""
    config = SynthConfig(
        n_honest_cards=2000,
        n_merchants=100,
        seed=9,
        archetypes=(double_machine_gun(3), penny_hunter(3), bursty_poster(3)),
    )
    dataset, _ = generate(config)

    script = [
        ({"x": "n_txns", "y": "n_distinct_iat",
          "cx": 1.8, "cy": 0.45, "rx": 0.55, "ry": 0.55, "angle": 0.0}, "ring-a"),
        ({"x": "n_txns", "y": "median_amount_cents",
          "cx": 1.8, "cy": 2.3, "rx": 0.5, "ry": 0.8, "angle": 0.4}, "ring-b"),
        ({"x": "n_txns", "y": "n_distinct_amounts",
          "cx": 1.25, "cy": 1.25, "rx": 2.0, "ry": 0.4, "angle": 1.1}, "ring-c"),
    ]

    def replay() -> bytes:
        client = TestClient(create_app(Session(dataset)))
        for body, label in script:
            rid = client.post("/regions", json=body).json()["region_id"]
            client.post(f"/regions/{rid}/label", json={"label": label})
        return client.get("/classes").content

    first = replay()
    second = replay()
    assert first == second
    assert b"ring-a" in first
    report("criterion 8 (replay determinism)", f"({len(first)} bytes identical)")
