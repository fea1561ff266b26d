"""Scalability harness: time the detection pipeline across dataset sizes.

For each requested size a synthetic dataset is generated and written to
CSV (untimed), then the full pipeline runs against the file: parse ->
feature extraction -> all pairwise heatmaps -> flags -> graph build.
Rows can be produced for both kernel backends to compare the compiled
loops against the vectorized fallback.
"""

from __future__ import annotations

import csv
import gc
import os
import tempfile
import time
from dataclasses import dataclass, fields

from ._accel import backend as current_backend
from ._accel import set_backend
from ._kernels import warm_up
from .graph import build_graph
from .heatmap import FlagParams, all_pair_heatmaps, auto_classes
from .features import extract_features
from .ingest import parse_transactions, write_dataset
from .synth import (
    SynthConfig,
    bursty_poster,
    double_machine_gun,
    generate,
    penny_hunter,
    scaled_config,
)


@dataclass(frozen=True)
class BenchRow:
    n_txns: int
    backend: str
    parse_s: float
    extract_s: float
    heatmap_s: float
    flags_s: float
    graph_s: float
    total_s: float


def default_bench_config(seed: int = 0) -> SynthConfig:
    return SynthConfig(
        n_merchants=2000,
        seed=seed,
        archetypes=(double_machine_gun(20), penny_hunter(20), bursty_poster(20)),
    )


def run_pipeline(csv_path: str, params: FlagParams | None = None) -> BenchRow:
    """Time one full pass over an on-disk dataset with the active backend.

    GC is paused during the timed section so collector pauses do not
    masquerade as pipeline cost.
    """
    gc.collect()
    gc.disable()
    try:
        t0 = time.perf_counter()
        dataset = parse_transactions(csv_path)
        t1 = time.perf_counter()
        table = extract_features(dataset)
        t2 = time.perf_counter()
        all_pair_heatmaps(table)
        t3 = time.perf_counter()
        auto_classes(table, params or FlagParams())
        t4 = time.perf_counter()
        build_graph(dataset)
        t5 = time.perf_counter()
    finally:
        gc.enable()
    return BenchRow(
        n_txns=len(dataset),
        backend=current_backend(),
        parse_s=t1 - t0,
        extract_s=t2 - t1,
        heatmap_s=t3 - t2,
        flags_s=t4 - t3,
        graph_s=t5 - t4,
        total_s=t5 - t0,
    )


def bench(
    sizes: list[int],
    config: SynthConfig | None = None,
    seed: int = 0,
    backends: tuple[str, ...] | None = None,
    keep_dir: str | None = None,
    repeats: int = 1,
) -> list[BenchRow]:
    """One pipeline timing row per (size, backend).

    With `repeats` > 1 each pipeline runs that many times and the fastest
    wall clock is reported (steady-state cost, shielded from transient
    load on shared machines).
    """
    if not sizes:
        return []
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ValueError("sizes must be strictly ascending")
    config = config or default_bench_config(seed)
    backends = backends or (current_backend(),)
    original = current_backend()
    warm_up()

    rows: list[BenchRow] = []
    tmp_ctx = None
    if keep_dir is None:
        tmp_ctx = tempfile.TemporaryDirectory(prefix="fraudlens-bench-")
        out_dir = tmp_ctx.name
    else:
        os.makedirs(keep_dir, exist_ok=True)
        out_dir = keep_dir
    try:
        for i, size in enumerate(sizes):
            # one dataset at a time: holding the whole ladder in memory
            # would crowd out the page cache the timed runs rely on
            dataset, _ = generate(
                scaled_config(config, seed, i), _target_total=int(size)
            )
            path = os.path.join(out_dir, f"bench_{size}.csv")
            write_dataset(dataset, path)
            del dataset
            gc.collect()
            for name in backends:
                set_backend(name)
                warm_up()
                best = min(
                    (run_pipeline(path) for _ in range(max(1, repeats))),
                    key=lambda r: r.total_s,
                )
                rows.append(best)
            if keep_dir is None:
                os.unlink(path)
    finally:
        set_backend(original)
        if tmp_ctx is not None:
            tmp_ctx.cleanup()
    return rows


def write_bench_csv(rows: list[BenchRow], sink) -> None:
    names = [f.name for f in fields(BenchRow)]
    own = isinstance(sink, str)
    fh = open(sink, "w", encoding="utf-8", newline="") if own else sink
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(names)
        for row in rows:
            writer.writerow(
                [
                    getattr(row, n) if n in ("n_txns", "backend")
                    else f"{getattr(row, n):.6f}"
                    for n in names
                ]
            )
    finally:
        if own:
            fh.close()
