"""Command-line entry points.

Subcommands: synth, extract, detect, rank, select, anonymize, serve,
bench. Config and params files are flat `key = value` text; lines starting
with `#` are ignored.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import anomaly, bench, synth
from .features import FeatureTable, extract_features
from .heatmap import CardClass, FlagParams, auto_classes
from .ingest import anonymize, parse_transactions, write_dataset


def _read_kv(path: str) -> dict[str, str]:
    out: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise SystemExit(f"bad config line (expected key = value): {line!r}")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def _synth_config(kv: dict[str, str], seed_override: int | None) -> synth.SynthConfig:
    archetypes = []
    if int(kv.get("dmg_cards", 0)):
        archetypes.append(synth.double_machine_gun(int(kv["dmg_cards"])))
    if int(kv.get("ph_cards", 0)):
        archetypes.append(synth.penny_hunter(int(kv["ph_cards"])))
    if int(kv.get("bp_cards", 0)):
        archetypes.append(synth.bursty_poster(int(kv["bp_cards"])))
    return synth.SynthConfig(
        n_honest_cards=int(kv.get("n_honest_cards", 1000)),
        n_merchants=int(kv.get("n_merchants", 200)),
        archetypes=tuple(archetypes),
        fraud_label_policy=float(kv.get("fraud_label_policy", 0.25)),
        seed=seed_override if seed_override is not None else int(kv.get("seed", 0)),
        window_days=int(kv.get("window_days", 30)),
    )


def _flag_params(path: str | None) -> FlagParams:
    if not path:
        return FlagParams()
    kv = _read_kv(path)
    defaults = FlagParams()
    return FlagParams(
        tau_n=int(kv.get("tau_n", defaults.tau_n)),
        tau_iat=int(kv.get("tau_iat", defaults.tau_iat)),
        rho_iat=float(kv.get("rho_iat", defaults.rho_iat)),
        tau_amt=int(kv.get("tau_amt", defaults.tau_amt)),
        rho_amt=float(kv.get("rho_amt", defaults.rho_amt)),
        tau_median_cents=int(kv.get("tau_median_cents", defaults.tau_median_cents)),
    )


def _fraud_labels(truth_path: str, card_ids) -> np.ndarray:
    truth = synth.read_ground_truth(truth_path)
    return np.array(
        [truth.get(c, synth.KIND_HONEST) != synth.KIND_HONEST for c in card_ids], bool
    )


def cmd_synth(args) -> int:
    kv = _read_kv(args.config) if args.config else {}
    config = _synth_config(kv, args.seed)
    dataset, truth = synth.generate(config)
    write_dataset(dataset, args.out)
    truth_path = args.truth or args.out + ".truth.csv"
    synth.write_ground_truth(truth, truth_path)
    print(f"wrote {len(dataset)} txns to {args.out}; ground truth in {truth_path}")
    return 0


def cmd_extract(args) -> int:
    dataset = parse_transactions(args.input)
    table = extract_features(dataset)
    table.to_csv(args.out)
    print(f"wrote {len(table)} card feature rows to {args.out}")
    return 0


def cmd_detect(args) -> int:
    dataset = parse_transactions(args.input)
    table = extract_features(dataset)
    classes = auto_classes(table, _flag_params(args.params))
    flagged = {c: k for c, k in classes.items() if k != CardClass.Unlabeled}
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        fh.write("card_id,class\n")
        for card in sorted(flagged):
            fh.write(f"{card},{flagged[card].value}\n")
    print(f"flagged {len(flagged)} of {len(table)} cards -> {args.out}")
    return 0


def cmd_rank(args) -> int:
    table = FeatureTable.from_csv(args.features)
    labels = _fraud_labels(args.labels, table.card_ids)
    names = args.feature_set.split(",")
    # counts and amounts are power-law skewed (the same reason the
    # heatmaps use log axes), so isolation runs in log1p space
    X = np.log1p(table.matrix(names))
    model = anomaly.fit(
        X,
        n_trees=args.trees,
        subsample_size=min(args.subsample, len(table)),
        seed=args.seed,
    )
    scores = model.scores(X)
    order = np.argsort(-scores, kind="stable")
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        fh.write("card_id,score\n")
        for i in order:
            fh.write(f"{table.card_ids[i]},{scores[i]:.6f}\n")
    if labels.any():
        ap = anomaly.average_precision(scores, labels)
        print(f"AP={ap:.4f}", end=" ")
        for k in (100, 1000):
            if k <= len(scores):
                print(f"Prec@{k}={anomaly.precision_at_k(scores, labels, k):.4f}", end=" ")
        print()
    print(f"wrote {len(scores)} scores to {args.out}")
    return 0


def cmd_select(args) -> int:
    table = FeatureTable.from_csv(args.features)
    labels = _fraud_labels(args.labels, table.card_ids)
    candidates = (
        args.candidates.split(",")
        if args.candidates
        else list(table.columns.keys())
    )
    curve = anomaly.forward_select(
        table.columns, labels, candidates, max_k=args.max_k, seed=args.seed
    )
    out = sys.stdout if args.out is None else open(args.out, "w", encoding="utf-8")
    try:
        out.write("step,feature,ap\n")
        for i, (name, ap) in enumerate(curve, 1):
            out.write(f"{i},{name},{ap:.6f}\n")
    finally:
        if args.out is not None:
            out.close()
    return 0


def cmd_anonymize(args) -> int:
    salt = os.environ.get("FRAUDLENS_SALT", "")
    if not salt:
        raise SystemExit("set FRAUDLENS_SALT to a non-empty salt string")
    dataset = parse_transactions(args.input)
    write_dataset(anonymize(dataset, salt.encode("utf-8")), args.out)
    print(f"anonymized {len(dataset)} txns -> {args.out}")
    return 0


def cmd_serve(args) -> int:
    from .server import serve

    frontend = args.frontend if args.frontend and os.path.isdir(args.frontend) else None
    serve(
        args.input,
        host=args.host,
        port=args.port,
        params=_flag_params(args.params),
        frontend_dir=frontend,
    )
    return 0


def cmd_bench(args) -> int:
    sizes = [int(s) for s in args.sizes.split(",") if s]
    backends = tuple(args.backends.split(",")) if args.backends else None
    rows = bench.bench(sizes, seed=args.seed, backends=backends)
    if args.out:
        bench.write_bench_csv(rows, args.out)
    bench.write_bench_csv(rows, sys.stdout)
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="fraudlens")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a labeled synthetic ledger")
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--truth", help="ground-truth sidecar path")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("extract", help="per-card feature extraction")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("detect", help="flag and classify lockstep cards")
    p.add_argument("--input", required=True)
    p.add_argument("--params", help="flag threshold overrides file")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("rank", help="isolation-forest anomaly scores")
    p.add_argument("--features", required=True, help="features CSV from extract")
    p.add_argument("--labels", required=True, help="ground-truth sidecar CSV")
    p.add_argument("--out", required=True)
    p.add_argument("--feature-set", default="n_txns,median_amount_cents,n_distinct_amounts,n_distinct_iat")
    p.add_argument("--trees", type=int, default=100)
    p.add_argument("--subsample", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("select", help="greedy forward feature selection")
    p.add_argument("--features", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--max-k", type=int, default=5)
    p.add_argument("--candidates", help="comma list; defaults to all columns")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("anonymize", help="hash IDs and remap months (FRAUDLENS_SALT)")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_anonymize)

    p = sub.add_parser("serve", help="run the dashboard HTTP service")
    p.add_argument("--input", required=True)
    p.add_argument("--params")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--frontend", default="frontend/dist", help="static UI directory")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("bench", help="pipeline scalability timings")
    p.add_argument("--sizes", required=True, help="comma list of txn counts")
    p.add_argument("--out")
    p.add_argument("--backends", help="comma list: numba,numpy")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
