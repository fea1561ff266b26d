"""Transaction ingestion: parse, validate, anonymize, and persist ledgers.

The canonical file format is comma-delimited UTF-8 text with header
``card_id,merchant_id,amount_cents,timestamp,label,s0..s{F_s-1}``. Amounts
are integer minor units (cents) so repeated-amount reasoning stays
exact-equality safe. Datasets are stored column-wise in numpy arrays and
are immutable after construction; iteration order equals file order.
"""

from __future__ import annotations

import csv
import hashlib
import io
import time
from calendar import monthrange, timegm
from dataclasses import dataclass
from typing import IO, Iterator, Mapping, Sequence

import numpy as np

LABEL_FRAUD = "fraud"
LABEL_HONEST = "honest"
LABEL_UNKNOWN = ""  # labels are optional; unknown is the empty string

_CANONICAL_FIELDS = ("card_id", "merchant_id", "amount_cents", "timestamp", "label")


class IngestError(Exception):
    """Base class for ingestion failures."""


class MalformedRow(IngestError):
    """A data row could not be parsed into a Transaction."""

    def __init__(self, row_index: int, reason: str):
        self.row_index = row_index
        self.reason = reason
        super().__init__(f"row {row_index}: {reason}")


class NegativeAmount(MalformedRow):
    """Amount column held a negative value."""

    def __init__(self, row_index: int, amount: int):
        super().__init__(row_index, f"negative amount {amount}")
        self.amount = amount


class HashCollision(IngestError):
    """Two distinct IDs hashed to the same token; change the salt."""


class IoFailure(IngestError):
    """Underlying stream failed while writing."""


@dataclass(frozen=True)
class Transaction:
    """One ledger row: who charged whom, how much, and when.

    `suspicion_counts` carries upstream risk counters (length is a
    dataset-wide constant, possibly zero). `fraud_label` is tri-state:
    "fraud", "honest", or "" for unknown.
    """

    card_id: str
    merchant_id: str
    amount_cents: int
    timestamp: int
    suspicion_counts: tuple[int, ...] = ()
    fraud_label: str = LABEL_UNKNOWN


class Dataset:
    """Columnar, append-ordered transaction collection.

    Immutable after construction; safe to share across concurrent readers.
    """

    def __init__(
        self,
        card_ids: Sequence[str] | np.ndarray,
        merchant_ids: Sequence[str] | np.ndarray,
        amount_cents: Sequence[int] | np.ndarray,
        timestamps: Sequence[int] | np.ndarray,
        suspicion_counts: np.ndarray | None = None,
        labels: Sequence[str] | np.ndarray | None = None,
    ):
        n = len(card_ids)
        self.card_ids = np.asarray(card_ids, dtype=object)
        self.merchant_ids = np.asarray(merchant_ids, dtype=object)
        self.amount_cents = np.asarray(amount_cents, dtype=np.int64)
        self.timestamps = np.asarray(timestamps, dtype=np.int64)
        if suspicion_counts is None:
            suspicion_counts = np.zeros((n, 0), dtype=np.int64)
        self.suspicion_counts = np.asarray(suspicion_counts, dtype=np.int64)
        if self.suspicion_counts.ndim != 2 or len(self.suspicion_counts) != n:
            raise ValueError("suspicion_counts must be an (n_txns, F_s) matrix")
        if labels is None:
            labels = np.full(n, LABEL_UNKNOWN, dtype=object)
        self.labels = np.asarray(labels, dtype=object)
        if not (
            len(self.merchant_ids)
            == len(self.amount_cents)
            == len(self.timestamps)
            == len(self.labels)
            == n
        ):
            raise ValueError("column lengths differ")
        if n and self.amount_cents.min() < 0:
            bad = int(np.argmax(self.amount_cents < 0))
            raise NegativeAmount(bad, int(self.amount_cents[bad]))
        if n:
            self.time_window = (int(self.timestamps.min()), int(self.timestamps.max()))
        else:
            self.time_window = (0, 0)

    @property
    def suspicion_dim(self) -> int:
        return self.suspicion_counts.shape[1]

    def __len__(self) -> int:
        return len(self.card_ids)

    def row(self, i: int) -> Transaction:
        return Transaction(
            card_id=self.card_ids[i],
            merchant_id=self.merchant_ids[i],
            amount_cents=int(self.amount_cents[i]),
            timestamp=int(self.timestamps[i]),
            suspicion_counts=tuple(int(v) for v in self.suspicion_counts[i]),
            fraud_label=self.labels[i],
        )

    def __iter__(self) -> Iterator[Transaction]:
        for i in range(len(self)):
            yield self.row(i)

    def equals(self, other: "Dataset") -> bool:
        """Field-for-field equality, including row order."""
        return (
            len(self) == len(other)
            and self.suspicion_dim == other.suspicion_dim
            and bool(np.array_equal(self.card_ids, other.card_ids))
            and bool(np.array_equal(self.merchant_ids, other.merchant_ids))
            and bool(np.array_equal(self.amount_cents, other.amount_cents))
            and bool(np.array_equal(self.timestamps, other.timestamps))
            and bool(np.array_equal(self.suspicion_counts, other.suspicion_counts))
            and bool(np.array_equal(self.labels, other.labels))
        )

    # token factorizations are shared by feature extraction, graph
    # construction, and dashboard assembly; compute once, lazily
    def card_codes(self) -> tuple[np.ndarray, np.ndarray]:
        if not hasattr(self, "_card_codes"):
            self._card_codes = factorize(self.card_ids)
        return self._card_codes

    def merchant_codes(self) -> tuple[np.ndarray, np.ndarray]:
        if not hasattr(self, "_merchant_codes"):
            self._merchant_codes = factorize(self.merchant_ids)
        return self._merchant_codes


def factorize(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Map tokens to dense int codes; uniques returned in sorted order.

    Runs as one memcmp sort over fixed-width byte keys: hashing millions
    of token strings through a python dict has cache cliffs this path
    avoids. Non-ASCII tokens take the equivalent (slower) object sort.
    """
    values = np.asarray(values, dtype=object)
    n = len(values)
    if n == 0:
        return np.zeros(0, np.int64), values
    keys = _sort_keys(values)
    order = np.argsort(keys, kind="stable")
    sk = keys[order]
    new_run = np.empty(n, bool)
    new_run[0] = True
    new_run[1:] = sk[1:] != sk[:-1]
    codes = np.empty(n, np.int64)
    codes[order] = np.cumsum(new_run) - 1
    return codes, values[order[new_run]]


def _sort_keys(tokens: np.ndarray) -> np.ndarray:
    """Fixed-width byte view of ASCII tokens so argsort runs on memcmp."""
    try:
        width = max(1, max(len(t) for t in tokens))
        return np.asarray(tokens, dtype=f"S{width}")
    except (UnicodeEncodeError, TypeError):
        return tokens


class _Layout:
    """Resolved column positions for one parse."""

    def __init__(self, header: list[str], schema: Mapping[str, str] | None):
        schema = dict(schema or {})
        prefix = schema.pop("suspicion_prefix", "s")
        colname = {f: schema.get(f, f) for f in _CANONICAL_FIELDS}
        pos = {name: i for i, name in enumerate(header)}
        for field in ("card_id", "merchant_id", "amount_cents", "timestamp"):
            if colname[field] not in pos:
                raise MalformedRow(-1, f"missing required column {colname[field]!r}")
        self.card = colname["card_id"]
        self.merchant = colname["merchant_id"]
        self.amount = colname["amount_cents"]
        self.timestamp = colname["timestamp"]
        self.label = colname["label"] if colname["label"] in pos else None
        susp = []
        for name in pos:
            if name.startswith(prefix) and name[len(prefix):].isdigit():
                susp.append((int(name[len(prefix):]), name))
        self.suspicion = [name for _, name in sorted(susp)]
        self.index = pos


def parse_transactions(
    source: str | bytes | IO,
    schema: Mapping[str, str] | None = None,
) -> Dataset:
    """Parse a delimited text stream into a Dataset.

    `schema` maps Transaction field names to header names; defaults to the
    canonical header. Suspicion columns are every header named ``s<k>``
    (or whatever `schema["suspicion_prefix"]` says), taken in numeric
    order. Raises MalformedRow (with the 0-based data-row index) for
    unparseable required columns; an empty input yields an empty Dataset.

    Well-formed files go through the C csv engine (million-row ledgers
    parse in seconds); on any fast-path failure the row-by-row parser
    re-reads the input to name the offending row.
    """
    if isinstance(source, str):
        with open(source, "rb") as fh:
            first_line = fh.readline().decode("utf-8")
        if not first_line.strip():
            return Dataset([], [], [], [])
        layout = _Layout(next(csv.reader(io.StringIO(first_line))), schema)
        try:
            return _parse_fast(source, layout)
        except MalformedRow:
            raise
        except Exception:
            with open(source, "rb") as fh:
                return _parse_rows(fh.read(), layout)

    if isinstance(source, bytes):
        data = source
    else:
        raw = source.read()
        data = raw.encode("utf-8") if isinstance(raw, str) else raw
    if not data.strip():
        return Dataset([], [], [], [])
    first_line = data.split(b"\n", 1)[0].decode("utf-8")
    layout = _Layout(next(csv.reader(io.StringIO(first_line))), schema)
    try:
        return _parse_fast(io.BytesIO(data), layout)
    except MalformedRow:
        raise
    except Exception:
        return _parse_rows(data, layout)


def _parse_fast(source, layout: _Layout) -> Dataset:
    import pandas as pd

    usecols = [layout.card, layout.merchant, layout.amount, layout.timestamp]
    dtype = {
        layout.card: object,
        layout.merchant: object,
        layout.amount: np.int64,
        layout.timestamp: np.int64,
    }
    if layout.label is not None:
        usecols.append(layout.label)
        dtype[layout.label] = object
    for name in layout.suspicion:
        usecols.append(name)
        dtype[name] = np.int64

    df = pd.read_csv(
        source,
        usecols=usecols,
        dtype=dtype,
        keep_default_na=False,
        skip_blank_lines=True,
    )
    amounts = df[layout.amount].to_numpy()
    if len(amounts) and amounts.min() < 0:
        bad = int(np.argmax(amounts < 0))
        raise NegativeAmount(bad, int(amounts[bad]))
    if layout.label is not None:
        labels = df[layout.label].to_numpy(dtype=object)
        ok = np.isin(labels, (LABEL_FRAUD, LABEL_HONEST, LABEL_UNKNOWN))
        if not ok.all():
            bad = int(np.argmax(~ok))
            raise MalformedRow(bad, f"unknown label {labels[bad]!r}")
    else:
        labels = np.full(len(df), LABEL_UNKNOWN, dtype=object)
    if layout.suspicion:
        susp = np.column_stack([df[c].to_numpy(np.int64) for c in layout.suspicion])
    else:
        susp = np.zeros((len(df), 0), np.int64)
    return Dataset(
        df[layout.card].to_numpy(dtype=object),
        df[layout.merchant].to_numpy(dtype=object),
        amounts,
        df[layout.timestamp].to_numpy(),
        susp,
        labels,
    )


def _parse_rows(data: bytes, layout: _Layout) -> Dataset:
    """Row-by-row parse; slower, but errors carry the data-row index."""
    reader = csv.reader(io.StringIO(data.decode("utf-8")))
    next(reader)  # header already validated
    i_card = layout.index[layout.card]
    i_merch = layout.index[layout.merchant]
    i_amt = layout.index[layout.amount]
    i_ts = layout.index[layout.timestamp]
    i_label = layout.index.get(layout.label) if layout.label else None
    susp_idx = [layout.index[name] for name in layout.suspicion]

    cards: list[str] = []
    merchants: list[str] = []
    amounts: list[int] = []
    timestamps: list[int] = []
    labels: list[str] = []
    suspicion: list[int] = []  # flat, reshaped at the end

    for r, row in enumerate(reader):
        if not row:
            continue
        try:
            amt = int(row[i_amt])
            ts = int(row[i_ts])
            card = row[i_card]
            merch = row[i_merch]
            label = row[i_label] if i_label is not None else LABEL_UNKNOWN
            susp = [int(row[i]) for i in susp_idx]
        except (ValueError, IndexError) as exc:
            raise MalformedRow(r, str(exc)) from exc
        if amt < 0:
            raise NegativeAmount(r, amt)
        if label not in (LABEL_FRAUD, LABEL_HONEST, LABEL_UNKNOWN):
            raise MalformedRow(r, f"unknown label {label!r}")
        cards.append(card)
        merchants.append(merch)
        amounts.append(amt)
        timestamps.append(ts)
        labels.append(label)
        suspicion.extend(susp)

    susp_matrix = np.asarray(suspicion, dtype=np.int64).reshape(
        len(cards), len(susp_idx)
    )
    return Dataset(cards, merchants, amounts, timestamps, susp_matrix, labels)


def write_dataset(d: Dataset, sink: str | IO) -> int:
    """Write the canonical CSV so that parse(write(d)) round-trips exactly.

    Returns the number of data rows written.
    """
    own = isinstance(sink, str)
    fh: IO[str]
    if own:
        fh = open(sink, "w", encoding="utf-8", newline="")
    elif isinstance(sink, io.TextIOBase):
        fh = sink
    else:
        fh = io.TextIOWrapper(sink, encoding="utf-8", newline="")
    try:
        writer = csv.writer(fh, lineterminator="\n")
        header = list(_CANONICAL_FIELDS) + [f"s{k}" for k in range(d.suspicion_dim)]
        writer.writerow(header)
        susp = d.suspicion_counts
        for i in range(len(d)):
            row = [
                d.card_ids[i],
                d.merchant_ids[i],
                int(d.amount_cents[i]),
                int(d.timestamps[i]),
                d.labels[i],
            ]
            if susp.shape[1]:
                row.extend(int(v) for v in susp[i])
            writer.writerow(row)
        fh.flush()
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    finally:
        if own:
            fh.close()
        elif isinstance(fh, io.TextIOWrapper):
            fh.detach()
    return len(d)


def _token(kind: str, raw_id: str, salt: bytes) -> str:
    # 64-bit keyed hash; short enough for UI display, collisions checked
    h = hashlib.blake2b(
        f"{kind}:{raw_id}".encode("utf-8"), key=salt, digest_size=8
    )
    return h.hexdigest()


def _hash_ids(values: np.ndarray, kind: str, salt: bytes) -> np.ndarray:
    mapping: dict[str, str] = {}
    seen: dict[str, str] = {}
    for v in values:
        if v not in mapping:
            tok = _token(kind, v, salt)
            if tok in seen and seen[tok] != v:
                raise HashCollision(
                    f"{kind} IDs {seen[tok]!r} and {v!r} both map to {tok}"
                )
            seen[tok] = v
            mapping[v] = tok
    out = np.empty(len(values), dtype=object)
    for i, v in enumerate(values):
        out[i] = mapping[v]
    return out


def _month_permutation(months: list[tuple[int, int]], salt: bytes) -> dict:
    """Salted permutation of the observed (year, month) pairs.

    Pairs are only shuffled within groups of equal month length so every
    day-of-month stays representable after remapping.
    """
    by_len: dict[int, list[tuple[int, int]]] = {}
    for ym in sorted(months):
        by_len.setdefault(monthrange(ym[0], ym[1])[1], []).append(ym)
    perm: dict[tuple[int, int], tuple[int, int]] = {}
    for ndays, group in sorted(by_len.items()):
        digest = hashlib.blake2b(
            f"month-permutation:{ndays}".encode(), key=salt, digest_size=8
        ).digest()
        rng = np.random.Generator(np.random.PCG64(int.from_bytes(digest, "big")))
        shuffled = list(group)
        rng.shuffle(shuffled)
        perm.update(zip(group, shuffled))
    return perm


def _month_start(year: int, month: int) -> int:
    return timegm((year, month, 1, 0, 0, 0))


def anonymize(d: Dataset, salt: bytes) -> Dataset:
    """Replace IDs by keyed-hash tokens and remap timestamp year/month.

    Day-of-month, time-of-day, amounts, and relative order within each
    remapped month are preserved; the (year, month) of every timestamp is
    permuted by a salted shuffle. Deterministic per salt. Raises
    HashCollision when two distinct IDs map to one token.
    """
    if not salt:
        raise ValueError("salt must be non-empty")
    cards = _hash_ids(d.card_ids, "card", salt)
    merchants = _hash_ids(d.merchant_ids, "merchant", salt)

    new_ts = d.timestamps.copy()
    if len(d):
        lo = time.gmtime(int(d.timestamps.min()))
        hi = time.gmtime(int(d.timestamps.max()))
        months = []
        y, m = lo.tm_year, lo.tm_mon
        while (y, m) <= (hi.tm_year, hi.tm_mon):
            months.append((y, m))
            y, m = (y + 1, 1) if m == 12 else (y, m + 1)
        perm = _month_permutation(months, salt)

        starts = np.array([_month_start(*ym) for ym in months], dtype=np.int64)
        new_starts = np.array([_month_start(*perm[ym]) for ym in months], dtype=np.int64)
        idx = np.searchsorted(starts, d.timestamps, side="right") - 1
        new_ts = new_starts[idx] + (d.timestamps - starts[idx])

    return Dataset(
        cards,
        merchants,
        d.amount_cents.copy(),
        new_ts,
        d.suspicion_counts.copy(),
        d.labels.copy(),
    )
