"""Card-merchant graph, two-step egonets, and core decomposition.

The graph is bipartite: cards on one side, merchants on the other, one
edge per (card, merchant) pair carrying aggregated txn and confirmed-fraud
counts. Core numbers use structural degrees (distinct neighbors, edge
multiplicity ignored); a node deep in a high-k core is well connected,
the usual sign of coordinated lockstep activity.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from ._kernels import core_numbers
from .ingest import Dataset, LABEL_FRAUD

ROLE_CARD = "card"
ROLE_MERCHANT = "merchant"


class GraphError(Exception):
    pass


class UnknownCard(GraphError, KeyError):
    pass


class EmptyGraph(GraphError):
    pass


@dataclass
class BipartiteGraph:
    """Immutable after construction; queries are read-only."""

    card_tokens: np.ndarray  # sorted object array
    merchant_tokens: np.ndarray  # sorted object array
    edge_card: np.ndarray  # int64 indices into card_tokens
    edge_merchant: np.ndarray
    edge_txn_count: np.ndarray
    edge_fraud_count: np.ndarray
    card_indptr: np.ndarray = field(init=False)
    merchant_indptr: np.ndarray = field(init=False)
    merchant_edge_order: np.ndarray = field(init=False)

    def __post_init__(self):
        if len(self.edge_txn_count) and self.edge_txn_count.min() < 1:
            raise ValueError("edge txn_count must be positive")
        if np.any(self.edge_fraud_count > self.edge_txn_count):
            raise ValueError("edge fraud_count cannot exceed txn_count")
        n_c = len(self.card_tokens)
        n_m = len(self.merchant_tokens)
        self.card_indptr = np.concatenate(
            [[0], np.cumsum(np.bincount(self.edge_card, minlength=n_c))]
        ).astype(np.int64)
        order = np.lexsort((self.edge_card, self.edge_merchant))
        self.merchant_edge_order = order.astype(np.int64)
        self.merchant_indptr = np.concatenate(
            [[0], np.cumsum(np.bincount(self.edge_merchant, minlength=n_m))]
        ).astype(np.int64)

    @staticmethod
    def from_edges(
        card_tokens, merchant_tokens, edge_card, edge_merchant, txn_count, fraud_count
    ) -> "BipartiteGraph":
        edge_card = np.asarray(edge_card, np.int64)
        edge_merchant = np.asarray(edge_merchant, np.int64)
        order = np.lexsort((edge_merchant, edge_card))
        return BipartiteGraph(
            card_tokens=np.asarray(card_tokens, dtype=object),
            merchant_tokens=np.asarray(merchant_tokens, dtype=object),
            edge_card=edge_card[order],
            edge_merchant=edge_merchant[order],
            edge_txn_count=np.asarray(txn_count, np.int64)[order],
            edge_fraud_count=np.asarray(fraud_count, np.int64)[order],
        )

    @property
    def n_cards(self) -> int:
        return len(self.card_tokens)

    @property
    def n_merchants(self) -> int:
        return len(self.merchant_tokens)

    @property
    def n_nodes(self) -> int:
        return self.n_cards + self.n_merchants

    @property
    def n_edges(self) -> int:
        return len(self.edge_card)

    def card_index(self, token: str) -> int:
        i = int(np.searchsorted(self.card_tokens, token))
        if i >= self.n_cards or self.card_tokens[i] != token:
            raise UnknownCard(token)
        return i

    # per-node aggregates (n_txns sums incident edge txn counts)
    def card_txns(self) -> np.ndarray:
        return np.bincount(
            self.edge_card, weights=self.edge_txn_count, minlength=self.n_cards
        ).astype(np.int64)

    def card_fraud(self) -> np.ndarray:
        return np.bincount(
            self.edge_card, weights=self.edge_fraud_count, minlength=self.n_cards
        ).astype(np.int64)

    def card_degree(self) -> np.ndarray:
        return (self.card_indptr[1:] - self.card_indptr[:-1]).astype(np.int64)

    def merchant_txns(self) -> np.ndarray:
        return np.bincount(
            self.edge_merchant, weights=self.edge_txn_count, minlength=self.n_merchants
        ).astype(np.int64)

    def merchant_fraud(self) -> np.ndarray:
        return np.bincount(
            self.edge_merchant, weights=self.edge_fraud_count, minlength=self.n_merchants
        ).astype(np.int64)

    def merchant_degree(self) -> np.ndarray:
        return (self.merchant_indptr[1:] - self.merchant_indptr[:-1]).astype(np.int64)


def build_graph(d: Dataset) -> BipartiteGraph:
    """Aggregate a dataset into one edge per (card, merchant) pair."""
    card_codes, card_tokens = d.card_codes()
    merch_codes, merchant_tokens = d.merchant_codes()
    n_m = max(1, len(merchant_tokens))
    keys = card_codes * n_m + merch_codes
    uniq, inverse = np.unique(keys, return_inverse=True)
    txn_count = np.bincount(inverse, minlength=len(uniq)).astype(np.int64)
    is_fraud = (d.labels == LABEL_FRAUD).astype(np.float64)
    fraud_count = np.bincount(inverse, weights=is_fraud, minlength=len(uniq)).astype(
        np.int64
    )
    return BipartiteGraph(
        card_tokens=card_tokens,
        merchant_tokens=merchant_tokens,
        edge_card=(uniq // n_m).astype(np.int64),
        edge_merchant=(uniq % n_m).astype(np.int64),
        edge_txn_count=txn_count,
        edge_fraud_count=fraud_count,
    )


def two_step_egonet(g: BipartiteGraph, target: str) -> BipartiteGraph:
    """Subgraph induced on nodes within two hops of the target card.

    That is: the target, its merchants, and those merchants' cards, with
    every edge of `g` between included nodes retained.
    """
    ci = g.card_index(target)
    e0 = slice(g.card_indptr[ci], g.card_indptr[ci + 1])
    merchants = g.edge_merchant[e0]

    edge_ids = [np.zeros(0, np.int64)]
    for m in merchants:
        lo, hi = g.merchant_indptr[m], g.merchant_indptr[m + 1]
        edge_ids.append(g.merchant_edge_order[lo:hi])
    edges = np.concatenate(edge_ids)

    cards = np.unique(np.concatenate([g.edge_card[edges], [ci]]))
    merchants = np.unique(merchants)

    return BipartiteGraph.from_edges(
        card_tokens=g.card_tokens[cards],
        merchant_tokens=g.merchant_tokens[merchants],
        edge_card=np.searchsorted(cards, g.edge_card[edges]),
        edge_merchant=np.searchsorted(merchants, g.edge_merchant[edges]),
        txn_count=g.edge_txn_count[edges],
        fraud_count=g.edge_fraud_count[edges],
    )


def _core_arrays(g: BipartiteGraph) -> tuple[np.ndarray, np.ndarray]:
    """Core numbers for (cards, merchants) via unified-CSR peeling."""
    n_c, n_m = g.n_cards, g.n_merchants
    deg_c = g.card_degree()
    deg_m = g.merchant_degree()
    indptr = np.concatenate([[0], np.cumsum(np.concatenate([deg_c, deg_m]))]).astype(
        np.int64
    )
    indices = np.concatenate(
        [
            g.edge_merchant + n_c,  # card rows, already card-major
            g.edge_card[g.merchant_edge_order],  # merchant rows
        ]
    ).astype(np.int64)
    cores = core_numbers(indptr, indices)
    return cores[:n_c], cores[n_c:]


def core_decomposition(g: BipartiteGraph) -> dict[tuple[str, str], int]:
    """Largest k such that each node belongs to a k-core.

    Keys are (role, token) pairs since card and merchant ID spaces are
    disjoint by construction but not guaranteed disjoint as strings.
    """
    card_cores, merch_cores = _core_arrays(g)
    out: dict[tuple[str, str], int] = {}
    for tok, k in zip(g.card_tokens, card_cores):
        out[(ROLE_CARD, tok)] = int(k)
    for tok, k in zip(g.merchant_tokens, merch_cores):
        out[(ROLE_MERCHANT, tok)] = int(k)
    return out


def main_core(g: BipartiteGraph) -> tuple[int, set[tuple[str, str]]]:
    """The non-empty k-core with the largest k, as (k, member node set)."""
    if g.n_nodes == 0:
        raise EmptyGraph("graph has no nodes")
    card_cores, merch_cores = _core_arrays(g)
    k = int(max(card_cores.max() if g.n_cards else 0,
                merch_cores.max() if g.n_merchants else 0))
    members = {
        (ROLE_CARD, tok) for tok, c in zip(g.card_tokens, card_cores) if c == k
    } | {
        (ROLE_MERCHANT, tok) for tok, c in zip(g.merchant_tokens, merch_cores) if c == k
    }
    return k, members


@dataclass(frozen=True)
class EgoNode:
    token: str
    role: str
    n_txns: int
    n_counterparties: int
    n_fraud_txns: int
    core_number: int
    in_main_core: bool
    is_target: bool


@dataclass(frozen=True)
class EgoEdge:
    card: str
    merchant: str
    txn_count: int
    fraud_count: int
    display_width: float


@dataclass(frozen=True)
class EgonetView:
    """Two-step egonet of a target card with its main core annotated.

    Core numbers are local to the egonet, and node aggregates count only
    the included edges (so they satisfy the subgraph's own invariants).
    """

    target_card: str
    core_k: int
    nodes: tuple[EgoNode, ...]
    edges: tuple[EgoEdge, ...]

    @property
    def main_core_members(self) -> set[tuple[str, str]]:
        return {(n.role, n.token) for n in self.nodes if n.in_main_core}

    def to_doc(self) -> dict:
        return {
            "target_card": self.target_card,
            "core_k": self.core_k,
            "nodes": [
                {
                    "token": n.token,
                    "role": n.role,
                    "n_txns": n.n_txns,
                    "n_counterparties": n.n_counterparties,
                    "n_fraud_txns": n.n_fraud_txns,
                    "core_number": n.core_number,
                    "in_main_core": n.in_main_core,
                    "is_target": n.is_target,
                }
                for n in self.nodes
            ],
            "edges": [
                {
                    "card": e.card,
                    "merchant": e.merchant,
                    "txn_count": e.txn_count,
                    "fraud_count": e.fraud_count,
                    "display_width": e.display_width,
                }
                for e in self.edges
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_doc(), separators=(",", ":"))


def egonet_view(g: BipartiteGraph, target: str) -> EgonetView:
    """Assemble the displayable egonet evidence for one card."""
    ego = two_step_egonet(g, target)
    card_cores, merch_cores = _core_arrays(ego)
    k = int(max(card_cores.max() if ego.n_cards else 0,
                merch_cores.max() if ego.n_merchants else 0))

    nodes = []
    c_txns, c_deg, c_fraud = ego.card_txns(), ego.card_degree(), ego.card_fraud()
    for i, tok in enumerate(ego.card_tokens):
        nodes.append(
            EgoNode(
                token=tok,
                role=ROLE_CARD,
                n_txns=int(c_txns[i]),
                n_counterparties=int(c_deg[i]),
                n_fraud_txns=int(c_fraud[i]),
                core_number=int(card_cores[i]),
                in_main_core=bool(card_cores[i] == k),
                is_target=tok == target,
            )
        )
    m_txns, m_deg, m_fraud = (
        ego.merchant_txns(),
        ego.merchant_degree(),
        ego.merchant_fraud(),
    )
    for i, tok in enumerate(ego.merchant_tokens):
        nodes.append(
            EgoNode(
                token=tok,
                role=ROLE_MERCHANT,
                n_txns=int(m_txns[i]),
                n_counterparties=int(m_deg[i]),
                n_fraud_txns=int(m_fraud[i]),
                core_number=int(merch_cores[i]),
                in_main_core=bool(merch_cores[i] == k),
                is_target=False,
            )
        )
    nodes.sort(key=lambda n: (n.role, n.token))

    edges = [
        EgoEdge(
            card=ego.card_tokens[ego.edge_card[j]],
            merchant=ego.merchant_tokens[ego.edge_merchant[j]],
            txn_count=int(ego.edge_txn_count[j]),
            fraud_count=int(ego.edge_fraud_count[j]),
            display_width=math.log10(1 + int(ego.edge_txn_count[j])),
        )
        for j in range(ego.n_edges)
    ]
    edges.sort(key=lambda e: (e.card, e.merchant))
    return EgonetView(
        target_card=target, core_k=k, nodes=tuple(nodes), edges=tuple(edges)
    )
