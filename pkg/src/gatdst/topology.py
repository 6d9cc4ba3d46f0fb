"""Graph topologies over domain-slot (and value) nodes.

Two constructions are supported: a complete graph over slot nodes, and a
bipartite slot-value graph where a slot connects to exactly its candidate
values. Adjacency is binary, symmetric, and zero on the diagonal; the self
contribution of a node enters message passing through the hop-0 identity
term, never through the adjacency.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, InvariantError
from .ontology import Ontology

SLOT = "slot"
VALUE = "value"

_FORMAT_HEADER = "gatdst-topology v1"


@dataclass(frozen=True)
class GraphTopology:
    node_kinds: tuple[str, ...]
    node_labels: tuple[str, ...]
    adjacency: np.ndarray

    def __post_init__(self) -> None:
        n = len(self.node_kinds)
        if len(self.node_labels) != n:
            raise InvariantError("node_kinds and node_labels lengths differ")
        s = self.adjacency
        if s.shape != (n, n):
            raise InvariantError(f"adjacency shape {s.shape} does not match {n} nodes")
        if not np.array_equal(s, s.T):
            raise InvariantError("adjacency must be symmetric")
        if np.any(np.diag(s) != 0):
            raise InvariantError("adjacency diagonal must be zero (self hop is k=0)")
        if not np.all((s == 0) | (s == 1)):
            raise InvariantError("adjacency entries must be 0 or 1")
        bad = [k for k in self.node_kinds if k not in (SLOT, VALUE)]
        if bad:
            raise InvariantError(f"unknown node kinds: {bad}")

    @property
    def node_count(self) -> int:
        return len(self.node_kinds)

    @property
    def slot_count(self) -> int:
        count = 0
        for kind in self.node_kinds:
            if kind != SLOT:
                break
            count += 1
        if any(k == SLOT for k in self.node_kinds[count:]):
            raise InvariantError("slot nodes must form a contiguous prefix")
        return count

    def edges(self) -> list[tuple[int, int]]:
        """Undirected edge list as (i, j) pairs with i < j."""
        i_idx, j_idx = np.nonzero(np.triu(self.adjacency, k=1))
        return list(zip(i_idx.tolist(), j_idx.tolist()))

    def to_text(self) -> str:
        lines = [_FORMAT_HEADER, f"nodes {self.node_count}"]
        for kind, label in zip(self.node_kinds, self.node_labels):
            lines.append(f"node {kind} {label}")
        edges = self.edges()
        lines.append(f"edges {len(edges)}")
        for i, j in edges:
            lines.append(f"{i} {j}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "GraphTopology":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines or lines[0] != _FORMAT_HEADER:
            raise DataError(f"unrecognized topology header: {lines[:1]}")
        try:
            n = int(lines[1].split()[1])
            kinds, labels = [], []
            for ln in lines[2 : 2 + n]:
                _, kind, label = ln.split(maxsplit=2)
                kinds.append(kind)
                labels.append(label)
            edge_count = int(lines[2 + n].split()[1])
            adjacency = np.zeros((n, n))
            for ln in lines[3 + n : 3 + n + edge_count]:
                i, j = (int(tok) for tok in ln.split())
                adjacency[i, j] = adjacency[j, i] = 1.0
        except (IndexError, ValueError) as exc:
            raise DataError(f"malformed topology file: {exc}") from exc
        return cls(tuple(kinds), tuple(labels), adjacency)


def build_ds_graph(ontology: Ontology) -> GraphTopology:
    """Complete graph over the slot nodes, in ontology serialization order."""
    n = ontology.slot_count
    if n < 1:
        raise DataError("ontology has no slots")
    adjacency = np.ones((n, n)) - np.eye(n)
    return GraphTopology(
        node_kinds=(SLOT,) * n,
        node_labels=tuple(ontology.slot_keys),
        adjacency=adjacency,
    )


def build_dsv_graph(ontology: Ontology) -> GraphTopology:
    """Bipartite graph: slot i connects to value v iff v is a candidate of i.

    Slot nodes come first (ontology order), then one node per global value.
    Slots with empty candidate sets become isolated nodes.
    """
    n_s = ontology.slot_count
    if n_s < 1:
        raise DataError("ontology has no slots")
    n_v = len(ontology.values)
    if n_v < 1:
        raise DataError("ontology has no values; the slot-value graph needs at least one")
    n = n_s + n_v
    adjacency = np.zeros((n, n))
    for i, candidates in enumerate(ontology.candidates):
        for v in candidates:
            adjacency[i, n_s + v] = 1.0
            adjacency[n_s + v, i] = 1.0
    return GraphTopology(
        node_kinds=(SLOT,) * n_s + (VALUE,) * n_v,
        node_labels=tuple(ontology.slot_keys) + tuple(ontology.values),
        adjacency=adjacency,
    )
