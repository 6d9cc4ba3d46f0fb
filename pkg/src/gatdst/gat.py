"""K-hop multi-head graph attention layers and the layer cascade.

Each head owns an attention transform Q (F x F) and one feature transform
A_k (F x F) per hop. A head scores node pairs as x_i^T Q x_j, normalizes
exp(LeakyReLU(score)) over each node's neighbors to get the attention matrix
E, and aggregates sum_k (E * S)^k X A_k for k = 0..K-1. Hop 0 is the node's
own features (identity), hop k >= 1 passes features from nodes k steps away.
A layer averages sigma(head output) over its P heads; a stack applies L
layers in sequence, with layer 0 meaning the no-graph identity baseline.

Matrix powers of the masked attention are never materialized: each hop
multiplies the previous hop's node features once more by (E * S), keeping
the cost at O(K N^2 F).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Matrix
from .errors import DimensionError, InvariantError
from .topology import SLOT, GraphTopology

GRAPH_TYPES = ("NoGraph", "DSGraph", "DSVGraph")


@dataclass
class GatHeadParams:
    hop_transforms: list[Matrix]  # A_0 .. A_{K-1}, each F x F
    attention: Matrix  # Q, F x F

    def __post_init__(self) -> None:
        if not self.hop_transforms:
            raise InvariantError("a head must include at least the self hop (K >= 1)")
        f = self.attention.rows
        if self.attention.cols != f:
            raise InvariantError(f"attention transform must be square, got {self.attention.shape}")
        for a in self.hop_transforms:
            if a.shape != (f, f):
                raise InvariantError(
                    f"hop transform shape {a.shape} differs from attention dim {f}"
                )

    @property
    def hops(self) -> int:
        return len(self.hop_transforms)

    @property
    def feature_dim(self) -> int:
        return self.attention.rows

    def parameters(self) -> list[Matrix]:
        return [self.attention, *self.hop_transforms]


@dataclass
class GatLayerParams:
    heads: list[GatHeadParams]
    activation: str = "leaky_relu"  # or "identity"
    activation_slope: float = 0.2
    leaky_slope: float = 0.2  # slope inside the attention normalization

    def __post_init__(self) -> None:
        if not self.heads:
            raise InvariantError("a layer needs at least one head")
        k0, f0 = self.heads[0].hops, self.heads[0].feature_dim
        for h in self.heads:
            if h.hops != k0 or h.feature_dim != f0:
                raise InvariantError("all heads in a layer must share K and F")
        if self.activation not in ("leaky_relu", "identity"):
            raise InvariantError(f"unknown activation {self.activation!r}")

    @property
    def feature_dim(self) -> int:
        return self.heads[0].feature_dim

    def parameters(self) -> list[Matrix]:
        return [p for h in self.heads for p in h.parameters()]


@dataclass
class GatStack:
    layers: list[GatLayerParams] = field(default_factory=list)
    config_name: str = "L0P0K0-NoGraph"

    def __post_init__(self) -> None:
        dims = {layer.feature_dim for layer in self.layers}
        if len(dims) > 1:
            raise InvariantError(f"layers disagree on feature dimension: {sorted(dims)}")

    @property
    def depth(self) -> int:
        return len(self.layers)

    def parameters(self) -> list[Matrix]:
        return [p for layer in self.layers for p in layer.parameters()]

    def named_parameters(self) -> list[tuple[str, Matrix]]:
        return [(p.name, p) for p in self.parameters()]


def config_name(graph_type: str, layers: int, heads: int, hops: int) -> str:
    return f"L{layers}P{heads}K{hops}-{graph_type}"


def stack_graph_type(stack: GatStack) -> str:
    """Graph type encoded in the stack's config name."""
    try:
        graph_type = stack.config_name.split("-", 1)[1]
    except IndexError:
        raise InvariantError(f"malformed config name {stack.config_name!r}") from None
    if graph_type not in GRAPH_TYPES:
        raise InvariantError(f"unknown graph type in {stack.config_name!r}")
    return graph_type


def init_gat_stack(
    graph_type: str,
    layers: int,
    heads: int,
    hops: int,
    feature_dim: int,
    seed: int = 0,
    activation: str = "leaky_relu",
    activation_slope: float = 0.2,
    leaky_slope: float = 0.2,
    init_scale: float = 0.02,
) -> GatStack:
    """Random-normal initialization (scale ``init_scale``), deterministic per seed."""
    if graph_type not in GRAPH_TYPES:
        raise InvariantError(f"graph_type must be one of {GRAPH_TYPES}, got {graph_type!r}")
    if graph_type == "NoGraph":
        if (layers, heads, hops) != (0, 0, 0):
            raise InvariantError("NoGraph requires L=P=K=0")
        return GatStack([], config_name(graph_type, 0, 0, 0))
    if layers < 1 or heads < 1 or hops < 1:
        raise InvariantError(f"{graph_type} requires L>=1, P>=1, K>=1")
    rng = np.random.default_rng(seed)
    stack_layers = []
    for li in range(layers):
        head_list = []
        for pi in range(heads):
            q = ad.parameter(
                rng.normal(0.0, init_scale, size=(feature_dim, feature_dim)),
                name=f"gat.l{li}.h{pi}.q",
            )
            hop_transforms = [
                ad.parameter(
                    rng.normal(0.0, init_scale, size=(feature_dim, feature_dim)),
                    name=f"gat.l{li}.h{pi}.a{ki}",
                )
                for ki in range(hops)
            ]
            head_list.append(GatHeadParams(hop_transforms, q))
        stack_layers.append(
            GatLayerParams(head_list, activation, activation_slope, leaky_slope)
        )
    return GatStack(stack_layers, config_name(graph_type, layers, heads, hops))


# ---------------------------------------------------------------------------
# forward operations
# ---------------------------------------------------------------------------


def _adjacency_matrix(topology_or_s) -> np.ndarray:
    if isinstance(topology_or_s, GraphTopology):
        return topology_or_s.adjacency
    if isinstance(topology_or_s, Matrix):
        return topology_or_s.data
    return np.asarray(topology_or_s, dtype=np.float64)


def attention_matrix(
    x: Matrix, adjacency, head: GatHeadParams, leaky_slope: float = 0.2
) -> Matrix:
    """Per-head attention: masked row softmax of LeakyReLU(x_i^T Q x_j).

    Non-edges get exactly 0; a node with no neighbors gets an all-zero row.
    """
    s = _adjacency_matrix(adjacency)
    n = x.rows
    if s.shape != (n, n):
        raise DimensionError(f"adjacency {s.shape} does not match {n} nodes")
    scores = ad.matmul(ad.matmul(x, head.attention), ad.transpose(x))
    return ad.masked_row_softmax(ad.leaky_relu(scores, leaky_slope), s)


def head_aggregate(x: Matrix, adjacency, attention: Matrix, head: GatHeadParams) -> Matrix:
    """Sum over hops k of (E * S)^k X A_k, with the k=0 term being X A_0."""
    s = _adjacency_matrix(adjacency)
    if head.hops < 1:
        raise InvariantError("head_aggregate requires K >= 1")
    masked = ad.mul(attention, ad.constant(s))
    hop_features = x  # (E * S)^k X, built right-to-left
    total = ad.matmul(hop_features, head.hop_transforms[0])
    for k in range(1, head.hops):
        hop_features = ad.matmul(masked, hop_features)
        total = ad.add(total, ad.matmul(hop_features, head.hop_transforms[k]))
    return total


def _apply_activation(x: Matrix, layer: GatLayerParams) -> Matrix:
    if layer.activation == "identity":
        return x
    return ad.leaky_relu(x, layer.activation_slope)


def gat_layer_forward(x: Matrix, topology, layer: GatLayerParams) -> Matrix:
    """Mean over heads of sigma(head aggregate)."""
    if x.cols != layer.feature_dim:
        raise DimensionError(
            f"input feature dim {x.cols} does not match layer dim {layer.feature_dim}"
        )
    s = _adjacency_matrix(topology)
    total: Matrix | None = None
    for head in layer.heads:
        e = attention_matrix(x, s, head, layer.leaky_slope)
        h = _apply_activation(head_aggregate(x, s, e, head), layer)
        total = h if total is None else ad.add(total, h)
    assert total is not None
    return ad.scale(total, 1.0 / len(layer.heads))


def gat_stack_forward(x0: Matrix, topology, stack: GatStack) -> Matrix:
    """Cascade of L layers; an empty stack is the identity (no-graph baseline)."""
    x = x0
    for layer in stack.layers:
        x = gat_layer_forward(x, topology, layer)
    return x


def slice_slot_outputs(xl: Matrix, topology: GraphTopology) -> Matrix:
    """First N_ds rows of the stack output, in slot order."""
    n_s = topology.slot_count  # validates the slot-prefix ordering
    if topology.node_count != xl.rows:
        raise DimensionError(
            f"features have {xl.rows} rows but topology has {topology.node_count} nodes"
        )
    if n_s == 0 or topology.node_kinds[0] != SLOT:
        raise InvariantError("topology must start with slot nodes")
    return ad.slice_rows(xl, 0, n_s)


def message_passing_oracle(x, adjacency, attention, k: int) -> np.ndarray:
    """(E * S)^k X by k explicit per-node neighbor-sum rounds.

    Test oracle: no matrix powers, no matrix products against the attention;
    each round recomputes every node's features as the attention-weighted sum
    over its neighbors.
    """
    if k < 0:
        raise InvariantError(f"hop count must be >= 0, got {k}")
    x = x.data if isinstance(x, Matrix) else np.asarray(x, dtype=np.float64)
    s = _adjacency_matrix(adjacency)
    e = attention.data if isinstance(attention, Matrix) else np.asarray(attention, dtype=np.float64)
    n = x.shape[0]
    current = x.copy()
    for _ in range(k):
        nxt = np.zeros_like(current)
        for i in range(n):
            for j in range(n):
                if s[i, j] == 1.0:
                    nxt[i] += e[i, j] * current[j]
        current = nxt
    return current
