"""Tiny causal decoder-only language model with an extended decode head.

One set of weights serves two passes per turn: a pre-extraction pass that
reads the dialogue history followed by the fixed all-slots prompt and picks
the hidden state at each slot's dedicated token, and a generation pass that
scores the state string left to right. The decode head always consumes 2h
inputs: the transformer hidden state concatenated with either the slot's
graph output feature (at positions whose next token is a value token) or an
all-zero vector everywhere else.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import autodiff as ad
from . import gat as gat_ops
from .autodiff import Matrix
from .errors import DataError, DimensionError, InvariantError
from .gat import GatStack
from .ontology import BeliefState, Ontology
from .serialization import SlotPrompt, parse_state
from .tokenizer import BOC, BOS, EOS, SEP, Tokenizer
from .topology import GraphTopology


@dataclass(frozen=True)
class LmConfig:
    """Architecture hyperparameters.

    Weights are initialized from a normal with scale ``init_scale`` (layer
    norm gains start at 1, all biases at 0), deterministically per seed.
    """

    layers: int = 2
    heads: int = 2
    hidden_size: int = 64
    context_length: int = 256
    ff_multiplier: int = 4
    seed: int = 0
    init_scale: float = 0.02

    def __post_init__(self) -> None:
        if self.hidden_size % self.heads != 0:
            raise InvariantError(
                f"hidden size {self.hidden_size} not divisible by {self.heads} heads"
            )
        if min(self.layers, self.heads, self.hidden_size, self.context_length) < 1:
            raise InvariantError("layers, heads, hidden_size, context_length must be >= 1")

    @property
    def head_dim(self) -> int:
        return self.hidden_size // self.heads


class TrackerModel:
    """Parameter container plus the differentiable forward passes."""

    def __init__(self, config: LmConfig, tokenizer: Tokenizer, params: dict[str, Matrix]):
        self.config = config
        self.tokenizer = tokenizer
        self.params = params

    @property
    def vocab_size(self) -> int:
        return self.tokenizer.size

    def parameters(self) -> list[Matrix]:
        return list(self.params.values())

    def named_parameters(self) -> list[tuple[str, Matrix]]:
        return [(name, p) for name, p in self.params.items()]

    def __getitem__(self, name: str) -> Matrix:
        return self.params[name]


def init_model(config: LmConfig, tokenizer: Tokenizer) -> TrackerModel:
    """Deterministic initialization; same seed gives byte-identical weights."""
    rng = np.random.default_rng(config.seed)
    h, c = config.hidden_size, config.context_length
    d, f = config.head_dim, config.ff_multiplier * config.hidden_size
    v = tokenizer.size
    params: dict[str, Matrix] = {}

    def normal(name: str, shape: tuple[int, int]) -> None:
        params[name] = ad.parameter(rng.normal(0.0, config.init_scale, size=shape), name)

    def ones(name: str, shape: tuple[int, int]) -> None:
        params[name] = ad.parameter(np.ones(shape), name)

    def zeros(name: str, shape: tuple[int, int]) -> None:
        params[name] = ad.parameter(np.zeros(shape), name)

    normal("lm.tok_emb", (v, h))
    normal("lm.pos_emb", (c, h))
    for i in range(config.layers):
        ones(f"lm.b{i}.ln1.gain", (1, h))
        zeros(f"lm.b{i}.ln1.bias", (1, h))
        for j in range(config.heads):
            normal(f"lm.b{i}.attn.h{j}.wq", (h, d))
            normal(f"lm.b{i}.attn.h{j}.wk", (h, d))
            normal(f"lm.b{i}.attn.h{j}.wv", (h, d))
        normal(f"lm.b{i}.attn.wo", (h, h))
        zeros(f"lm.b{i}.attn.bo", (1, h))
        ones(f"lm.b{i}.ln2.gain", (1, h))
        zeros(f"lm.b{i}.ln2.bias", (1, h))
        normal(f"lm.b{i}.ff.w1", (h, f))
        zeros(f"lm.b{i}.ff.b1", (1, f))
        normal(f"lm.b{i}.ff.w2", (f, h))
        zeros(f"lm.b{i}.ff.b2", (1, h))
    ones("lm.lnf.gain", (1, h))
    zeros("lm.lnf.bias", (1, h))
    normal("lm.head.w", (2 * h, v))
    zeros("lm.head.b", (1, v))
    return TrackerModel(config, tokenizer, params)


@lru_cache(maxsize=64)
def _causal_mask(n: int) -> np.ndarray:
    return np.tril(np.ones((n, n)))


def causal_forward(model: TrackerModel, token_ids) -> Matrix:
    """Final-block hidden states, one row per position; strictly causal."""
    ids = np.asarray(token_ids, dtype=np.int64)
    n = ids.shape[0]
    if n < 1:
        raise DataError("causal_forward needs at least one token")
    if n > model.config.context_length:
        raise DataError(
            f"sequence of {n} tokens exceeds context length {model.config.context_length}"
        )
    p = model.params
    x = ad.add(
        ad.gather_rows(p["lm.tok_emb"], ids),
        ad.gather_rows(p["lm.pos_emb"], np.arange(n)),
    )
    mask = _causal_mask(n)
    scale = 1.0 / np.sqrt(model.config.head_dim)
    for i in range(model.config.layers):
        normed = ad.layer_norm(x, p[f"lm.b{i}.ln1.gain"], p[f"lm.b{i}.ln1.bias"])
        head_outs = []
        for j in range(model.config.heads):
            q = ad.matmul(normed, p[f"lm.b{i}.attn.h{j}.wq"])
            k = ad.matmul(normed, p[f"lm.b{i}.attn.h{j}.wk"])
            v = ad.matmul(normed, p[f"lm.b{i}.attn.h{j}.wv"])
            scores = ad.scale(ad.matmul(q, ad.transpose(k)), scale)
            attn = ad.masked_row_softmax(scores, mask)
            head_outs.append(ad.matmul(attn, v))
        joined = head_outs[0]
        for extra in head_outs[1:]:
            joined = ad.concat_features(joined, extra, axis="cols")
        attn_out = ad.add_row_bias(
            ad.matmul(joined, p[f"lm.b{i}.attn.wo"]), p[f"lm.b{i}.attn.bo"]
        )
        x = ad.add(x, attn_out)
        normed2 = ad.layer_norm(x, p[f"lm.b{i}.ln2.gain"], p[f"lm.b{i}.ln2.bias"])
        ff = ad.add_row_bias(
            ad.matmul(
                ad.gelu(ad.add_row_bias(ad.matmul(normed2, p[f"lm.b{i}.ff.w1"]), p[f"lm.b{i}.ff.b1"])),
                p[f"lm.b{i}.ff.w2"],
            ),
            p[f"lm.b{i}.ff.b2"],
        )
        x = ad.add(x, ff)
    return ad.layer_norm(x, p["lm.lnf.gain"], p["lm.lnf.bias"])


# ---------------------------------------------------------------------------
# slot features, value embeddings, injection
# ---------------------------------------------------------------------------


def pre_extraction_sequence(
    history_ids: list[int],
    prompt: SlotPrompt,
    tokenizer: Tokenizer,
    context_length: int,
) -> tuple[list[int], list[int]]:
    """[H_t, <BOC>, prompt] token ids and each slot token's absolute position."""
    budget = context_length - 1 - len(prompt.ids)
    if budget < 0:
        raise DataError(
            f"slot prompt of {len(prompt.ids)} tokens cannot fit context {context_length}"
        )
    history = history_ids[:budget] if len(history_ids) > budget else list(history_ids)
    ids = history + [tokenizer.token_id(BOC)] + list(prompt.ids)
    offset = len(history) + 1
    return ids, [offset + pos for pos in prompt.slot_token_positions]


def pre_extract_slot_features(
    model: TrackerModel, history_ids: list[int], prompt: SlotPrompt
) -> Matrix:
    """Hidden state at each slot's dedicated token; gradients flow through."""
    ids, positions = pre_extraction_sequence(
        history_ids, prompt, model.tokenizer, model.config.context_length
    )
    hidden = causal_forward(model, ids)
    return ad.gather_rows(hidden, np.asarray(positions, dtype=np.int64))


def value_averaging_matrix(ontology: Ontology, tokenizer: Tokenizer) -> np.ndarray:
    """Constant N_v x vocab matrix averaging each value's token embeddings."""
    avg = np.zeros((len(ontology.values), tokenizer.size))
    for row, value in enumerate(ontology.values):
        ids = tokenizer.encode(value)
        for tid in ids:
            avg[row, tid] += 1.0 / len(ids)
    return avg


def compute_value_embeddings(model: TrackerModel, ontology: Ontology) -> Matrix:
    """Mean token embedding per global value; fresh each step so the rows
    track the embedding table as it trains."""
    avg = value_averaging_matrix(ontology, model.tokenizer)
    return ad.matmul(ad.constant(avg), model.params["lm.tok_emb"])


def build_injection_alignment(y_ids, ontology: Ontology, tokenizer: Tokenizer) -> np.ndarray:
    """Per Y_t token: owning slot index if it is a value token, else -1.

    Requires a well-formed target (training targets always are); raises
    DataError otherwise. The caller shifts this onto sequence positions:
    the input position predicting Y token q receives alignment[q].
    """
    tokens = tokenizer.decode(list(y_ids))
    align = np.full(len(tokens), -1, dtype=np.int64)
    pos = 0
    for i, spec in enumerate(ontology.slots):
        expected = spec.description.split()
        if tokens[pos : pos + len(expected)] != expected:
            raise DataError(
                f"malformed target: slot {spec.key!r} description not found at {pos}"
            )
        pos += len(expected)
        start = pos
        while pos < len(tokens) and tokens[pos] != SEP:
            align[pos] = i
            pos += 1
        if pos == start:
            raise DataError(f"malformed target: empty value for slot {spec.key!r}")
        if pos >= len(tokens):
            raise DataError(f"malformed target: missing <SEP> after slot {spec.key!r}")
        pos += 1  # consume <SEP>
    if pos >= len(tokens) or tokens[pos] != EOS or pos != len(tokens) - 1:
        raise DataError("malformed target: expected a single trailing <EOS>")
    return align


def decode_with_injection(
    model: TrackerModel,
    hidden: Matrix,
    g_t: Matrix | None,
    alignment: np.ndarray,
) -> Matrix:
    """Logits per position from head(concat(hidden_p, G_t[align_p] or zeros))."""
    n, h = hidden.shape
    if alignment.shape != (n,):
        raise DimensionError(f"alignment length {alignment.shape} != {n} positions")
    if g_t is None:
        if np.any(alignment >= 0):
            raise DimensionError("alignment references slots but no features were given")
        injected: Matrix = ad.constant(np.zeros((n, h)))
    else:
        if g_t.cols != h:
            raise DimensionError(f"feature width {g_t.cols} != hidden width {h}")
        if alignment.size and alignment.max() >= g_t.rows:
            raise DimensionError(
                f"alignment index {alignment.max()} out of range for {g_t.rows} slots"
            )
        # Row g_t.rows is a constant zero row serving all 'none' positions.
        augmented = ad.concat_features(g_t, ad.constant(np.zeros((1, h))), axis="rows")
        idx = np.where(alignment < 0, g_t.rows, alignment)
        injected = ad.gather_rows(augmented, idx)
    stacked = ad.concat_features(hidden, injected, axis="cols")
    return ad.add_row_bias(ad.matmul(stacked, model.params["lm.head.w"]), model.params["lm.head.b"])


def graph_input_features(
    model: TrackerModel,
    stack: GatStack,
    topology: GraphTopology | None,
    ontology: Ontology,
    history_ids: list[int],
    prompt: SlotPrompt,
) -> Matrix | None:
    """G_t for the sample, or None for the no-graph baseline.

    Slot features come from the pre-extraction pass; the slot-value graph
    additionally stacks value embeddings below them. The stack output is
    sliced back to the slot rows.
    """
    graph_type = gat_ops.stack_graph_type(stack)
    if graph_type == "NoGraph":
        return None
    if topology is None:
        raise InvariantError(f"{graph_type} requires a topology")
    x_s = pre_extract_slot_features(model, history_ids, prompt)
    if graph_type == "DSVGraph":
        x_v = compute_value_embeddings(model, ontology)
        x0 = ad.concat_features(x_s, x_v, axis="rows")
    else:
        x0 = x_s
    if x0.rows != topology.node_count:
        raise DimensionError(
            f"{x0.rows} feature rows for topology of {topology.node_count} nodes"
        )
    out = gat_ops.gat_stack_forward(x0, topology, stack)
    return gat_ops.slice_slot_outputs(out, topology)


# ---------------------------------------------------------------------------
# numpy inference with per-layer key/value caches
# ---------------------------------------------------------------------------


class InferenceSession:
    """Incremental forward pass for a frozen model.

    Appending tokens never changes earlier hidden states (causality), so
    keys and values are cached per layer and head and each new position
    costs one attention row. Matches causal_forward to float64 rounding.
    """

    def __init__(self, model: TrackerModel):
        self.model = model
        self.p = {name: m.data for name, m in model.params.items()}
        self.n = 0
        cfg = model.config
        self._keys = [[[] for _ in range(cfg.heads)] for _ in range(cfg.layers)]
        self._values = [[[] for _ in range(cfg.heads)] for _ in range(cfg.layers)]

    def _ln(self, x: np.ndarray, prefix: str) -> np.ndarray:
        mu = x.mean(axis=1, keepdims=True)
        var = x.var(axis=1, keepdims=True)
        xhat = (x - mu) / np.sqrt(var + 1e-5)
        return xhat * self.p[f"{prefix}.gain"] + self.p[f"{prefix}.bias"]

    @staticmethod
    def _gelu(x: np.ndarray) -> np.ndarray:
        c = np.sqrt(2.0 / np.pi)
        return 0.5 * x * (1.0 + np.tanh(c * (x + 0.044715 * x**3)))

    def append(self, token_ids) -> np.ndarray:
        """Feed tokens, return final hidden states for the new positions."""
        ids = np.asarray(token_ids, dtype=np.int64)
        cfg = self.model.config
        if self.n + ids.shape[0] > cfg.context_length:
            raise DataError(
                f"appending {ids.shape[0]} tokens exceeds context {cfg.context_length}"
            )
        p = self.p
        positions = np.arange(self.n, self.n + ids.shape[0])
        x = p["lm.tok_emb"][ids] + p["lm.pos_emb"][positions]
        scale = 1.0 / np.sqrt(cfg.head_dim)
        m = ids.shape[0]
        for i in range(cfg.layers):
            normed = self._ln(x, f"lm.b{i}.ln1")
            head_outs = []
            for j in range(cfg.heads):
                q = normed @ p[f"lm.b{i}.attn.h{j}.wq"]
                k_new = normed @ p[f"lm.b{i}.attn.h{j}.wk"]
                v_new = normed @ p[f"lm.b{i}.attn.h{j}.wv"]
                self._keys[i][j].append(k_new)
                self._values[i][j].append(v_new)
                k_all = np.concatenate(self._keys[i][j], axis=0)
                v_all = np.concatenate(self._values[i][j], axis=0)
                scores = (q @ k_all.T) * scale
                # New position r (absolute n + r) may attend up to n + r.
                total = k_all.shape[0]
                col = np.arange(total)[None, :]
                row_limit = (self.n + np.arange(m))[:, None]
                masked = np.where(col <= row_limit, scores, -np.inf)
                masked = masked - masked.max(axis=1, keepdims=True)
                e = np.exp(masked)
                attn = e / e.sum(axis=1, keepdims=True)
                head_outs.append(attn @ v_all)
            joined = np.concatenate(head_outs, axis=1)
            x = x + joined @ p[f"lm.b{i}.attn.wo"] + p[f"lm.b{i}.attn.bo"]
            normed2 = self._ln(x, f"lm.b{i}.ln2")
            ff = self._gelu(normed2 @ p[f"lm.b{i}.ff.w1"] + p[f"lm.b{i}.ff.b1"]) @ p[
                f"lm.b{i}.ff.w2"
            ] + p[f"lm.b{i}.ff.b2"]
            x = x + ff
        self.n += m
        return self._ln(x, "lm.lnf")

    def head_logits(self, hidden_row: np.ndarray, injected: np.ndarray | None) -> np.ndarray:
        h = self.model.config.hidden_size
        if injected is None:
            injected = np.zeros(h)
        stacked = np.concatenate([hidden_row.ravel(), injected.ravel()])
        return stacked @ self.p["lm.head.w"] + self.p["lm.head.b"].ravel()


@dataclass
class PredictionDiagnostics:
    forced_separators: list[str]
    parse_warnings: list[str]


def predict_state(
    model: TrackerModel,
    stack: GatStack,
    topology: GraphTopology | None,
    ontology: Ontology,
    prompt: SlotPrompt,
    history_ids: list[int],
    max_value_tokens: int = 8,
) -> tuple[BeliefState, PredictionDiagnostics]:
    """Constrained greedy decoding of the full state string.

    Slot description tokens are force-fed in ontology order; value tokens are
    generated greedily until the value ends or the per-slot budget runs out
    (then <SEP> is forced); <EOS> closes the sequence. The result always
    parses into a total state.

    The running alignment mirrors training: scoring a value token uses the
    head with the slot's feature injected, while the end-of-value <SEP>
    decision uses the zero-padded head (in training, positions whose target
    is <SEP> carry zero injection). A step first asks the zero-padded head
    whether the value is complete, then extends the value with the injected
    head otherwise.
    """
    tokenizer = model.tokenizer
    cfg = model.config

    g_np: np.ndarray | None = None
    if gat_ops.stack_graph_type(stack) != "NoGraph":
        g = graph_input_features(model, stack, topology, ontology, history_ids, prompt)
        assert g is not None
        g_np = g.data

    # Budget the history so the longest possible state string still fits.
    desc_lens = [len(tokenizer.encode(s.description)) for s in ontology.slots]
    y_budget = sum(d + max_value_tokens + 1 for d in desc_lens) + 1
    history_budget = max(cfg.context_length - 1 - y_budget, 0)
    history = history_ids[:history_budget] if len(history_ids) > history_budget else history_ids

    session = InferenceSession(model)
    hidden = session.append(list(history) + [tokenizer.token_id(BOS)])
    last_hidden = hidden[-1]

    sep_id = tokenizer.token_id(SEP)
    eos_id = tokenizer.token_id(EOS)
    emitted: list[int] = []
    forced: list[str] = []
    for i, spec in enumerate(ontology.slots):
        desc_ids = tokenizer.encode(spec.description)
        hidden = session.append(desc_ids)
        last_hidden = hidden[-1]
        emitted.extend(desc_ids)
        injected = None if g_np is None else g_np[i]
        produced = 0
        while True:
            if produced > 0:  # a value has at least one token
                zero_logits = session.head_logits(last_hidden, None)
                if int(np.argmax(zero_logits)) == sep_id:
                    emitted.append(sep_id)
                    last_hidden = session.append([sep_id])[-1]
                    break
            logits = session.head_logits(last_hidden, injected)
            logits[eos_id] = -np.inf
            logits[sep_id] = -np.inf
            token = int(np.argmax(logits))
            emitted.append(token)
            produced += 1
            last_hidden = session.append([token])[-1]
            if produced >= max_value_tokens:
                forced.append(spec.key)
                emitted.append(sep_id)
                last_hidden = session.append([sep_id])[-1]
                break
    emitted.append(eos_id)

    state, warnings = parse_state(emitted, ontology, tokenizer)
    return state, PredictionDiagnostics(forced_separators=forced, parse_warnings=warnings)
