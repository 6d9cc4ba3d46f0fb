"""Joint training of the language model and the graph stack.

Each sample contributes the mean token cross-entropy over its state string
only; history and the <BOS> marker carry no loss. Gradients flow through
both the generation pass and the slot-feature pre-extraction pass (shared
weights), and two AdamW groups with separate initial learning rates update
the language model and the graph parameters under one linear-decay schedule.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Matrix
from .corpus import Dialogue, TrainingSample, last_turn_filter, turn_samples
from .errors import ConfigError, DataError
from .gat import GatStack
from .model import (
    TrackerModel,
    build_injection_alignment,
    causal_forward,
    decode_with_injection,
    graph_input_features,
)
from .ontology import Ontology
from .optim import AdamWState, ParameterGroup, adamw_step, linear_decay_lr
from .serialization import (
    SlotPrompt,
    generation_sequence,
    serialize_history,
    serialize_state,
    slot_prompt_string,
)
from .topology import GraphTopology

logger = logging.getLogger(__name__)

REGIMES = ("full", "last_turn")


def sample_loss(
    model: TrackerModel,
    stack: GatStack,
    topology: GraphTopology | None,
    ontology: Ontology,
    prompt: SlotPrompt,
    sample: TrainingSample,
) -> Matrix:
    """Scalar cross-entropy of one (dialogue, turn) supervision point."""
    tokenizer = model.tokenizer
    history = serialize_history(sample.dialogue, sample.turn, tokenizer)
    g_t = graph_input_features(model, stack, topology, ontology, history, prompt)
    y = serialize_state(sample.gold, ontology, tokenizer)
    seq, bos_index = generation_sequence(history, y, tokenizer, model.config.context_length)
    hidden = causal_forward(model, seq)
    # Row bos_index + q predicts Y token q, so the Y-token alignment applies
    # directly to the sliced rows. The no-graph baseline pads zeros at every
    # position, which is an all-none alignment.
    if g_t is None:
        y_align = np.full(len(y.ids), -1, dtype=np.int64)
    else:
        y_align = build_injection_alignment(y.ids, ontology, tokenizer)
    hidden_y = ad.slice_rows(hidden, bos_index, bos_index + len(y.ids))
    logits = decode_with_injection(model, hidden_y, g_t, y_align)
    return ad.cross_entropy(logits, np.asarray(y.ids, dtype=np.int64))


@dataclass
class Trainer:
    """Owns the two optimizer groups and the step counter."""

    model: TrackerModel
    stack: GatStack
    topology: GraphTopology | None
    ontology: Ontology
    lr_lm: float = 6.25e-5
    lr_gat: float = 8e-5
    total_steps: int = 1
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 0.01
    prompt: SlotPrompt = None  # type: ignore[assignment]
    global_step: int = 0
    groups: list[ParameterGroup] = field(default_factory=list)
    states: list[AdamWState] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.prompt is None:
            self.prompt = slot_prompt_string(self.ontology, self.model.tokenizer)
        self.groups = [ParameterGroup("lm", self.model.parameters(), self.lr_lm)]
        self.states = [self._fresh_state()]
        if self.stack.parameters():
            self.groups.append(ParameterGroup("gat", self.stack.parameters(), self.lr_gat))
            self.states.append(self._fresh_state())

    def _fresh_state(self) -> AdamWState:
        return AdamWState(
            beta1=self.beta1,
            beta2=self.beta2,
            epsilon=self.epsilon,
            weight_decay=self.weight_decay,
        )

    def all_parameters(self) -> list[Matrix]:
        return [p for g in self.groups for p in g.parameters]

    def batch_loss(self, batch: list[TrainingSample], accumulate: bool = False) -> float:
        """Mean sample loss; with ``accumulate`` the mean gradient is left on
        the parameters. Overlength samples are skipped with a warning."""
        if not batch:
            raise DataError("empty batch")
        total = 0.0
        used = 0
        for sample in batch:
            try:
                loss = sample_loss(
                    self.model, self.stack, self.topology, self.ontology, self.prompt, sample
                )
            except DataError as exc:
                logger.warning(
                    "skipping %s turn %d: %s", sample.dialogue.id, sample.turn, exc
                )
                continue
            if accumulate:
                ad.backward(loss)
            total += loss.item()
            used += 1
        if used == 0:
            return math.nan
        if accumulate and used > 1:
            for p in self.all_parameters():
                if p.grad is not None:
                    p.grad /= used
        return total / used

    def train_step(self, batch: list[TrainingSample]) -> float:
        """One optimizer update from the mean gradient over the batch."""
        ad.zero_grads(self.all_parameters())
        mean_loss = self.batch_loss(batch, accumulate=True)
        if math.isnan(mean_loss):
            logger.warning("entire batch skipped; no update")
            return mean_loss
        for group, state in zip(self.groups, self.states):
            lr = linear_decay_lr(
                group.learning_rate, min(self.global_step, self.total_steps), self.total_steps
            )
            grads = [
                p.grad if p.grad is not None else np.zeros_like(p.data)
                for p in group.parameters
            ]
            adamw_step(group, state, grads, lr=lr)
        ad.zero_grads(self.all_parameters())
        self.global_step += 1
        return mean_loss

    def scheduled_lr(self, group_name: str) -> float:
        for group in self.groups:
            if group.name == group_name:
                return linear_decay_lr(group.learning_rate, self.global_step, self.total_steps)
        raise ConfigError(f"unknown parameter group {group_name!r}")


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    val_loss: float


@dataclass
class TrainResult:
    log: list[EpochLog]
    best_epoch: int
    best_val_loss: float


def regime_samples(dialogues: list[Dialogue], regime: str) -> list[TrainingSample]:
    if regime == "full":
        return turn_samples(dialogues)
    if regime == "last_turn":
        return last_turn_filter(dialogues)
    raise ConfigError(f"regime must be one of {REGIMES}, got {regime!r}")


def train(
    model: TrackerModel,
    stack: GatStack,
    topology: GraphTopology | None,
    ontology: Ontology,
    train_dialogues: list[Dialogue],
    val_dialogues: list[Dialogue],
    regime: str = "full",
    epochs: int | None = None,
    batch_size: int = 8,
    lr_lm: float = 6.25e-5,
    lr_gat: float = 8e-5,
    weight_decay: float = 0.01,
    seed: int = 0,
) -> TrainResult:
    """Train in place; afterwards the model holds the best-validation weights.

    Default epoch counts are 8 for full supervision and 36 for the last-turn
    regime. The same regime filter is applied to the validation split.
    """
    samples = regime_samples(train_dialogues, regime)
    if not samples:
        raise DataError("no training samples")
    val_samples = regime_samples(val_dialogues, regime)
    if epochs is None:
        epochs = 8 if regime == "full" else 36
    steps_per_epoch = math.ceil(len(samples) / batch_size)
    trainer = Trainer(
        model=model,
        stack=stack,
        topology=topology,
        ontology=ontology,
        lr_lm=lr_lm,
        lr_gat=lr_gat,
        weight_decay=weight_decay,
        total_steps=max(epochs * steps_per_epoch, 1),
    )
    rng = np.random.default_rng(seed)
    log: list[EpochLog] = []
    best_val = math.inf
    best_epoch = 0
    best_params: dict[str, np.ndarray] = {}
    all_named = list(model.named_parameters()) + [
        (p.name, p) for p in stack.parameters()
    ]
    for epoch in range(1, epochs + 1):
        order = rng.permutation(len(samples))
        epoch_losses = []
        for start in range(0, len(samples), batch_size):
            batch = [samples[i] for i in order[start : start + batch_size]]
            loss = trainer.train_step(batch)
            if not math.isnan(loss):
                epoch_losses.append(loss)
        train_loss = float(np.mean(epoch_losses)) if epoch_losses else math.nan
        if val_samples:
            val_loss = trainer.batch_loss(val_samples)
        else:
            val_loss = train_loss
        log.append(EpochLog(epoch, train_loss, val_loss))
        logger.info("epoch %d train %.4f val %.4f", epoch, train_loss, val_loss)
        if val_loss < best_val:
            best_val = val_loss
            best_epoch = epoch
            best_params = {name: p.data.copy() for name, p in all_named}
    if best_params:
        for name, p in all_named:
            p.data = best_params[name]
    return TrainResult(log=log, best_epoch=best_epoch, best_val_loss=best_val)


def overfit_single_dialogue(
    model: TrackerModel,
    stack: GatStack,
    topology: GraphTopology | None,
    ontology: Ontology,
    dialogue: Dialogue,
    steps: int = 200,
    lr_lm: float = 5e-3,
    lr_gat: float = 5e-3,
) -> float:
    """Drive the loss down on one dialogue's turn samples; returns final loss.

    Weight decay is disabled and the learning rate held constant so the
    sanity check measures capacity, not the schedule.
    """
    samples = turn_samples([dialogue])
    trainer = Trainer(
        model=model,
        stack=stack,
        topology=topology,
        ontology=ontology,
        lr_lm=lr_lm,
        lr_gat=lr_gat,
        weight_decay=0.0,
        total_steps=steps * 1000,  # effectively flat schedule
    )
    loss = math.nan
    for _ in range(steps):
        loss = trainer.train_step(samples)
    return loss
