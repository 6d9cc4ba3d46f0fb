"""Token-level serialization of dialogue history, slot prompts, and states.

History is serialized most-recent-first: ``u_t <SYS> s_{t-1} <USR> u_{t-1}
... <SYS> s_1 <USR> u_1``, so truncation at a context limit drops the oldest
turns from the tail and never the current user utterance. The state string
lists every slot in ontology order as description tokens, value tokens, and
a separator, closed by <EOS>; unfilled slots carry the literal value 'none'.
"""

from __future__ import annotations

from dataclasses import dataclass

from .corpus import Dialogue
from .errors import DataError
from .ontology import NONE_VALUE, BeliefState, Ontology
from .tokenizer import BOS, EOS, SEP, SYS, USR, Tokenizer


def serialize_history(
    dialogue: Dialogue,
    t: int,
    tokenizer: Tokenizer,
    max_tokens: int | None = None,
) -> list[int]:
    """Token ids of H_t; ``max_tokens`` keeps the newest-first prefix."""
    if not 1 <= t <= dialogue.turn_count:
        raise DataError(
            f"turn index {t} out of range 1..{dialogue.turn_count} for dialogue {dialogue.id!r}"
        )
    ids = tokenizer.encode(dialogue.turns[t - 1].user)
    for back in range(t - 1, 0, -1):
        turn = dialogue.turns[back - 1]
        ids.append(tokenizer.token_id(SYS))
        ids.extend(tokenizer.encode(turn.system))
        ids.append(tokenizer.token_id(USR))
        ids.extend(tokenizer.encode(turn.user))
    if max_tokens is not None and len(ids) > max_tokens:
        ids = ids[:max_tokens]
    return ids


@dataclass(frozen=True)
class SlotPrompt:
    """The fixed all-slots prompt and where each slot's token sits in it."""

    ids: tuple[int, ...]
    slot_token_positions: tuple[int, ...]  # one strictly increasing entry per slot


def slot_prompt_string(ontology: Ontology, tokenizer: Tokenizer) -> SlotPrompt:
    """Description tokens then the dedicated slot token, for every slot in order.

    The prompt is a pure function of the ontology: it never changes between
    samples, so the recorded positions stay valid for feature extraction.
    """
    ids: list[int] = []
    positions: list[int] = []
    for spec in ontology.slots:
        ids.extend(tokenizer.encode(spec.description))
        positions.append(len(ids))
        ids.append(tokenizer.token_id(spec.token))
    return SlotPrompt(tuple(ids), tuple(positions))


@dataclass(frozen=True)
class StateSerialization:
    ids: tuple[int, ...]
    value_spans: tuple[tuple[int, int], ...]  # per slot, [start, end) into ids


def serialize_state(
    state: BeliefState, ontology: Ontology, tokenizer: Tokenizer
) -> StateSerialization:
    """Y_t token ids plus the span of each slot's value tokens."""
    if len(state) != ontology.slot_count:
        raise DataError(
            f"state covers {len(state)} slots but ontology has {ontology.slot_count}"
        )
    ids: list[int] = []
    spans: list[tuple[int, int]] = []
    for spec, value in zip(ontology.slots, state.values):
        ids.extend(tokenizer.encode(spec.description))
        start = len(ids)
        ids.extend(tokenizer.encode(value))
        spans.append((start, len(ids)))
        ids.append(tokenizer.token_id(SEP))
    ids.append(tokenizer.token_id(EOS))
    return StateSerialization(tuple(ids), tuple(spans))


def parse_state(
    ids, ontology: Ontology, tokenizer: Tokenizer
) -> tuple[BeliefState, list[str]]:
    """Inverse of serialize_state, robust to malformed model output.

    Splits on <SEP>/<EOS>, matches each segment's leading description tokens
    against the expected slot order, and takes the remainder as the value.
    Missing or garbled segments yield 'none' for the affected slots, with one
    warning each; this never raises on bad input.
    """
    warnings: list[str] = []
    tokens = tokenizer.decode(list(ids))
    if tokens and tokens[-1] == EOS:
        tokens = tokens[:-1]
    elif EOS in tokens:
        cut = tokens.index(EOS)
        warnings.append(f"tokens after <EOS> ignored ({len(tokens) - cut - 1} trailing)")
        tokens = tokens[:cut]
    else:
        warnings.append("output not terminated by <EOS>")

    segments: list[list[str]] = [[]]
    for tok in tokens:
        if tok == SEP:
            segments.append([])
        else:
            segments[-1].append(tok)
    if segments and not segments[-1]:
        segments.pop()

    values = [NONE_VALUE] * ontology.slot_count
    for i, spec in enumerate(ontology.slots):
        if i >= len(segments):
            warnings.append(f"missing segment for slot {spec.key!r}")
            continue
        segment = segments[i]
        expected = spec.description.split()
        if segment[: len(expected)] == expected:
            value_tokens = segment[len(expected) :]
        else:
            warnings.append(
                f"segment {i} does not start with description of slot {spec.key!r}"
            )
            value_tokens = []
        if not value_tokens:
            if segment[: len(expected)] == expected:
                warnings.append(f"empty value for slot {spec.key!r}")
            continue
        values[i] = " ".join(value_tokens)
    for extra in range(ontology.slot_count, len(segments)):
        warnings.append(f"extra segment {extra} ignored: {' '.join(segments[extra])!r}")
    return BeliefState(values), warnings


def generation_sequence(
    history_ids: list[int],
    state: StateSerialization,
    tokenizer: Tokenizer,
    context_length: int,
) -> tuple[list[int], int]:
    """[H_t, <BOS>, Y_t] with H_t truncated (oldest end) to fit the context.

    Returns the token ids and the index of <BOS>.
    """
    budget = context_length - 1 - len(state.ids)
    if budget < 0:
        raise DataError(
            f"state of {len(state.ids)} tokens cannot fit context {context_length}"
        )
    history = history_ids[:budget] if len(history_ids) > budget else list(history_ids)
    ids = history + [tokenizer.token_id(BOS)] + list(state.ids)
    return ids, len(history)
