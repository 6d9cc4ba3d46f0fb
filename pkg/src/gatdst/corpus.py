"""Dialogue corpus data model and the last-turn supervision filter.

Corpus files hold one dialogue per line as a JSON record
{id, turns: [{user, system, state: {slot: value, ...}}]}; states are stored
sparsely (only non-'none' slots) and are cumulative belief states, not turn
deltas.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .ontology import BeliefState, Ontology


@dataclass(frozen=True)
class Turn:
    user: str
    system: str
    state: BeliefState  # cumulative gold state at this turn


@dataclass(frozen=True)
class Dialogue:
    id: str
    turns: tuple[Turn, ...]

    def __post_init__(self) -> None:
        if len(self.turns) < 1:
            raise DataError(f"dialogue {self.id!r} has no turns")

    @property
    def turn_count(self) -> int:
        return len(self.turns)


@dataclass(frozen=True)
class TrainingSample:
    """One supervision point: predict the cumulative state at turn t."""

    dialogue: Dialogue
    turn: int  # 1-based

    @property
    def gold(self) -> BeliefState:
        return self.dialogue.turns[self.turn - 1].state


def dialogue_to_obj(dialogue: Dialogue, ontology: Ontology) -> dict:
    return {
        "id": dialogue.id,
        "turns": [
            {"user": t.user, "system": t.system, "state": t.state.to_dict(ontology)}
            for t in dialogue.turns
        ],
    }


def dialogue_from_obj(obj: dict, ontology: Ontology) -> Dialogue:
    try:
        turns = tuple(
            Turn(
                user=t["user"],
                system=t.get("system", ""),
                state=BeliefState.from_dict(ontology, t.get("state", {})),
            )
            for t in obj["turns"]
        )
        return Dialogue(id=obj["id"], turns=turns)
    except KeyError as exc:
        raise DataError(f"dialogue record missing field {exc}") from exc


def save_corpus(dialogues, ontology: Ontology, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for d in dialogues:
            fh.write(json.dumps(dialogue_to_obj(d, ontology)) + "\n")


def load_corpus(path: str | Path, ontology: Ontology) -> list[Dialogue]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"corpus file not found: {path}")
    dialogues = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"corpus parse error at {path}:{lineno}: {exc.msg}") from exc
            dialogues.append(dialogue_from_obj(obj, ontology))
    return dialogues


def turn_samples(dialogues) -> list[TrainingSample]:
    """Every (dialogue, t) pair: the fully supervised training set."""
    return [
        TrainingSample(d, t) for d in dialogues for t in range(1, d.turn_count + 1)
    ]


def last_turn_filter(dialogues) -> list[TrainingSample]:
    """One sample per dialogue: only the final turn's cumulative annotation.

    Earlier turns survive only as history inside H_T.
    """
    return [TrainingSample(d, d.turn_count) for d in dialogues]


def split_corpus(
    dialogues,
    train_fraction: float = 0.8,
    val_fraction: float = 0.1,
    seed: int = 1234,
) -> tuple[list[Dialogue], list[Dialogue], list[Dialogue]]:
    """Deterministic train/val/test split by dialogue, stable across runs."""
    if not 0.0 < train_fraction < 1.0 or val_fraction < 0.0:
        raise DataError("split fractions must satisfy 0 < train < 1 and val >= 0")
    if train_fraction + val_fraction >= 1.0:
        raise DataError("train + val fractions must leave room for a test split")
    ordered = sorted(dialogues, key=lambda d: d.id)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(ordered))
    shuffled = [ordered[i] for i in perm]
    n_train = int(round(train_fraction * len(shuffled)))
    n_val = int(round(val_fraction * len(shuffled)))
    train = shuffled[:n_train]
    val = shuffled[n_train : n_train + n_val]
    test = shuffled[n_train + n_val :]
    return train, val, test
