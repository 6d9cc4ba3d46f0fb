"""Tracking metrics and the slot-dependency analyses.

All comparisons are exact string matches after whitespace normalization,
with 'none' counted like any other value. Joint accuracy scores a turn only
if every slot matches; slot accuracy counts all (slot, turn) pairs. The
dependency analysis scores each value pair over the turns where both slots
carry gold annotations: the co-occurrence indicator vectors of the two
values agree (both present or both absent) in a fraction of those turns,
matching the worked five-sample example that yields 2/4 = 0.5.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .ontology import NONE_VALUE, BeliefState, Ontology


def normalize_value(value: str) -> str:
    return " ".join(value.split())


@dataclass(frozen=True)
class TurnPrediction:
    dialogue_id: str
    turn: int
    total_turns: int
    predicted: BeliefState
    gold: BeliefState

    def __post_init__(self) -> None:
        if len(self.predicted) != len(self.gold):
            raise DataError(
                f"predicted covers {len(self.predicted)} slots, gold {len(self.gold)}"
            )


def _match(a: str, b: str) -> bool:
    return normalize_value(a) == normalize_value(b)


def joint_accuracy(predictions: list[TurnPrediction]) -> float:
    """Fraction of turns where every slot matches exactly."""
    if not predictions:
        raise DataError("joint_accuracy over an empty prediction list")
    hits = sum(
        1
        for p in predictions
        if all(_match(a, b) for a, b in zip(p.predicted.values, p.gold.values))
    )
    return hits / len(predictions)


def slot_accuracy(predictions: list[TurnPrediction]) -> float:
    """Correct (slot, turn) pairs over all of them, 'none' slots included."""
    if not predictions:
        raise DataError("slot_accuracy over an empty prediction list")
    total = 0
    hits = 0
    for p in predictions:
        for a, b in zip(p.predicted.values, p.gold.values):
            total += 1
            hits += _match(a, b)
    return hits / total


def per_slot_accuracy(
    predictions: list[TurnPrediction], ontology: Ontology
) -> list[float]:
    """Per-slot hit rate in serialization order."""
    if not predictions:
        raise DataError("per_slot_accuracy over an empty prediction list")
    n = ontology.slot_count
    hits = np.zeros(n)
    for p in predictions:
        if len(p.gold) != n:
            raise DataError("prediction slot count does not match ontology")
        for i in range(n):
            hits[i] += _match(p.predicted[i], p.gold[i])
    return (hits / len(predictions)).tolist()


def turn_progress(turn: int, total_turns: int) -> float:
    """0 at the first turn, 1 at the last; single-turn dialogues map to 1."""
    if total_turns <= 1:
        return 1.0
    return (turn - 1) / (total_turns - 1)


@dataclass(frozen=True)
class ProgressBucket:
    low: float
    high: float
    accuracy: float | None  # None when the bucket is empty
    count: int


def progress_curve(
    predictions: list[TurnPrediction], buckets: int = 5
) -> list[ProgressBucket]:
    """Joint accuracy per equal-width dialogue-progress bucket."""
    if buckets < 2:
        raise DataError(f"need at least 2 buckets, got {buckets}")
    totals = np.zeros(buckets, dtype=np.int64)
    hits = np.zeros(buckets, dtype=np.int64)
    for p in predictions:
        progress = turn_progress(p.turn, p.total_turns)
        b = min(int(progress * buckets), buckets - 1)
        totals[b] += 1
        hits[b] += all(_match(a, g) for a, g in zip(p.predicted.values, p.gold.values))
    out = []
    for b in range(buckets):
        accuracy = hits[b] / totals[b] if totals[b] else None
        out.append(ProgressBucket(b / buckets, (b + 1) / buckets, accuracy, int(totals[b])))
    return out


# ---------------------------------------------------------------------------
# value-pair dependency analysis
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class JaccardEntry:
    slot1: str
    value1: str
    slot2: str
    value2: str
    score: float
    support: int  # turns where both slots are annotated


def _observed_values(states: list[BeliefState], slot: int) -> set[str]:
    return {
        normalize_value(s[slot]) for s in states if s[slot] != NONE_VALUE
    }


def pair_score(
    states: list[BeliefState], s1: int, v1: str, s2: int, v2: str
) -> tuple[float, int] | None:
    """Agreement of the two co-occurrence indicators over annotated turns.

    Restricted to turns where both slots are non-'none'; returns None when
    no such turn exists or neither value ever occurs there.
    """
    v1 = normalize_value(v1)
    v2 = normalize_value(v2)
    support = 0
    agree = 0
    occurs = False
    for state in states:
        if state[s1] == NONE_VALUE or state[s2] == NONE_VALUE:
            continue
        support += 1
        c1 = normalize_value(state[s1]) == v1
        c2 = normalize_value(state[s2]) == v2
        occurs = occurs or c1 or c2
        agree += c1 == c2
    if support == 0 or not occurs:
        return None
    return agree / support, support


def jaccard_scores(
    states: list[BeliefState], ontology: Ontology
) -> list[JaccardEntry]:
    """All defined value-pair entries, one per unordered slot pair (s1 < s2).

    Candidate values and values observed in the gold annotations are both
    enumerated; pairs whose values never occur on an annotated turn are
    omitted (empty union).
    """
    n = ontology.slot_count
    entries: list[JaccardEntry] = []
    value_sets = []
    for s in range(n):
        observed = _observed_values(states, s)
        candidates = {normalize_value(v) for v in ontology.candidate_values(s)}
        value_sets.append(sorted(candidates | observed))
    for s1 in range(n):
        for s2 in range(s1 + 1, n):
            for v1 in value_sets[s1]:
                for v2 in value_sets[s2]:
                    scored = pair_score(states, s1, v1, s2, v2)
                    if scored is None:
                        continue
                    score, support = scored
                    entries.append(
                        JaccardEntry(
                            ontology.slot_keys[s1],
                            v1,
                            ontology.slot_keys[s2],
                            v2,
                            score,
                            support,
                        )
                    )
    return entries


def pair_accuracy(
    predictions: list[TurnPrediction],
    ontology: Ontology,
    slot1: str,
    value1: str,
    slot2: str,
    value2: str,
) -> float | None:
    """Success rate of generating both values, over turns whose gold has both.

    None when no turn supports the pair.
    """
    s1 = ontology.slot_index(slot1)
    s2 = ontology.slot_index(slot2)
    value1 = normalize_value(value1)
    value2 = normalize_value(value2)
    supported = 0
    hits = 0
    for p in predictions:
        if (
            normalize_value(p.gold[s1]) == value1
            and normalize_value(p.gold[s2]) == value2
        ):
            supported += 1
            hits += _match(p.predicted[s1], value1) and _match(p.predicted[s2], value2)
    if supported == 0:
        return None
    return hits / supported


@dataclass(frozen=True)
class WindowedPoint:
    jaccard: float
    mean_delta: float
    count: int


def windowed_pair_delta(
    points: list[tuple[float, float]],
    window: float = 0.1,
    grid: list[float] | None = None,
) -> list[WindowedPoint]:
    """Moving-window mean of delta values around each Jaccard abscissa.

    Evaluation abscissae default to the sorted distinct scores in ``points``;
    a point contributes at abscissa j when |J - j| <= window / 2. Empty
    windows are omitted.
    """
    if window <= 0:
        raise DataError(f"window must be > 0, got {window}")
    if not points:
        raise DataError("windowed_pair_delta needs at least one point")
    abscissae = sorted({j for j, _ in points}) if grid is None else list(grid)
    half = window / 2.0
    out = []
    for j in abscissae:
        nearby = [d for jj, d in points if abs(jj - j) <= half]
        if nearby:
            out.append(WindowedPoint(j, float(np.mean(nearby)), len(nearby)))
    return out


# ---------------------------------------------------------------------------
# delimited report files and prediction dumps
# ---------------------------------------------------------------------------


def write_csv(path: str | Path, header: list[str], rows: list[list]) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def read_csv(path: str | Path) -> list[dict[str, str]]:
    with Path(path).open("r", encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def write_summary_csv(path, predictions: list[TurnPrediction]) -> None:
    write_csv(
        path,
        ["metric", "value", "n"],
        [
            ["joint_accuracy", f"{joint_accuracy(predictions):.6f}", len(predictions)],
            ["slot_accuracy", f"{slot_accuracy(predictions):.6f}", len(predictions)],
        ],
    )


def write_per_slot_csv(
    path,
    predictions: list[TurnPrediction],
    ontology: Ontology,
    baseline: list[float] | None = None,
) -> list[float]:
    accuracies = per_slot_accuracy(predictions, ontology)
    rows = []
    for i, (key, acc) in enumerate(zip(ontology.slot_keys, accuracies)):
        row = [key, f"{acc:.6f}"]
        if baseline is not None:
            row.append(f"{acc - baseline[i]:.6f}")
        rows.append(row)
    header = ["slot", "accuracy"] + (["delta_vs_baseline"] if baseline is not None else [])
    write_csv(path, header, rows)
    return accuracies


def write_progress_csv(path, predictions: list[TurnPrediction], buckets: int = 5) -> None:
    curve = progress_curve(predictions, buckets)
    write_csv(
        path,
        ["bucket", "low", "high", "accuracy", "n"],
        [
            [i, f"{b.low:.4f}", f"{b.high:.4f}",
             "" if b.accuracy is None else f"{b.accuracy:.6f}", b.count]
            for i, b in enumerate(curve)
        ],
    )


def write_jaccard_csv(path, entries: list[JaccardEntry]) -> None:
    write_csv(
        path,
        ["slot1", "value1", "slot2", "value2", "jaccard", "support"],
        [
            [e.slot1, e.value1, e.slot2, e.value2, f"{e.score:.6f}", e.support]
            for e in entries
        ],
    )


def write_windowed_csv(path, curve: list[WindowedPoint]) -> None:
    write_csv(
        path,
        ["jaccard", "mean_delta", "n"],
        [[f"{p.jaccard:.6f}", f"{p.mean_delta:.6f}", p.count] for p in curve],
    )


def save_predictions(path, predictions: list[TurnPrediction], ontology: Ontology) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for p in predictions:
            fh.write(
                json.dumps(
                    {
                        "dialogue_id": p.dialogue_id,
                        "turn": p.turn,
                        "total_turns": p.total_turns,
                        "predicted": p.predicted.to_dict(ontology),
                        "gold": p.gold.to_dict(ontology),
                    }
                )
                + "\n"
            )


def load_predictions(path, ontology: Ontology) -> list[TurnPrediction]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"prediction dump not found: {path}")
    out = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                out.append(
                    TurnPrediction(
                        dialogue_id=obj["dialogue_id"],
                        turn=obj["turn"],
                        total_turns=obj["total_turns"],
                        predicted=BeliefState.from_dict(ontology, obj["predicted"]),
                        gold=BeliefState.from_dict(ontology, obj["gold"]),
                    )
                )
            except (json.JSONDecodeError, KeyError) as exc:
                raise DataError(f"bad prediction record at {path}:{lineno}: {exc}") from exc
    return out
