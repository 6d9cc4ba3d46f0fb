"""Ontology schema and belief states.

The slot order defined by the ontology file is canonical everywhere: the
prompt string, the generated state string, graph node order, and all
per-slot reports use it unchanged.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import DataError

NONE_VALUE = "none"


@dataclass(frozen=True)
class SlotSpec:
    domain: str
    slot: str
    description: str

    @property
    def key(self) -> str:
        return f"{self.domain}-{self.slot}"

    @property
    def token(self) -> str:
        """The slot's dedicated special token, e.g. <hotel-name>."""
        return f"<{self.key}>"


@dataclass(frozen=True)
class Ontology:
    domains: tuple[str, ...]
    slots: tuple[SlotSpec, ...]
    values: tuple[str, ...]
    candidates: tuple[tuple[int, ...], ...]  # per slot, indices into values

    def __post_init__(self) -> None:
        if len(self.candidates) != len(self.slots):
            raise DataError("candidates must align with slots")
        keys = [s.key for s in self.slots]
        if len(set(keys)) != len(keys):
            dupes = sorted({k for k in keys if keys.count(k) > 1})
            raise DataError(f"duplicate slots in ontology: {dupes}")
        if len(set(self.values)) != len(self.values):
            raise DataError("duplicate entries in global value list")
        if NONE_VALUE in self.values:
            raise DataError("'none' is a generation convention and may not be a value")
        n_v = len(self.values)
        for spec, cand in zip(self.slots, self.candidates):
            for v in cand:
                if not (0 <= v < n_v):
                    raise DataError(f"slot {spec.key!r} has dangling candidate index {v}")

    @property
    def slot_count(self) -> int:
        return len(self.slots)

    @property
    def slot_keys(self) -> tuple[str, ...]:
        return tuple(s.key for s in self.slots)

    def slot_index(self, key: str) -> int:
        try:
            return self.slot_keys.index(key)
        except ValueError:
            raise DataError(f"unknown slot {key!r}") from None

    def candidate_values(self, slot_index: int) -> tuple[str, ...]:
        return tuple(self.values[v] for v in self.candidates[slot_index])

    def to_json_obj(self) -> dict:
        return {
            "domains": list(self.domains),
            "slots": [
                {
                    "domain": s.domain,
                    "slot": s.slot,
                    "description": s.description,
                    "candidates": [self.values[v] for v in cand],
                }
                for s, cand in zip(self.slots, self.candidates)
            ],
            "values": list(self.values),
        }


def ontology_from_obj(obj: dict) -> Ontology:
    try:
        domains = tuple(obj["domains"])
        values = tuple(obj["values"])
        value_index = {v: i for i, v in enumerate(values)}
        slots = []
        candidates = []
        for entry in obj["slots"]:
            spec = SlotSpec(
                domain=entry["domain"],
                slot=entry["slot"],
                description=entry.get("description") or f"{entry['domain']} {entry['slot']}",
            )
            cand = []
            for v in entry.get("candidates", []):
                if v not in value_index:
                    raise DataError(
                        f"slot {spec.key!r} references unknown value {v!r}"
                    )
                cand.append(value_index[v])
            slots.append(spec)
            candidates.append(tuple(cand))
    except KeyError as exc:
        raise DataError(f"ontology is missing required field {exc}") from exc
    for spec in slots:
        if spec.domain not in domains:
            raise DataError(f"slot {spec.key!r} references unknown domain {spec.domain!r}")
    return Ontology(domains, tuple(slots), values, tuple(candidates))


def load_ontology(path: str | Path) -> Ontology:
    path = Path(path)
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DataError(f"ontology file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"ontology parse error at {path}:{exc.lineno}: {exc.msg}") from exc
    return ontology_from_obj(obj)


def save_ontology(ontology: Ontology, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(ontology.to_json_obj(), indent=2) + "\n", encoding="utf-8"
    )


class BeliefState:
    """Total assignment of every slot to a value string; 'none' when unfilled.

    Values are open vocabulary: a non-'none' value need not belong to the
    slot's candidate set.
    """

    __slots__ = ("values",)

    def __init__(self, values):
        self.values = tuple(str(v) for v in values)

    @classmethod
    def empty(cls, slot_count: int) -> "BeliefState":
        return cls((NONE_VALUE,) * slot_count)

    @classmethod
    def from_dict(cls, ontology: Ontology, assignments: dict[str, str]) -> "BeliefState":
        values = [NONE_VALUE] * ontology.slot_count
        for key, value in assignments.items():
            values[ontology.slot_index(key)] = value
        return cls(values)

    def to_dict(self, ontology: Ontology) -> dict[str, str]:
        """Sparse form: only non-'none' assignments."""
        return {
            key: value
            for key, value in zip(ontology.slot_keys, self.values)
            if value != NONE_VALUE
        }

    def with_value(self, slot_index: int, value: str) -> "BeliefState":
        values = list(self.values)
        values[slot_index] = value
        return BeliefState(values)

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, i: int) -> str:
        return self.values[i]

    def __eq__(self, other) -> bool:
        return isinstance(other, BeliefState) and self.values == other.values

    def __hash__(self) -> int:
        return hash(self.values)

    def __repr__(self) -> str:
        return f"BeliefState({dict(enumerate(self.values))})"
