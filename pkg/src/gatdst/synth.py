"""Synthetic multi-domain dialogue generator with correlated slot pairs.

Sessions fill a random subset of slots progressively across turns; gold
states are cumulative and never un-fill a slot. Slot types backed by a
shared value pool (e.g. pricerange, area) exist in every domain, and their
cross-domain pairs are the designated correlated pairs: within a session,
each filled slot of a correlated type copies the session's anchor value for
that type with probability rho, otherwise draws independently. Every filled
value is spoken verbatim in the user utterance of the turn where it enters
the gold state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import Dialogue, Turn
from .errors import ConfigError
from .ontology import BeliefState, Ontology, SlotSpec

DOMAIN_NAMES = ("hotel", "restaurant", "attraction", "train", "taxi")

DEFAULT_SHARED_POOLS = {
    "pricerange": ("cheap", "moderate", "expensive"),
    "area": ("north", "south", "centre", "east", "west"),
}

# Domain-private pools for the trailing "name" slot; multi-token on purpose
# so value decoding exercises variable-length generation.
NAME_POOLS = {
    "hotel": ("demo hotel", "royal inn", "sunny lodge", "old mill house"),
    "restaurant": ("golden curry", "blue spice", "city bistro", "corner deli"),
    "attraction": ("old museum", "river park", "grand theatre", "stone bridge"),
    "train": ("express nine", "coastal line", "night star", "valley route"),
    "taxi": ("swift cab", "metro ride", "city wheels", "star taxi"),
}

DEFAULT_TEMPLATES = (
    "i would like the {description} to be {value}",
    "please set the {description} to {value}",
    "for the {description} i want {value}",
    "the {description} should be {value}",
)

CHITCHAT_USER = (
    "thank you for the help",
    "that sounds good so far",
    "let me think for a moment",
)

SYSTEM_LINES = (
    "ok noted anything else",
    "sure what else do you need",
    "done is there anything else",
    "alright i have recorded that",
)


@dataclass(frozen=True)
class SynthConfig:
    num_dialogues: int = 100
    num_domains: int = 2
    slots_per_domain: int = 3
    shared_pools: dict = field(default_factory=lambda: dict(DEFAULT_SHARED_POOLS))
    correlated_types: tuple[str, ...] = ("pricerange", "area")
    rho: float = 0.9
    value_skew: float = 0.6  # geometric frequency decay inside each pool; 1 = uniform
    min_turns: int = 2
    max_turns: int = 5
    max_fills_per_turn: int = 2
    utterance_templates: tuple[str, ...] = DEFAULT_TEMPLATES
    seed: int = 0

    def validate(self) -> None:
        if not 0.0 <= self.rho <= 1.0:
            raise ConfigError(f"pair correlation rho must be in [0, 1], got {self.rho}")
        if not 1 <= self.num_domains <= len(DOMAIN_NAMES):
            raise ConfigError(
                f"num_domains must be in 1..{len(DOMAIN_NAMES)}, got {self.num_domains}"
            )
        if not 1 <= self.slots_per_domain <= len(self.shared_pools) + 1:
            raise ConfigError(
                f"slots_per_domain must be in 1..{len(self.shared_pools) + 1} "
                f"(shared types plus one private name slot), got {self.slots_per_domain}"
            )
        if self.num_dialogues < 1:
            raise ConfigError("num_dialogues must be >= 1")
        if not 1 <= self.min_turns <= self.max_turns:
            raise ConfigError(
                f"turn range [{self.min_turns}, {self.max_turns}] is invalid"
            )
        if self.value_skew <= 0:
            raise ConfigError(f"value_skew must be > 0, got {self.value_skew}")
        slot_types = self.slot_types()
        for t in self.correlated_types:
            if t not in self.shared_pools:
                raise ConfigError(
                    f"correlated slot type {t!r} has no shared pool; "
                    "paired slots need a common candidate set"
                )
            if t not in slot_types:
                raise ConfigError(f"correlated slot type {t!r} is not generated")
        for tpl in self.utterance_templates:
            if "{description}" not in tpl or "{value}" not in tpl:
                raise ConfigError(f"template must mention description and value: {tpl!r}")

    def slot_types(self) -> tuple[str, ...]:
        types = list(self.shared_pools)[: self.slots_per_domain]
        if self.slots_per_domain == len(self.shared_pools) + 1:
            types.append("name")
        return tuple(types)

    def domains(self) -> tuple[str, ...]:
        return DOMAIN_NAMES[: self.num_domains]

    def designated_pairs(self) -> list[tuple[str, str]]:
        """All cross-domain slot-key pairs of the correlated types."""
        pairs = []
        domains = self.domains()
        for t in self.correlated_types:
            for i in range(len(domains)):
                for j in range(i + 1, len(domains)):
                    pairs.append((f"{domains[i]}-{t}", f"{domains[j]}-{t}"))
        return pairs


def build_ontology(config: SynthConfig) -> Ontology:
    config.validate()
    values: list[str] = []
    value_index: dict[str, int] = {}

    def intern(v: str) -> int:
        if v not in value_index:
            value_index[v] = len(values)
            values.append(v)
        return value_index[v]

    slots: list[SlotSpec] = []
    candidates: list[tuple[int, ...]] = []
    for domain in config.domains():
        for slot_type in config.slot_types():
            pool = _pool_for(config, domain, slot_type)
            slots.append(SlotSpec(domain, slot_type, f"{domain} {slot_type}"))
            candidates.append(tuple(intern(v) for v in pool))
    return Ontology(config.domains(), tuple(slots), tuple(values), tuple(candidates))


def _pool_for(config: SynthConfig, domain: str, slot_type: str) -> tuple[str, ...]:
    if slot_type == "name":
        return NAME_POOLS[domain]
    return tuple(config.shared_pools[slot_type])


def _pool_weights(n: int, skew: float) -> np.ndarray:
    w = skew ** np.arange(n)
    return w / w.sum()


def generate_synthetic_corpus(config: SynthConfig) -> tuple[list[Dialogue], Ontology]:
    """Deterministic per seed; returns (dialogues, ontology)."""
    config.validate()
    ontology = build_ontology(config)
    rng = np.random.default_rng(config.seed)
    dialogues = [
        _generate_dialogue(config, ontology, rng, f"synth-{i:05d}")
        for i in range(config.num_dialogues)
    ]
    return dialogues, ontology


def _draw_value(rng: np.random.Generator, pool: tuple[str, ...], skew: float) -> str:
    return pool[int(rng.choice(len(pool), p=_pool_weights(len(pool), skew)))]


def _generate_dialogue(
    config: SynthConfig, ontology: Ontology, rng: np.random.Generator, dialogue_id: str
) -> Dialogue:
    n_slots = ontology.slot_count
    total_turns = int(rng.integers(config.min_turns, config.max_turns + 1))

    # Which slots this session fills, and with what values.
    capacity = total_turns * config.max_fills_per_turn
    max_fill = min(5, n_slots, capacity)
    fill_count = int(rng.integers(2, max_fill + 1)) if max_fill >= 2 else 1
    fill_slots = sorted(rng.choice(n_slots, size=fill_count, replace=False).tolist())
    anchors = {
        t: _draw_value(rng, tuple(config.shared_pools[t]), config.value_skew)
        for t in config.correlated_types
    }
    chosen: dict[int, str] = {}
    for idx in fill_slots:
        spec = ontology.slots[idx]
        pool = _pool_for(config, spec.domain, spec.slot)
        if spec.slot in anchors and rng.random() < config.rho:
            chosen[idx] = anchors[spec.slot]
        else:
            chosen[idx] = _draw_value(rng, pool, config.value_skew)

    # Spread the fills over the turns; turn 1 always introduces something.
    fills_by_turn: list[list[int]] = [[] for _ in range(total_turns)]
    order = list(rng.permutation(fill_slots))
    for pos, idx in enumerate(order):
        if pos == 0:
            turn = 0
        else:
            open_turns = [
                t
                for t in range(total_turns)
                if len(fills_by_turn[t]) < config.max_fills_per_turn
            ]
            turn = open_turns[int(rng.integers(0, len(open_turns)))]
        fills_by_turn[turn].append(int(idx))

    turns: list[Turn] = []
    state = BeliefState.empty(n_slots)
    for turn_index in range(total_turns):
        clauses = []
        for idx in sorted(fills_by_turn[turn_index]):
            spec = ontology.slots[idx]
            template = config.utterance_templates[
                int(rng.integers(0, len(config.utterance_templates)))
            ]
            clauses.append(
                template.format(description=spec.description, value=chosen[idx])
            )
            state = state.with_value(idx, chosen[idx])
        if clauses:
            user = " and ".join(clauses)
        else:
            user = CHITCHAT_USER[int(rng.integers(0, len(CHITCHAT_USER)))]
        if turn_index == total_turns - 1:
            system = "you are welcome goodbye"
        else:
            system = SYSTEM_LINES[int(rng.integers(0, len(SYSTEM_LINES)))]
        turns.append(Turn(user=user, system=system, state=state))
    return Dialogue(id=dialogue_id, turns=tuple(turns))
