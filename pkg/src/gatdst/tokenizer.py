"""Whitespace tokenizer with dedicated special and slot tokens.

The vocabulary is built from the training corpus plus every ontology
description and value token, so in-ontology text never maps to <UNK>.
Ids are dense from 0: special tokens first, then one token per domain-slot,
then the sorted word list.
"""

from __future__ import annotations

from .errors import DataError
from .ontology import Ontology

USR, SYS, BOC, BOS, SEP, EOS, UNK, PAD = (
    "<USR>",
    "<SYS>",
    "<BOC>",
    "<BOS>",
    "<SEP>",
    "<EOS>",
    "<UNK>",
    "<PAD>",
)
SPECIAL_TOKENS = (USR, SYS, BOC, BOS, SEP, EOS, UNK, PAD)


def words(text: str) -> list[str]:
    return text.split()


class Tokenizer:
    def __init__(self, vocabulary: dict[str, int]):
        ids = sorted(vocabulary.values())
        if ids != list(range(len(ids))):
            raise DataError("token ids must be dense from 0")
        for tok in SPECIAL_TOKENS:
            if tok not in vocabulary:
                raise DataError(f"vocabulary is missing special token {tok}")
        self.vocabulary = dict(vocabulary)
        self._id_to_token = {i: t for t, i in vocabulary.items()}
        self.unk_id = vocabulary[UNK]

    @property
    def size(self) -> int:
        return len(self.vocabulary)

    def token_id(self, token: str) -> int:
        return self.vocabulary.get(token, self.unk_id)

    def encode(self, text: str) -> list[int]:
        """Whitespace-split and map each word; unseen words become <UNK>."""
        return [self.token_id(w) for w in words(text)]

    def encode_tokens(self, tokens: list[str]) -> list[int]:
        return [self.token_id(t) for t in tokens]

    def decode(self, ids: list[int]) -> list[str]:
        return [self._id_to_token[i] for i in ids]

    def decode_text(self, ids: list[int]) -> str:
        return " ".join(self.decode(ids))


def build_vocab(corpus, ontology: Ontology) -> Tokenizer:
    """Deterministic vocabulary over corpus text, ontology text, and values."""
    dialogues = list(corpus)
    if not dialogues:
        raise DataError("cannot build a vocabulary from an empty corpus")
    seen: set[str] = set()
    for dialogue in dialogues:
        for turn in dialogue.turns:
            seen.update(words(turn.user))
            seen.update(words(turn.system))
            for value in turn.state.values:
                seen.update(words(value))
    for spec in ontology.slots:
        seen.update(words(spec.description))
    for value in ontology.values:
        seen.update(words(value))
    seen.add("none")
    vocabulary: dict[str, int] = {}
    for tok in SPECIAL_TOKENS:
        vocabulary[tok] = len(vocabulary)
    for spec in ontology.slots:
        vocabulary[spec.token] = len(vocabulary)
    for word in sorted(seen - set(vocabulary)):
        vocabulary[word] = len(vocabulary)
    return Tokenizer(vocabulary)
