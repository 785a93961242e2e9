"""Lowercasing word tokenizer over a fixed vocabulary."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Sequence

import torch

PAD, UNK, SOT, EOT = "<pad>", "<unk>", "<sot>", "<eot>"
SPECIALS = (PAD, UNK, SOT, EOT)

_WORD_RE = re.compile(r"[a-z0-9]+")


def split_words(text: str) -> list[str]:
    """Lowercase and split on whitespace and punctuation."""
    return _WORD_RE.findall(text.lower())


@dataclass(frozen=True)
class TokenSequence:
    ids: tuple[int, ...]
    text: str

    def __len__(self) -> int:
        return len(self.ids)


class Tokenizer:
    def __init__(self, words: Iterable[str]):
        vocab = list(SPECIALS)
        seen = set(vocab)
        for w in words:
            w = w.lower()
            if w not in seen:
                vocab.append(w)
                seen.add(w)
        self.vocab = vocab
        self.index = {w: i for i, w in enumerate(vocab)}

    @classmethod
    def from_corpus(cls, texts: Iterable[str]) -> "Tokenizer":
        words = sorted({w for t in texts for w in split_words(t)})
        return cls(words)

    def __len__(self) -> int:
        return len(self.vocab)

    @property
    def pad_id(self) -> int:
        return self.index[PAD]

    def tokenize(self, text: str, max_len: int) -> TokenSequence:
        if max_len < 2:
            raise ValueError("max_len must leave room for the two sentinels")
        norm = text.lower()
        unk = self.index[UNK]
        body = [self.index.get(w, unk) for w in split_words(norm)][: max_len - 2]
        return TokenSequence((self.index[SOT], *body, self.index[EOT]), norm)

    def batch(self, texts: Sequence[str], max_len: int) -> tuple[torch.Tensor, torch.Tensor]:
        """Return padded ids (B, L) and a boolean padding mask (True = pad)."""
        seqs = [self.tokenize(t, max_len).ids for t in texts]
        length = max((len(s) for s in seqs), default=2)
        ids = torch.full((len(seqs), length), self.pad_id, dtype=torch.long)
        for i, s in enumerate(seqs):
            ids[i, : len(s)] = torch.tensor(s, dtype=torch.long)
        return ids, ids == self.pad_id
