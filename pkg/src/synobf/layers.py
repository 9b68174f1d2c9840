"""Embedding channels and the recurrent encoder shared by every model."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import torch
from torch import nn
from torch.nn.utils.rnn import pack_padded_sequence, pad_packed_sequence

logger = logging.getLogger(__name__)

PAD, UNK, ROOT = "<pad>", "<unk>", "<root>"


class Index:
    """String <-> integer mapping with reserved specials at the front."""

    def __init__(self, items: Iterable[str], specials: Sequence[str] = (PAD, UNK)):
        specials = tuple(specials)
        rest = sorted(set(items) - set(specials))
        self.itos: list[str] = [*specials, *rest]
        self.stoi: dict[str, int] = {s: i for i, s in enumerate(self.itos)}
        self.specials = specials
        self.unk = self.stoi.get(UNK, 0)

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, item: str) -> bool:
        return item in self.stoi

    def __getitem__(self, item: str) -> int:
        return self.stoi.get(item, self.unk)

    def lookup(self, items: Iterable[str]) -> list[int]:
        return [self[i] for i in items]

    def to_state(self) -> dict:
        return {"itos": self.itos, "specials": list(self.specials)}

    @classmethod
    def from_state(cls, state: dict) -> "Index":
        idx = cls.__new__(cls)
        idx.itos = list(state["itos"])
        idx.stoi = {s: i for i, s in enumerate(idx.itos)}
        idx.specials = tuple(state["specials"])
        idx.unk = idx.stoi.get(UNK, 0)
        return idx


def char_index(words: Iterable[str]) -> Index:
    return Index((c for w in words for c in w), specials=(PAD, UNK))


@dataclass
class EncoderConfig:
    word_dim: int = 32
    char_dim: int = 32
    char_kernels: int = 32
    char_width: int = 3
    tag_dim: int = 32
    hidden: int = 64
    layers: int = 2
    dropout: float = 0.33
    freeze_pretrained: bool = True

    @classmethod
    def preset(cls, name: str) -> "EncoderConfig":
        if name == "paper":
            return cls(word_dim=100, char_dim=100, char_kernels=100, tag_dim=100, hidden=512, layers=3)
        if name == "desk":
            return cls()
        raise ValueError(f"unknown preset {name!r}")

    @property
    def output_dim(self) -> int:
        return 2 * self.hidden

    def to_dict(self) -> dict:
        return asdict(self)


def load_word_vectors(path: str | Path) -> dict[str, np.ndarray]:
    """Read a ``word v1 ... vd`` text file (GloVe layout)."""
    vectors: dict[str, np.ndarray] = {}
    dim = None
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            parts = line.rstrip().split(" ")
            if len(parts) < 2:
                continue
            vec = np.asarray(parts[1:], dtype=np.float32)
            if dim is None:
                dim = len(vec)
            elif len(vec) != dim:
                raise ValueError(f"{path}:{lineno}: expected {dim} values, found {len(vec)}")
            vectors[parts[0]] = vec
    return vectors


class CharCNN(nn.Module):
    """Character embeddings, one convolution of width ``width``, max-pool over time."""

    def __init__(self, n_chars: int, char_dim: int, n_kernels: int, width: int = 3):
        super().__init__()
        self.embed = nn.Embedding(n_chars, char_dim, padding_idx=0)
        self.conv = nn.Conv1d(char_dim, n_kernels, kernel_size=width, padding=width // 2)

    def forward(self, chars: torch.Tensor) -> torch.Tensor:
        # chars: (W, L) with 0 as padding
        mask = chars.ne(0)
        x = self.embed(chars).transpose(1, 2)
        x = self.conv(x).transpose(1, 2)
        x = x.masked_fill(~mask.unsqueeze(-1), float("-inf"))
        return x.max(dim=1).values


class LockedDropout(nn.Module):
    """Dropout whose mask is shared across time steps."""

    def __init__(self, p: float):
        super().__init__()
        self.p = p

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if not self.training or self.p == 0.0:
            return x
        mask = x.new_empty(x.size(0), 1, x.size(2)).bernoulli_(1 - self.p) / (1 - self.p)
        return x * mask


class StackedBiLSTM(nn.Module):
    def __init__(self, input_dim: int, hidden: int, layers: int, dropout: float):
        super().__init__()
        self.layers = nn.ModuleList()
        for i in range(layers):
            self.layers.append(
                nn.LSTM(input_dim if i == 0 else 2 * hidden, hidden, batch_first=True, bidirectional=True)
            )
        self.dropout = LockedDropout(dropout)

    def forward(self, x: torch.Tensor, lengths: torch.Tensor) -> torch.Tensor:
        total = x.size(1)
        for lstm in self.layers:
            x = self.dropout(x)
            packed = pack_padded_sequence(x, lengths.cpu(), batch_first=True, enforce_sorted=False)
            out, _ = lstm(packed)
            x, _ = pad_packed_sequence(out, batch_first=True, total_length=total)
        return self.dropout(x)


def pad_chars(words: Sequence[str], chars: Index) -> torch.Tensor:
    width = max(len(w) for w in words)
    out = torch.zeros(len(words), width, dtype=torch.long)
    for i, w in enumerate(words):
        out[i, : len(w)] = torch.tensor(chars.lookup(w))
    return out


class TokenEncoder(nn.Module):
    """Word, character-CNN and tag channels concatenated and run through a BiLSTM.

    The word and character channels together form the lexical part of the
    input. It can be computed from discrete word ids or from a (possibly
    relaxed) distribution over the word index, in which case it is the
    distribution times the table of lexical features of every word.
    """

    def __init__(
        self,
        words: Index,
        chars: Index,
        tags: Index,
        config: EncoderConfig,
        pretrained: dict[str, np.ndarray] | None = None,
    ):
        super().__init__()
        self.words, self.chars, self.tags = words, chars, tags
        self.config = config
        self.word_embed = nn.Embedding(len(words), config.word_dim, padding_idx=0)
        self.unk_vector = nn.Parameter(torch.zeros(config.word_dim))
        nn.init.normal_(self.unk_vector, std=0.1)
        self.char_cnn = CharCNN(len(chars), config.char_dim, config.char_kernels, config.char_width)
        self.tag_embed = nn.Embedding(len(tags), config.tag_dim, padding_idx=0)
        self.rnn = StackedBiLSTM(
            config.word_dim + config.char_kernels + config.tag_dim, config.hidden, config.layers, config.dropout
        )
        self.has_pretrained = False
        if pretrained:
            self._load_pretrained(pretrained)
        self.register_buffer("word_chars", pad_chars(words.itos, chars), persistent=False)

    def _load_pretrained(self, vectors: dict[str, np.ndarray]) -> None:
        dim = len(next(iter(vectors.values())))
        if dim != self.config.word_dim:
            raise ValueError(f"pretrained vectors have {dim} dims, encoder expects {self.config.word_dim}")
        hits = 0
        with torch.no_grad():
            for i, w in enumerate(self.words.itos):
                if w in vectors:
                    self.word_embed.weight[i] = torch.from_numpy(vectors[w])
                    hits += 1
        logger.info("initialized %d/%d word vectors from pretrained file", hits, len(self.words))
        self.has_pretrained = True
        if self.config.freeze_pretrained:
            self.word_embed.weight.requires_grad_(False)

    def word_vectors(self) -> torch.Tensor:
        weight = self.word_embed.weight
        unk = torch.zeros(len(self.words), 1, dtype=weight.dtype)
        unk[self.words.unk] = 1.0
        return weight * (1 - unk) + unk * self.unk_vector

    def lexical_table(self) -> torch.Tensor:
        """Lexical features of every indexed word: (|words|, word_dim + char_kernels)."""
        return torch.cat([self.word_vectors(), self.char_cnn(self.word_chars)], dim=-1)

    def lexical_from_ids(self, ids: torch.Tensor, forms: Sequence[Sequence[str]] | None = None) -> torch.Tensor:
        """Lexical features for word ids; ``forms`` supplies spellings for unknown words."""
        flat = ids.reshape(-1)
        uniq, inverse = torch.unique(flat, return_inverse=True)
        word_part = self.word_vectors()[uniq]
        spellings = [self.words.itos[i] for i in uniq.tolist()]
        char_part = self.char_cnn(pad_chars(spellings, self.chars).to(ids.device))
        table = torch.cat([word_part, char_part], dim=-1)
        out = table[inverse].reshape(*ids.shape, -1)
        if forms is not None:
            oov = [(b, t, f) for b, row in enumerate(forms) for t, f in enumerate(row) if f not in self.words]
            if oov:
                feats = self.char_cnn(pad_chars([f for _, _, f in oov], self.chars).to(ids.device))
                out = out.clone()
                for k, (b, t, _) in enumerate(oov):
                    out[b, t, self.config.word_dim:] = feats[k]
        return out

    def encode(self, lexical: torch.Tensor, tag_ids: torch.Tensor, lengths: torch.Tensor) -> torch.Tensor:
        x = torch.cat([lexical, self.tag_embed(tag_ids)], dim=-1)
        return self.rnn(x, lengths)

    def forward(self, ids: torch.Tensor, tag_ids: torch.Tensor, lengths: torch.Tensor, forms=None) -> torch.Tensor:
        return self.encode(self.lexical_from_ids(ids, forms), tag_ids, lengths)


def batch_ids(rows: Sequence[Sequence[str]], index: Index) -> tuple[torch.Tensor, torch.Tensor]:
    lengths = torch.tensor([len(r) for r in rows])
    out = torch.zeros(len(rows), int(lengths.max()), dtype=torch.long)
    for i, r in enumerate(rows):
        out[i, : len(r)] = torch.tensor(index.lookup(r))
    return out, lengths
