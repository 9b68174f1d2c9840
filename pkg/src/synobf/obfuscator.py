"""Obfuscation policies: uniform random substitution, a deterministic cipher drill,
and the neural per-tag substitution model."""

from __future__ import annotations

import random
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Collection, Sequence

import numpy as np
import torch
from torch import nn

from .checkpoint import load_checkpoint, save_checkpoint
from .corpus import Sentence, TagVocabulary
from .layers import PAD, UNK, EncoderConfig, Index, TokenEncoder, batch_ids, char_index, load_word_vectors


@dataclass(frozen=True)
class SubstitutionDistribution:
    position: int
    original: str
    support: tuple[str, ...]
    probs: tuple[float, ...]
    targeted: bool = False
    unsubstitutable: bool = False

    @property
    def substitutes(self) -> bool:
        return self.targeted and not self.unsubstitutable

    @classmethod
    def identity(cls, position: int, original: str) -> "SubstitutionDistribution":
        return cls(position, original, (original,), (1.0,))

    @classmethod
    def empty(cls, position: int, original: str) -> "SubstitutionDistribution":
        """A targeted position with no alternative; sampling keeps the original."""
        return cls(position, original, (), (), targeted=True, unsubstitutable=True)

    def prob_of(self, word: str) -> float:
        """Probability that sampling emits ``word`` at this position."""
        if self.unsubstitutable:
            return float(word == self.original)
        try:
            return self.probs[self.support.index(word)]
        except ValueError:
            return 0.0


@dataclass(frozen=True)
class ObfuscationResult:
    original: Sentence
    obfuscated: Sentence
    mask: tuple[bool, ...]
    unsubstitutable: frozenset[int] = frozenset()


def _draw(sentence: Sentence, dists: Sequence[SubstitutionDistribution], rng: np.random.Generator) -> ObfuscationResult:
    # one uniform per position, targeted or not, so draws line up across target sets
    u = rng.random(len(sentence))
    forms, mask = list(sentence.forms), [False] * len(sentence)
    unsub = set()
    for d in dists:
        if d.unsubstitutable:
            unsub.add(d.position)
        if not d.substitutes:
            continue
        cdf = np.cumsum(d.probs)
        k = min(int(np.searchsorted(cdf, u[d.position] * cdf[-1], side="right")), len(cdf) - 1)
        forms[d.position] = d.support[k]
        mask[d.position] = True
    return ObfuscationResult(sentence, sentence.with_forms(forms), tuple(mask), frozenset(unsub))


class ObfuscationPolicy:
    """Maps a sentence and a target tag set to per-position substitution distributions."""

    def __init__(self, vocab: TagVocabulary):
        self.vocab = vocab

    def distribution(self, sentence: Sentence, targets: Collection[str]) -> list[SubstitutionDistribution]:
        raise NotImplementedError

    def distributions(self, sentences: Sequence[Sentence], targets: Collection[str]) -> list[list[SubstitutionDistribution]]:
        return [self.distribution(s, targets) for s in sentences]

    def sample(self, sentence: Sentence, targets: Collection[str], rng: np.random.Generator) -> ObfuscationResult:
        return _draw(sentence, self.distribution(sentence, targets), rng)

    def sample_many(self, sentences: Sequence[Sentence], targets: Collection[str], seed: int) -> list[ObfuscationResult]:
        """Sample each sentence with its own generator seeded by ``(seed, index)``."""
        dists = self.distributions(sentences, targets)
        return [_draw(s, d, np.random.default_rng([seed, i])) for i, (s, d) in enumerate(zip(sentences, dists))]


def sample(policy: ObfuscationPolicy, sentence: Sentence, targets: Collection[str], rng: np.random.Generator) -> ObfuscationResult:
    return policy.sample(sentence, targets, rng)


def random_distribution(sentence: Sentence, targets: Collection[str], vocab: TagVocabulary) -> list[SubstitutionDistribution]:
    out = []
    for i, tok in enumerate(sentence):
        if tok.tag not in targets:
            out.append(SubstitutionDistribution.identity(i, tok.form))
            continue
        cands = vocab.candidates(tok.tag, exclude=tok.form)
        if not cands:
            out.append(SubstitutionDistribution.empty(i, tok.form))
            continue
        p = 1.0 / len(cands)
        out.append(SubstitutionDistribution(i, tok.form, cands, (p,) * len(cands), targeted=True))
    return out


class RandomPolicy(ObfuscationPolicy):
    name = "random"

    def distribution(self, sentence, targets):
        return random_distribution(sentence, targets, self.vocab)


class CipherPolicy(ObfuscationPolicy):
    """Deterministic per-tag permutation without fixed points (an attacker drill)."""

    name = "cipher"

    def __init__(self, vocab: TagVocabulary, seed: int = 0):
        super().__init__(vocab)
        rng = random.Random(seed)
        self.mapping: dict[str, dict[str, str]] = {}
        for tag, words in vocab.per_tag.items():
            order = list(words)
            rng.shuffle(order)
            self.mapping[tag] = {w: order[(k + 1) % len(order)] for k, w in enumerate(order)}

    def distribution(self, sentence, targets):
        out = []
        for i, tok in enumerate(sentence):
            if tok.tag not in targets:
                out.append(SubstitutionDistribution.identity(i, tok.form))
                continue
            image = self.mapping.get(tok.tag, {}).get(tok.form)
            if image is None or image == tok.form:
                out.append(SubstitutionDistribution.empty(i, tok.form))
            else:
                out.append(SubstitutionDistribution(i, tok.form, (image,), (1.0,), targeted=True))
        return out


@dataclass
class ObfuscatorConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    shared_heads: bool = False
    head_init: str = "zeros"

    @classmethod
    def preset(cls, name: str, **overrides) -> "ObfuscatorConfig":
        return cls(encoder=EncoderConfig.preset(name), **overrides)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ObfuscatorConfig":
        data = dict(data)
        return cls(encoder=EncoderConfig(**data.pop("encoder", {})), **data)


@dataclass
class TagGroup:
    """Targeted positions sharing one tag, with their masked candidate logits."""

    tag: str
    batch_index: list[int]
    positions: list[int]
    logits: torch.Tensor  # (P, |V_t|), -inf at each original word
    support: tuple[str, ...]


class NeuralObfuscator(nn.Module, ObfuscationPolicy):
    """BiLSTM encoder plus one score vector per (tag, word) pair.

    ``p(y | x)`` at a targeted position is a softmax of ``w_{t,y} . h_i``
    over ``V_t`` without the original word.
    """

    name = "neural"

    def __init__(self, vocab: TagVocabulary, config: ObfuscatorConfig | None = None, pretrained: dict | None = None):
        nn.Module.__init__(self)
        ObfuscationPolicy.__init__(self, vocab)
        self.config = config = config or ObfuscatorConfig()
        words = Index(vocab.full, specials=(PAD, UNK))
        tags = Index(vocab.per_tag.keys(), specials=(PAD, UNK))
        self.encoder = TokenEncoder(words, char_index(vocab.full), tags, config.encoder, pretrained)
        dim = config.encoder.output_dim
        self.head_tags: tuple[str, ...] = vocab.tags
        self._tag_slot = {t: k for k, t in enumerate(self.head_tags)}
        self._support_pos = {t: {w: k for k, w in enumerate(vocab.per_tag[t])} for t in self.head_tags}
        if config.shared_heads:
            self.shared_head = nn.Parameter(torch.zeros(len(words), dim))
            self.heads = nn.ParameterList()
            for t in self.head_tags:
                self.register_buffer(f"_rows_{self._tag_slot[t]}", torch.tensor(words.lookup(vocab.per_tag[t])), persistent=False)
        else:
            self.heads = nn.ParameterList([nn.Parameter(torch.zeros(len(vocab.per_tag[t]), dim)) for t in self.head_tags])
        if config.head_init == "normal":
            with torch.no_grad():
                for p in self.head_parameters():
                    p.normal_(std=0.1)
        elif config.head_init != "zeros":
            raise ValueError(f"unknown head_init {config.head_init!r}")

    def head_parameters(self) -> list[nn.Parameter]:
        return [self.shared_head] if self.config.shared_heads else list(self.heads)

    def head_matrix(self, tag: str) -> torch.Tensor:
        slot = self._tag_slot[tag]
        if self.config.shared_heads:
            return self.shared_head[getattr(self, f"_rows_{slot}")]
        return self.heads[slot]

    def encode_batch(self, sentences: Sequence[Sentence]) -> torch.Tensor:
        forms = [s.forms for s in sentences]
        ids, lengths = batch_ids(forms, self.encoder.words)
        tag_ids, _ = batch_ids([s.tags for s in sentences], self.encoder.tags)
        return self.encoder(ids, tag_ids, lengths, forms)

    def tag_groups(self, sentences: Sequence[Sentence], hidden: torch.Tensor, targets: Collection[str]) -> tuple[list[TagGroup], set[tuple[int, int]]]:
        """Group targeted, substitutable positions by tag; also report unsubstitutable ones."""
        grouped: dict[str, list[tuple[int, int]]] = {}
        unsub: set[tuple[int, int]] = set()
        for b, s in enumerate(sentences):
            for i, tok in enumerate(s):
                if tok.tag not in targets:
                    continue
                support = self.vocab.per_tag.get(tok.tag, ())
                if tok.tag not in self._tag_slot or not any(w != tok.form for w in support):
                    unsub.add((b, i))
                    continue
                grouped.setdefault(tok.tag, []).append((b, i))
        groups = []
        for tag, items in grouped.items():
            bi = [b for b, _ in items]
            pi = [i for _, i in items]
            h = hidden[bi, pi]
            logits = h @ self.head_matrix(tag).t()
            orig_cols = [self._support_pos[tag].get(sentences[b][i].form) for b, i in items]
            block = torch.zeros_like(logits, dtype=torch.bool)
            for row, col in enumerate(orig_cols):
                if col is not None:
                    block[row, col] = True
            logits = logits.masked_fill(block, float("-inf"))
            groups.append(TagGroup(tag, bi, pi, logits, self.vocab.per_tag[tag]))
        return groups, unsub

    @torch.no_grad()
    def distributions(self, sentences, targets):
        was_training = self.training
        self.eval()
        try:
            out = [[SubstitutionDistribution.identity(i, s[i].form) for i in range(len(s))] for s in sentences]
            if not targets:
                return out
            hidden = self.encode_batch(sentences)
            groups, unsub = self.tag_groups(sentences, hidden, targets)
            for b, i in unsub:
                out[b][i] = SubstitutionDistribution.empty(i, sentences[b][i].form)
            for g in groups:
                probs = g.logits.double().softmax(-1).numpy()
                for row, (b, i) in enumerate(zip(g.batch_index, g.positions)):
                    original = sentences[b][i].form
                    keep = [k for k, w in enumerate(g.support) if w != original]
                    out[b][i] = SubstitutionDistribution(
                        i,
                        original,
                        tuple(g.support[k] for k in keep),
                        tuple(float(probs[row, k]) for k in keep),
                        targeted=True,
                    )
            return out
        finally:
            self.train(was_training)

    def distribution(self, sentence, targets):
        return self.distributions([sentence], targets)[0]

    def sample_many(self, sentences, targets, seed, batch_size: int = 256):
        out = []
        for start in range(0, len(sentences), batch_size):
            chunk = sentences[start : start + batch_size]
            dists = self.distributions(chunk, targets)
            out += [
                _draw(s, d, np.random.default_rng([seed, start + k]))
                for k, (s, d) in enumerate(zip(chunk, dists))
            ]
        return out

    def save(self, path: str | Path, extra: dict | None = None) -> Path:
        return save_checkpoint(
            path,
            "obfuscator",
            {
                "config": self.config.to_dict(),
                "vocab": self.vocab.to_records(),
                "vocab_digest": self.vocab.digest(),
                "state_dict": self.state_dict(),
                **(extra or {}),
            },
        )

    @classmethod
    def load(cls, path: str | Path) -> "NeuralObfuscator":
        data = load_checkpoint(path, "obfuscator")
        vocab = TagVocabulary.from_records(data["vocab"])
        if vocab.digest() != data["vocab_digest"]:
            raise ValueError(f"{path}: vocabulary digest mismatch")
        model = cls(vocab, ObfuscatorConfig.from_dict(data["config"]))
        model.load_state_dict(data["state_dict"])
        model.eval()
        return model


def build_obfuscator(vocab: TagVocabulary, config: ObfuscatorConfig | None = None, pretrained: str | Path | dict | None = None) -> NeuralObfuscator:
    if isinstance(pretrained, (str, Path)):
        pretrained = load_word_vectors(pretrained)
    return NeuralObfuscator(vocab, config, pretrained)


def encode(model: NeuralObfuscator, sentence: Sentence) -> torch.Tensor:
    """Hidden vectors ``(n, 2 * hidden)``; respects the module's train/eval mode."""
    return model.encode_batch([sentence])[0, : len(sentence)]


def neural_distribution(model: NeuralObfuscator, sentence: Sentence, targets: Collection[str], vocab: TagVocabulary | None = None) -> list[SubstitutionDistribution]:
    if vocab is not None and vocab is not model.vocab and vocab.digest() != model.vocab.digest():
        raise ValueError("vocabulary differs from the one the model was built with")
    return model.distribution(sentence, targets)
