"""Adversaries that try to recover the original words of an obfuscated sentence."""

from __future__ import annotations

import logging
import math
import time
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Collection, Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .adapters import DEFAULT_TIMEOUT, AdapterError, run_command
from .checkpoint import load_checkpoint, save_checkpoint
from .corpus import Sentence, TagVocabulary
from .layers import PAD, UNK, EncoderConfig, Index, TokenEncoder, batch_ids, char_index
from .obfuscator import ObfuscationPolicy, ObfuscationResult

logger = logging.getLogger(__name__)

MASK_TOKEN = "[MASK]"
BOS, EOS = "<s>", "</s>"


@dataclass(frozen=True)
class AttackView:
    """Everything an attacker may read: obfuscated forms, tags, and optionally the mask."""

    forms: tuple[str, ...]
    tags: tuple[str, ...]
    mask: tuple[bool, ...] | None
    positions: tuple[int, ...]  # where predictions are requested


@dataclass(frozen=True)
class AttackInstance:
    obfuscated: Sentence
    mask: tuple[bool, ...]
    original_forms: tuple[str, ...] = field(repr=False)

    @classmethod
    def from_result(cls, result: ObfuscationResult) -> "AttackInstance":
        return cls(result.obfuscated.without_tree(), result.mask, result.original.forms)

    @property
    def positions(self) -> tuple[int, ...]:
        return tuple(i for i, m in enumerate(self.mask) if m)

    def view(self, knows_mask: bool = True) -> AttackView:
        o = self.obfuscated
        return AttackView(o.forms, o.tags, self.mask if knows_mask else None, self.positions)

    def truths(self) -> list[str]:
        """Original words at the attacked positions; for scoring only."""
        return [self.original_forms[i] for i in self.positions]


class AttackPrediction:
    """Attacker distribution ``q`` over the whole vocabulary at one position."""

    __slots__ = ("position", "words", "q", "_index")

    def __init__(self, position: int, words: Sequence[str], q: np.ndarray, index: dict[str, int] | None = None):
        self.position = position
        self.words = words
        self.q = np.asarray(q, dtype=np.float64)
        self._index = index

    @property
    def ranking(self) -> list[str]:
        order = np.argsort(-self.q, kind="stable")
        return [self.words[k] for k in order]

    def rank_of(self, word: str) -> int | None:
        if self._index is not None:
            k = self._index.get(word)
        else:
            k = self.words.index(word) if word in self.words else None
        if k is None:
            return None
        return 1 + int(np.count_nonzero(self.q > self.q[k]))

    def top(self, k: int = 1) -> list[str]:
        return self.ranking[:k]


class Attacker:
    words: tuple[str, ...]
    knows_mask: bool = True

    def predict(self, views: Sequence[AttackView]) -> list[list[AttackPrediction]]:
        raise NotImplementedError


def attack(attacker: Attacker, instance: AttackInstance) -> list[AttackPrediction]:
    """One prediction per masked position of ``instance``."""
    if not instance.positions:
        return []
    return attacker.predict([instance.view(attacker.knows_mask)])[0]


def attack_many(attacker: Attacker, instances: Sequence[AttackInstance], batch_size: int = 128) -> list[list[AttackPrediction]]:
    out = []
    for start in range(0, len(instances), batch_size):
        chunk = instances[start : start + batch_size]
        views = [inst.view(attacker.knows_mask) for inst in chunk]
        todo = [k for k, v in enumerate(views) if v.positions]
        preds = attacker.predict([views[k] for k in todo]) if todo else []
        block: list[list[AttackPrediction]] = [[] for _ in chunk]
        for k, p in zip(todo, preds):
            block[k] = p
        out += block
    return out


def top1_accuracy(predictions: Sequence[Sequence[AttackPrediction]], instances: Sequence[AttackInstance]) -> float:
    hit = total = 0
    for preds, inst in zip(predictions, instances):
        for p, truth in zip(preds, inst.truths()):
            total += 1
            hit += p.words[int(np.argmax(p.q))] == truth
    return 100.0 * hit / max(total, 1)


# -- trained inversion model ---------------------------------------------------------


@dataclass
class AttackerConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    mlp_dim: int = 128
    epochs: int = 10
    batch_size: int = 32
    lr: float = 2e-3
    clip: float = 5.0
    seed: int = 0
    knows_mask: bool = True
    resample: bool = True

    @classmethod
    def preset(cls, name: str, **overrides) -> "AttackerConfig":
        if name == "paper":
            overrides.setdefault("mlp_dim", 512)
        return cls(encoder=EncoderConfig.preset(name), **overrides)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "AttackerConfig":
        data = dict(data)
        return cls(encoder=EncoderConfig(**data.pop("encoder", {})), **data)


OBF_SUFFIX = "|obf"


class TrainedAttacker(nn.Module, Attacker):
    """Encoder over the obfuscated sentence with a softmax over the full vocabulary.

    When the mask is known, each substituted position sees its tag marked as
    obfuscated, so the model can tell kept words from substitutes.
    """

    def __init__(self, vocab: TagVocabulary, config: AttackerConfig | None = None):
        nn.Module.__init__(self)
        self.config = config = config or AttackerConfig()
        self.vocab = vocab
        self.knows_mask = config.knows_mask
        self.words = tuple(vocab.full)
        self.word_pos = {w: k for k, w in enumerate(self.words)}
        tag_names = list(vocab.per_tag) + [t + OBF_SUFFIX for t in vocab.per_tag]
        self.encoder = TokenEncoder(
            Index(vocab.full, specials=(PAD, UNK)), char_index(vocab.full), Index(tag_names, specials=(PAD, UNK)), config.encoder
        )
        self.head = nn.Sequential(
            nn.Linear(config.encoder.output_dim, config.mlp_dim),
            nn.LeakyReLU(0.1),
            nn.Dropout(config.encoder.dropout),
            nn.Linear(config.mlp_dim, len(self.words)),
        )

    def _tag_rows(self, views: Sequence[AttackView]) -> list[list[str]]:
        rows = []
        for v in views:
            if v.mask is None:
                rows.append(list(v.tags))
            else:
                rows.append([t + OBF_SUFFIX if m else t for t, m in zip(v.tags, v.mask)])
        return rows

    def logits(self, views: Sequence[AttackView]) -> torch.Tensor:
        forms = [v.forms for v in views]
        ids, lengths = batch_ids(forms, self.encoder.words)
        tag_ids, _ = batch_ids(self._tag_rows(views), self.encoder.tags)
        h = self.encoder(ids, tag_ids, lengths, forms)
        return self.head(h)

    @torch.no_grad()
    def predict(self, views: Sequence[AttackView]) -> list[list[AttackPrediction]]:
        was = self.training
        self.eval()
        try:
            q = self.logits(views).double().softmax(-1).numpy()
        finally:
            self.train(was)
        return [[AttackPrediction(i, self.words, q[b, i], self.word_pos) for i in v.positions] for b, v in enumerate(views)]

    def save(self, path: str | Path, extra: dict | None = None) -> Path:
        return save_checkpoint(
            path,
            "attacker",
            {"config": self.config.to_dict(), "vocab": self.vocab.to_records(), "state_dict": self.state_dict(), **(extra or {})},
        )

    @classmethod
    def load(cls, path: str | Path) -> "TrainedAttacker":
        data = load_checkpoint(path, "attacker")
        model = cls(TagVocabulary.from_records(data["vocab"]), AttackerConfig.from_dict(data["config"]))
        model.load_state_dict(data["state_dict"])
        model.eval()
        return model


def _training_views(results: Sequence[ObfuscationResult], knows_mask: bool) -> list[tuple[AttackView, list[str]]]:
    out = []
    for r in results:
        inst = AttackInstance.from_result(r)
        view = inst.view(knows_mask)
        if knows_mask:
            if not view.positions:
                continue
        else:
            # without the mask every position is a potential substitute
            view = AttackView(view.forms, view.tags, None, tuple(range(len(view.forms))))
        out.append((view, list(inst.original_forms)))
    return out


def train_attacker(
    train: Sequence[ObfuscationResult],
    config: AttackerConfig | None = None,
    policy: ObfuscationPolicy | None = None,
    targets: Collection[str] | None = None,
    vocab: TagVocabulary | None = None,
) -> tuple[TrainedAttacker, dict]:
    """Cross-entropy on masked positions against the original words.

    With ``policy`` and ``targets`` the originals are re-obfuscated every
    epoch, so the attacker sees fresh samples of the policy it attacks.
    """
    config = config or AttackerConfig()
    if not train or not any(any(r.mask) for r in train):
        raise ValueError("attacker training data has no substituted positions")
    resample = config.resample and policy is not None and targets is not None
    vocab = vocab or (policy.vocab if policy is not None else None)
    if vocab is None:
        raise ValueError("train_attacker needs a vocabulary (pass vocab or policy)")
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    model = TrainedAttacker(vocab, config)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.lr, betas=(0.9, 0.9))
    originals = [r.original for r in train]
    records = []
    for epoch in range(1, config.epochs + 1):
        start = time.time()
        results = policy.sample_many(originals, targets, config.seed * 1000 + epoch) if resample and epoch > 1 else train
        data = _training_views(results, config.knows_mask)
        order = rng.permutation(len(data))
        model.train()
        total, count = 0.0, 0
        for b in range(0, len(order), config.batch_size):
            batch = [data[k] for k in order[b : b + config.batch_size]]
            logits = model.logits([v for v, _ in batch])
            rows, cols, gold = [], [], []
            for k, (v, orig) in enumerate(batch):
                for i in v.positions:
                    rows.append(k)
                    cols.append(i)
                    gold.append(model.word_pos.get(orig[i], -100))
            target = torch.tensor(gold)
            if not target.ne(-100).any():
                continue
            loss = F.cross_entropy(logits[rows, cols], target, ignore_index=-100)
            optimizer.zero_grad()
            loss.backward()
            nn.utils.clip_grad_norm_(model.parameters(), config.clip)
            optimizer.step()
            n = int(target.ne(-100).sum())
            total += loss.item() * n
            count += n
        record = {"epoch": epoch, "train_loss": total / max(count, 1), "positions": count, "wall_time": time.time() - start}
        logger.info("attacker %s", record)
        records.append(record)
    model.eval()
    return model, {"epochs": records, "config": config.to_dict(), "resampled": resample}


# -- masked-word predictors -------------------------------------------------------------


class MaskedPredictor:
    """Predicts the word at one masked position as a distribution over ``words``."""

    words: tuple[str, ...]

    def predict(self, tokens: Sequence[str], position: int, tags: Sequence[str] | None = None) -> np.ndarray:
        raise NotImplementedError


class MaskedPredictorAttacker(Attacker):
    """Masks each substituted word in turn and asks a predictor to fill it in."""

    def __init__(self, predictor: MaskedPredictor, knows_mask: bool = True):
        self.predictor = predictor
        self.words = tuple(predictor.words)
        self.index = {w: k for k, w in enumerate(self.words)}
        self.knows_mask = knows_mask

    def predict(self, views):
        out = []
        for v in views:
            preds = []
            for i in v.positions:
                tokens = list(v.forms)
                tokens[i] = MASK_TOKEN
                preds.append(AttackPrediction(i, self.words, self.predictor.predict(tokens, i, v.tags), self.index))
            out.append(preds)
        return out


class ContextCountPredictor(MaskedPredictor):
    """Smoothed counts of (left word, right word, tag) contexts.

    Backs off to the tag's unigram distribution, which itself is smoothed
    towards the add-one global unigram distribution.
    """

    def __init__(self, train: Sequence[Sentence], words: Sequence[str] | None = None, context_weight: float = 0.5, tag_weight: float = 1.0):
        seen = sorted({w for s in train for w in s.forms})
        self.words = tuple(words) if words is not None else tuple(seen)
        self.index = {w: k for k, w in enumerate(self.words)}
        self.context_weight = context_weight
        self.tag_weight = tag_weight
        n = len(self.words)
        glob = np.ones(n)
        tag_counts: dict[str, np.ndarray] = defaultdict(lambda: np.zeros(n))
        ctx_counts: dict[tuple[str, str, str], Counter] = defaultdict(Counter)
        for s in train:
            forms = [BOS, *s.forms, EOS]
            for i, tok in enumerate(s, start=1):
                k = self.index.get(tok.form)
                if k is None:
                    continue
                glob[k] += 1
                tag_counts[tok.tag][k] += 1
                ctx_counts[(forms[i - 1], forms[i + 1], tok.tag)][k] += 1
        self.global_dist = glob / glob.sum()
        self.tag_dist = {
            t: (c + tag_weight * self.global_dist) / (c.sum() + tag_weight) for t, c in tag_counts.items()
        }
        self.ctx_counts = dict(ctx_counts)

    def predict(self, tokens, position, tags=None):
        tag = tags[position] if tags is not None else None
        base = self.tag_dist.get(tag, self.global_dist)
        left = tokens[position - 1] if position > 0 else BOS
        right = tokens[position + 1] if position + 1 < len(tokens) else EOS
        counts = self.ctx_counts.get((left, right, tag))
        if not counts:
            return base.copy()
        c = np.zeros(len(self.words))
        for k, v in counts.items():
            c[k] = v
        return (c + self.context_weight * base) / (c.sum() + self.context_weight)


def context_count_predictor(train: Sequence[Sentence], words: Sequence[str] | None = None) -> ContextCountPredictor:
    return ContextCountPredictor(train, words)


class ExternalMaskedPredictor(MaskedPredictor):
    """Runs a command per request.

    The request is one line of space-separated tokens with ``[MASK]`` at the
    target; the reply is ``word probability`` lines. Mass on words outside the
    vocabulary is dropped and the rest renormalized; a reply with no
    in-vocabulary mass falls back to uniform.
    """

    def __init__(self, command: str | Sequence[str], words: Sequence[str], timeout: float = DEFAULT_TIMEOUT):
        self.command = command
        self.words = tuple(words)
        self.index = {w: k for k, w in enumerate(self.words)}
        self.timeout = timeout
        self.fallbacks = 0

    def predict(self, tokens, position, tags=None):
        raw = run_command(self.command, " ".join(tokens) + "\n", self.timeout, position=position)
        q = np.zeros(len(self.words))
        for line in raw.splitlines():
            if not line.strip():
                continue
            parts = line.split()
            try:
                if len(parts) != 2:
                    raise ValueError
                p = float(parts[1])
                if not math.isfinite(p) or p < 0:
                    raise ValueError
            except ValueError:
                raise AdapterError(f"malformed predictor line at position {position}: {line!r}", raw, position) from None
            k = self.index.get(parts[0])
            if k is not None:
                q[k] += p
        total = q.sum()
        if total <= 0:
            self.fallbacks += 1
            return np.full(len(self.words), 1.0 / len(self.words))
        return q / total


def external_masked_predictor(command: str | Sequence[str], words: Sequence[str], timeout: float = DEFAULT_TIMEOUT) -> ExternalMaskedPredictor:
    return ExternalMaskedPredictor(command, words, timeout)


def prior_ceiling(train: Sequence[Sentence], instances: Sequence[AttackInstance]) -> float:
    """Top-1 accuracy of guessing the most frequent other word of the observed tag.

    Under uniform substitution the substitute carries no information beyond
    excluding itself, so this is the best context-free guess.
    """
    counts: dict[str, Counter] = defaultdict(Counter)
    for s in train:
        for tok in s:
            counts[tok.tag][tok.form] += 1
    hit = total = 0
    for inst in instances:
        for i in inst.positions:
            tok = inst.obfuscated[i]
            ranked = [w for w, _ in sorted(counts[tok.tag].items(), key=lambda kv: (-kv[1], kv[0])) if w != tok.form]
            total += 1
            hit += bool(ranked) and ranked[0] == inst.original_forms[i]
    return 100.0 * hit / max(total, 1)
