"""Biaffine dependency parser with a differentiable word-input pathway."""

from __future__ import annotations

import logging
import random
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .checkpoint import load_checkpoint, parameter_checksum, save_checkpoint
from .corpus import DepTree, Sentence
from .decode import decode_heads
from .layers import PAD, ROOT, UNK, EncoderConfig, Index, TokenEncoder, batch_ids, char_index, load_word_vectors

logger = logging.getLogger(__name__)

IGNORE = -100


class FrozenParserError(RuntimeError):
    """Raised when a frozen parser would be modified, or an unfrozen one is used where freezing is required."""


@dataclass
class ParserConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    arc_dim: int = 64
    rel_dim: int = 32
    mlp_dropout: float = 0.33
    epochs: int = 12
    batch_size: int = 32
    lr: float = 2e-3
    clip: float = 5.0
    word_dropout: float = 0.1
    decoder: str = "greedy"
    seed: int = 0

    @classmethod
    def preset(cls, name: str, **overrides) -> "ParserConfig":
        if name == "paper":
            base = cls(encoder=EncoderConfig.preset("paper"), arc_dim=500, rel_dim=100, epochs=50, batch_size=32)
        elif name == "desk":
            base = cls()
        else:
            raise ValueError(f"unknown preset {name!r}")
        return base.replace(**overrides)

    def replace(self, **overrides) -> "ParserConfig":
        data = self.to_dict()
        enc = overrides.pop("encoder", None)
        data.update(overrides)
        if enc is not None:
            data["encoder"] = enc if isinstance(enc, dict) else asdict(enc)
        return ParserConfig.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ParserConfig":
        data = dict(data)
        enc = data.pop("encoder", {})
        return cls(encoder=EncoderConfig(**enc), **data)


class MLP(nn.Module):
    def __init__(self, input_dim: int, output_dim: int, dropout: float):
        super().__init__()
        self.linear = nn.Linear(input_dim, output_dim)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.dropout(F.leaky_relu(self.linear(x), 0.1))


@dataclass
class ParseScores:
    """Arc scores ``(n, n+1)`` and label scores ``(n, n+1, L)`` for one sentence."""

    arc_scores: np.ndarray
    label_scores: np.ndarray
    labels: tuple[str, ...]

    def __post_init__(self):
        n = self.arc_scores.shape[0]
        if self.arc_scores.shape != (n, n + 1):
            raise ValueError(f"arc scores must be n x (n+1), got {self.arc_scores.shape}")
        if self.label_scores.shape != (n, n + 1, len(self.labels)):
            raise ValueError(f"label scores must be n x (n+1) x L, got {self.label_scores.shape}")


def decode_tree(scores: ParseScores, method: str = "greedy") -> DepTree:
    heads = decode_heads(scores.arc_scores, method)
    rels = tuple(
        scores.labels[int(scores.label_scores[i, h].argmax())] for i, h in enumerate(heads)
    )
    return DepTree(tuple(heads), rels)


class BiaffineParser(nn.Module):
    def __init__(
        self,
        words: Index,
        chars: Index,
        tags: Index,
        labels: Sequence[str],
        config: ParserConfig,
        pretrained: dict[str, np.ndarray] | None = None,
    ):
        super().__init__()
        self.config = config
        self.labels = tuple(labels)
        self.label_index = {label: i for i, label in enumerate(self.labels)}
        self.encoder = TokenEncoder(words, chars, tags, config.encoder, pretrained)
        d = config.encoder.output_dim
        self.arc_dep = MLP(d, config.arc_dim, config.mlp_dropout)
        self.arc_head = MLP(d, config.arc_dim, config.mlp_dropout)
        self.rel_dep = MLP(d, config.rel_dim, config.mlp_dropout)
        self.rel_head = MLP(d, config.rel_dim, config.mlp_dropout)
        self.arc_weight = nn.Parameter(torch.zeros(config.arc_dim, config.arc_dim))
        self.arc_bias = nn.Parameter(torch.zeros(config.arc_dim))
        self.rel_weight = nn.Parameter(torch.zeros(len(self.labels), config.rel_dim + 1, config.rel_dim + 1))
        self.frozen = False
        self._table_cache: torch.Tensor | None = None

    @property
    def words(self) -> Index:
        return self.encoder.words

    @property
    def tags(self) -> Index:
        return self.encoder.tags

    @property
    def dtype(self) -> torch.dtype:
        return self.arc_weight.dtype

    # -- freezing -----------------------------------------------------------

    def freeze(self) -> "BiaffineParser":
        for p in self.parameters():
            p.requires_grad_(False)
            p.grad = None
        self.frozen = True
        super().train(False)
        self._table_cache = None
        return self

    def train(self, mode: bool = True) -> "BiaffineParser":
        if self.frozen and mode:
            raise FrozenParserError("a frozen parser cannot be put in training mode")
        return super().train(mode)

    def checksum(self) -> str:
        return parameter_checksum(self)

    def lexical_table(self) -> torch.Tensor:
        if self.frozen:
            if self._table_cache is None or self._table_cache.dtype != self.dtype:
                with torch.no_grad():
                    self._table_cache = self.encoder.lexical_table()
            return self._table_cache
        return self.encoder.lexical_table()

    # -- inputs ---------------------------------------------------------------

    def one_hot(self, forms: Sequence[str]) -> torch.Tensor:
        ids = torch.tensor(self.words.lookup(forms))
        return F.one_hot(ids, len(self.words)).to(self.dtype)

    def _root_row(self, batch: int, dtype: torch.dtype) -> torch.Tensor:
        row = torch.zeros(batch, 1, len(self.words), dtype=dtype)
        row[:, 0, self.words[ROOT]] = 1.0
        return row

    def prepare(self, sentences: Sequence[Sentence]):
        forms = [[ROOT, *s.forms] for s in sentences]
        tags = [[ROOT, *s.tags] for s in sentences]
        ids, lengths = batch_ids(forms, self.words)
        tag_ids, _ = batch_ids(tags, self.tags)
        return forms, ids, tag_ids, lengths

    def gold_tensors(self, sentences: Sequence[Sentence], width: int) -> tuple[torch.Tensor, torch.Tensor]:
        heads = torch.full((len(sentences), width), IGNORE, dtype=torch.long)
        rels = torch.full((len(sentences), width), IGNORE, dtype=torch.long)
        for b, s in enumerate(sentences):
            tree = s.tree
            heads[b, 1 : len(s) + 1] = torch.tensor(tree.heads)
            rels[b, 1 : len(s) + 1] = torch.tensor([self.label_index.get(r, IGNORE) for r in tree.deprels])
        return heads, rels

    # -- scoring --------------------------------------------------------------

    def scores(self, lexical: torch.Tensor, tag_ids: torch.Tensor, lengths: torch.Tensor):
        """Masked arc scores ``(B, T, T)`` indexed [dep, head] and label scores ``(B, T, T, L)``."""
        h = self.encoder.encode(lexical, tag_ids, lengths)
        ad, ah = self.arc_dep(h), self.arc_head(h)
        arc = torch.einsum("bid,de,bje->bij", ad, self.arc_weight, ah) + (ah @ self.arc_bias).unsqueeze(1)
        ones = h.new_ones(*h.shape[:2], 1)
        rd = torch.cat([self.rel_dep(h), ones], dim=-1)
        rh = torch.cat([self.rel_head(h), ones], dim=-1)
        rel = torch.einsum("bix,lxy,bjy->bijl", rd, self.rel_weight, rh)
        width = h.size(1)
        positions = torch.arange(width)
        invalid = positions.view(1, 1, -1) >= lengths.view(-1, 1, 1)
        invalid = invalid | torch.eye(width, dtype=torch.bool).unsqueeze(0)
        arc = arc.masked_fill(invalid, float("-inf"))
        return arc, rel

    def lexical_from_weights(self, weights: torch.Tensor) -> torch.Tensor:
        return weights @ self.lexical_table()

    def token_logliks(
        self,
        lexical: torch.Tensor,
        tag_ids: torch.Tensor,
        lengths: torch.Tensor,
        gold_heads: torch.Tensor,
        gold_rels: torch.Tensor,
    ) -> torch.Tensor:
        """Per-token ``log p(head) + log p(label | head)``; zero at padding/root."""
        arc, rel = self.scores(lexical, tag_ids, lengths)
        arc_lp = arc.log_softmax(-1)
        valid = gold_heads.ne(IGNORE)
        safe_heads = gold_heads.clamp(min=0)
        head_lp = arc_lp.gather(-1, safe_heads.unsqueeze(-1)).squeeze(-1)
        rel_at_gold = rel.gather(2, safe_heads.view(*safe_heads.shape, 1, 1).expand(-1, -1, 1, rel.size(-1))).squeeze(2)
        rel_lp = rel_at_gold.log_softmax(-1)
        rel_valid = gold_rels.ne(IGNORE)
        label_lp = rel_lp.gather(-1, gold_rels.clamp(min=0).unsqueeze(-1)).squeeze(-1)
        total = head_lp.masked_fill(~valid, 0.0) + label_lp.masked_fill(~(valid & rel_valid), 0.0)
        return total

    def sentence_logliks(self, word_weights: torch.Tensor, tag_ids, lengths, gold_heads, gold_rels) -> torch.Tensor:
        """Sum of token log-likelihoods per sentence for dense word distributions ``(B, T, |V|)``."""
        lexical = self.lexical_from_weights(word_weights)
        return self.token_logliks(lexical, tag_ids, lengths, gold_heads, gold_rels).sum(-1)

    # -- prediction -----------------------------------------------------------

    @torch.no_grad()
    def parse_scores(self, sentences: Sequence[Sentence]) -> list[ParseScores]:
        was_training = self.training
        if not self.frozen:
            super().train(False)
        try:
            forms, ids, tag_ids, lengths = self.prepare(sentences)
            lexical = self.encoder.lexical_from_ids(ids, forms)
            arc, rel = self.scores(lexical, tag_ids, lengths)
            arc = arc.log_softmax(-1)
        finally:
            if was_training and not self.frozen:
                super().train(True)
        out = []
        for b, s in enumerate(sentences):
            n = len(s)
            out.append(
                ParseScores(
                    arc[b, 1 : n + 1, : n + 1].double().numpy(),
                    rel[b, 1 : n + 1, : n + 1].double().numpy(),
                    self.labels,
                )
            )
        return out

    def save(self, path: str | Path, extra: dict | None = None) -> Path:
        return save_checkpoint(
            path,
            "parser",
            {
                "config": self.config.to_dict(),
                "words": self.encoder.words.to_state(),
                "chars": self.encoder.chars.to_state(),
                "tags": self.encoder.tags.to_state(),
                "labels": list(self.labels),
                "state_dict": self.state_dict(),
                "checksum": self.checksum(),
                **(extra or {}),
            },
        )

    @classmethod
    def load(cls, path: str | Path) -> "BiaffineParser":
        data = load_checkpoint(path, "parser")
        model = cls(
            Index.from_state(data["words"]),
            Index.from_state(data["chars"]),
            Index.from_state(data["tags"]),
            data["labels"],
            ParserConfig.from_dict(data["config"]),
        )
        model.load_state_dict(data["state_dict"])
        model.eval()
        return model


def build_parser(
    train: Sequence[Sentence],
    config: ParserConfig,
    pretrained: dict[str, np.ndarray] | None = None,
) -> BiaffineParser:
    forms = {f for s in train for f in s.forms}
    words = Index(forms, specials=(PAD, UNK, ROOT))
    chars = char_index(forms)
    tags = Index({t for s in train for t in s.tags}, specials=(PAD, UNK, ROOT))
    labels = sorted({d for s in train for d in s.deprels if d is not None})
    return BiaffineParser(words, chars, tags, labels, config, pretrained)


def parse_many(model: BiaffineParser, sentences: Sequence[Sentence], batch_size: int = 64, method: str | None = None) -> list[Sentence]:
    method = method or model.config.decoder
    out: list[Sentence] = []
    for start in range(0, len(sentences), batch_size):
        chunk = sentences[start : start + batch_size]
        for s, sc in zip(chunk, model.parse_scores(chunk)):
            tree = decode_tree(sc, method)
            out.append(s.with_tree(tree.heads, tree.deprels))
    return out


def parse(model: BiaffineParser, sentence: Sentence, method: str | None = None) -> Sentence:
    return parse_many(model, [sentence], method=method)[0]


def loglik(
    model: BiaffineParser,
    word_inputs: torch.Tensor,
    tags: Sequence[str],
    gold: DepTree,
    check: bool = True,
) -> torch.Tensor:
    """Log-likelihood of ``gold`` given one-hot or relaxed word vectors ``(n, |V|)``.

    Differentiable with respect to ``word_inputs``. ``check=False`` skips the
    simplex test, which finite-difference probes need.
    """
    n = len(tags)
    if word_inputs.dim() != 2 or word_inputs.shape != (n, len(model.words)):
        raise ValueError(f"word_inputs must have shape ({n}, {len(model.words)}), got {tuple(word_inputs.shape)}")
    if len(gold.heads) != n or len(gold.deprels) != n:
        raise ValueError("gold tree length does not match the input")
    if check:
        if (word_inputs < 0).any():
            raise ValueError("word_inputs must be non-negative")
        sums = word_inputs.detach().sum(-1)
        if (sums - 1).abs().max() > 1e-6:
            raise ValueError("every word input vector must sum to 1")
    weights = torch.cat([model._root_row(1, word_inputs.dtype), word_inputs.unsqueeze(0)], dim=1)
    sent = Sentence.from_lists(["_x"] * n, list(tags), gold.heads, gold.deprels)
    _, _, tag_ids, lengths = model.prepare([sent])
    heads, rels = model.gold_tensors([sent], n + 1)
    return model.sentence_logliks(weights, tag_ids, lengths, heads, rels)[0]


def uas(predicted: Sequence[Sentence], gold: Sequence[Sentence]) -> float:
    total = correct = 0
    for p, g in zip(predicted, gold):
        for ph, gh in zip(p.heads, g.heads):
            total += 1
            correct += ph == gh
    return 100.0 * correct / max(total, 1)


def train_parser(
    train: Sequence[Sentence],
    dev: Sequence[Sentence],
    config: ParserConfig | None = None,
    pretrained: str | Path | dict | None = None,
    on_epoch: Callable[[dict], None] | None = None,
) -> tuple[BiaffineParser, dict]:
    """Train with per-token head and label cross-entropy; keep the best-dev-UAS epoch."""
    config = config or ParserConfig()
    if not train or not all(s.has_tree for s in train):
        raise ValueError("train_parser needs sentences with gold heads and deprels")
    if dev and not all(s.has_tree for s in dev):
        raise ValueError("dev sentences must carry gold trees")
    if isinstance(pretrained, (str, Path)):
        pretrained = load_word_vectors(pretrained)
    torch.manual_seed(config.seed)
    rng = random.Random(config.seed)
    model = build_parser(train, config, pretrained)
    optimizer = torch.optim.Adam(
        [p for p in model.parameters() if p.requires_grad], lr=config.lr, betas=(0.9, 0.9)
    )
    unk = model.words[UNK]
    order = list(range(len(train)))
    best_uas, best_state, records = -1.0, None, []
    for epoch in range(1, config.epochs + 1):
        start = time.time()
        model.train()
        rng.shuffle(order)
        total_loss, total_tokens = 0.0, 0
        for i in range(0, len(order), config.batch_size):
            batch = [train[j] for j in order[i : i + config.batch_size]]
            forms, ids, tag_ids, lengths = model.prepare(batch)
            if config.word_dropout > 0:
                drop = torch.rand(ids.shape) < config.word_dropout
                drop[:, 0] = False
                ids = ids.masked_fill(drop & ids.ne(0), unk)
            heads, rels = model.gold_tensors(batch, ids.size(1))
            lexical = model.encoder.lexical_from_ids(ids)
            ll = model.token_logliks(lexical, tag_ids, lengths, heads, rels)
            n_tokens = int(heads.ne(IGNORE).sum())
            loss = -ll.sum() / n_tokens
            optimizer.zero_grad()
            loss.backward()
            nn.utils.clip_grad_norm_(model.parameters(), config.clip)
            optimizer.step()
            total_loss += loss.item() * n_tokens
            total_tokens += n_tokens
        record = {"epoch": epoch, "train_loss": total_loss / total_tokens, "wall_time": time.time() - start}
        if dev:
            record["dev_uas"] = uas(parse_many(model, dev), dev)
        records.append(record)
        logger.info("parser epoch %d: %s", epoch, record)
        if on_epoch:
            on_epoch(record)
        score = record.get("dev_uas", -record["train_loss"])
        if score > best_uas:
            best_uas = score
            best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
    assert best_state is not None
    model.load_state_dict(best_state)
    model.eval()
    best_epoch = max(records, key=lambda r: r.get("dev_uas", -r["train_loss"]))["epoch"]
    report = {"epochs": records, "best_epoch": best_epoch, "best_dev_uas": best_uas if dev else None, "config": config.to_dict()}
    return model, report
