"""End-to-end training of the neural obfuscator against a frozen parser."""

from __future__ import annotations

import itertools
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Collection, NamedTuple, Sequence

import numpy as np
import torch
from torch import nn

from .corpus import DEFAULT_SPECTRUM, Sentence, spectrum_set
from .metrics import uas_las
from .obfuscator import NeuralObfuscator, ObfuscationPolicy
from .parser import BiaffineParser, parse_many

logger = logging.getLogger(__name__)

GUMBEL_EPS = 1e-10
ENUMERATION_LIMIT = 10_000


class ContractError(RuntimeError):
    """Raised when a caller breaks a documented precondition (e.g. an unfrozen parser)."""


@dataclass
class TrainingConfig:
    tau_start: float = 1.0
    tau_end: float = 0.5
    anneal: str = "linear"
    entropy_weight: float = 0.0
    epochs: int = 5
    batch_size: int = 32
    lr: float = 1e-3
    clip: float = 5.0
    seed: int = 0
    targets: tuple[str, ...] = field(default_factory=lambda: tuple(sorted(spectrum_set(len(DEFAULT_SPECTRUM.levels)))))
    samples: int = 1
    use_parser_predictions: bool = False
    eval_seed: int = 1234

    def __post_init__(self):
        self.targets = tuple(sorted(self.targets))
        if not 0 < self.tau_end <= self.tau_start:
            raise ValueError(f"need 0 < tau_end <= tau_start, got {self.tau_end}, {self.tau_start}")
        if self.entropy_weight < 0:
            raise ValueError("entropy_weight must be non-negative")
        if self.anneal not in ("linear", "constant"):
            raise ValueError(f"unknown anneal schedule {self.anneal!r}")
        if self.samples < 1:
            raise ValueError("samples must be at least 1")

    def tau(self, step: int, total_steps: int) -> float:
        if self.anneal == "constant" or total_steps <= 0:
            return self.tau_start
        return self.tau_start + (self.tau_end - self.tau_start) * step / total_steps

    def to_dict(self) -> dict:
        d = asdict(self)
        d["targets"] = list(self.targets)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "TrainingConfig":
        data = dict(data)
        if "targets" in data:
            data["targets"] = tuple(data["targets"])
        return cls(**data)


# -- Gumbel-softmax --------------------------------------------------------------


def gumbel_noise(shape, rng: np.random.Generator) -> np.ndarray:
    u = np.clip(rng.random(shape), GUMBEL_EPS, 1.0 - GUMBEL_EPS)
    return -np.log(-np.log(u))


class GumbelSample(NamedTuple):
    discrete: torch.Tensor
    relaxed: torch.Tensor
    noise: torch.Tensor

    @property
    def straight_through(self) -> torch.Tensor:
        """Forward value of ``discrete``, gradient of ``relaxed``."""
        return (self.discrete - self.relaxed).detach() + self.relaxed


def gumbel_softmax(logits: torch.Tensor, tau: float, rng: np.random.Generator) -> GumbelSample:
    """One Gumbel-max draw per row of ``logits`` (last axis is the support).

    ``logits`` may be unnormalized and may hold ``-inf`` for excluded entries.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    logp = logits.log_softmax(-1)
    noise = torch.from_numpy(gumbel_noise(tuple(logits.shape), rng)).to(logp.dtype)
    perturbed = logp + noise
    relaxed = (perturbed / tau).softmax(-1)
    index = perturbed.argmax(-1, keepdim=True)
    discrete = torch.zeros_like(relaxed).scatter_(-1, index, 1.0)
    return GumbelSample(discrete, relaxed, noise)


# -- objective -----------------------------------------------------------------


class _Support:
    """Parser word ids of every tag's candidate list, in obfuscator order."""

    def __init__(self, obf: NeuralObfuscator, parser: BiaffineParser):
        self.ids = {t: torch.tensor(parser.words.lookup(words)) for t, words in obf.vocab.per_tag.items()}


def _require_frozen(parser: BiaffineParser) -> None:
    if not getattr(parser, "frozen", False):
        raise ContractError("the parser must be frozen (call parser.freeze()) before obfuscator training")


def _gold(sentences: Sequence[Sentence], gold: Sequence | None) -> list[Sentence]:
    if gold is None:
        return list(sentences)
    # gold items may be DepTree or Sentence; both expose heads and deprels
    return [s.with_tree(g.heads, g.deprels) for s, g in zip(sentences, gold)]


def objective_batch(
    obf: NeuralObfuscator,
    parser: BiaffineParser,
    batch: Sequence[Sentence],
    config: TrainingConfig,
    rng: np.random.Generator,
    tau: float | None = None,
    gold: Sequence | None = None,
    _support: _Support | None = None,
) -> torch.Tensor:
    """One-sample estimate of ``-(1/B) sum_i log p0(z_i | y_i) - lambda * H``.

    ``batch`` sentences carry the target trees unless ``gold`` supplies them.
    """
    _require_frozen(parser)
    tau = config.tau_start if tau is None else tau
    sentences = _gold(batch, gold)
    if config.samples > 1:
        sentences = [s for s in sentences for _ in range(config.samples)]
    support = _support or _Support(obf, parser)

    forms, ids, tag_ids, lengths = parser.prepare(sentences)
    heads, rels = parser.gold_tensors(sentences, ids.size(1))
    with torch.no_grad():
        lexical = parser.encoder.lexical_from_ids(ids, forms)
    entropy = lexical.new_zeros(())
    targets = set(config.targets)
    if targets:
        hidden = obf.encode_batch(sentences)
        groups, _ = obf.tag_groups(sentences, hidden, targets)
        table = parser.lexical_table()
        rows_b, rows_i, rows_v = [], [], []
        for g in groups:
            sample = gumbel_softmax(g.logits.double(), tau, rng)
            st = sample.straight_through.to(lexical.dtype)
            rows_b += g.batch_index
            rows_i += [i + 1 for i in g.positions]
            rows_v.append(st @ table[support.ids[g.tag]])
            if config.entropy_weight > 0:
                logp = g.logits.log_softmax(-1)
                # excluded entries have p = 0; zero their -inf log so gradients stay finite
                entropy = entropy - (logp.exp() * logp.masked_fill(torch.isinf(logp), 0.0)).sum()
        if rows_v:
            lexical = lexical.index_put((torch.tensor(rows_b), torch.tensor(rows_i)), torch.cat(rows_v))
    ll = parser.token_logliks(lexical, tag_ids, lengths, heads, rels).sum(-1)
    n = len(sentences)
    return -ll.sum() / n - config.entropy_weight * entropy / n


@torch.no_grad()
def discrete_logliks(parser: BiaffineParser, sentences: Sequence[Sentence], gold: Sequence[Sentence]) -> np.ndarray:
    """``log p0(z | y)`` for discrete sentences ``y`` against the trees of ``gold``."""
    trees = [s.with_tree(g.heads, g.deprels) for s, g in zip(sentences, gold)]
    forms, ids, tag_ids, lengths = parser.prepare(trees)
    heads, rels = parser.gold_tensors(trees, ids.size(1))
    lexical = parser.encoder.lexical_from_ids(ids, forms)
    return parser.token_logliks(lexical, tag_ids, lengths, heads, rels).sum(-1).double().numpy()


def exact_objectives(
    policy: ObfuscationPolicy,
    parser: BiaffineParser,
    sentence: Sentence,
    gold: Sentence | None,
    targets: Collection[str],
    limit: int = ENUMERATION_LIMIT,
    batch_size: int = 256,
) -> tuple[float, float]:
    """Exact ``(L, L0)`` by enumerating every obfuscation of one sentence.

    ``L = sum_y p(y|x) log p0(z|y)`` and ``L0 = log sum_y p(y|x) p0(z|y)``.
    """
    gold = gold if gold is not None else sentence
    dists = [d for d in policy.distribution(sentence, targets) if d.substitutes]
    size = math.prod(len(d.support) for d in dists)
    if size > limit:
        raise ValueError(
            f"enumeration needs {size} obfuscations ({' x '.join(str(len(d.support)) for d in dists)}), limit is {limit}"
        )
    log_py, ll = [], []
    chunk: list[Sentence] = []

    def flush():
        if chunk:
            ll.extend(discrete_logliks(parser, chunk, [gold] * len(chunk)))
            chunk.clear()

    for combo in itertools.product(*[range(len(d.support)) for d in dists]):
        forms = list(sentence.forms)
        lp = 0.0
        for d, k in zip(dists, combo):
            forms[d.position] = d.support[k]
            lp += math.log(d.probs[k]) if d.probs[k] > 0 else -math.inf
        log_py.append(lp)
        chunk.append(sentence.with_forms(forms))
        if len(chunk) >= batch_size:
            flush()
    flush()
    log_py = np.asarray(log_py)
    ll = np.asarray(ll)
    p = np.exp(log_py)
    keep = p > 0
    L = float(np.sum(p[keep] * ll[keep]))
    a = log_py[keep] + ll[keep]
    L0 = float(a.max() + np.log(np.exp(a - a.max()).sum()))
    return L, L0


# -- evaluation and training loop ----------------------------------------------------


def obfuscated_accuracy(
    policy: ObfuscationPolicy,
    parser: BiaffineParser,
    sentences: Sequence[Sentence],
    targets: Collection[str],
    seed: int,
    punct: Collection[str] = (),
) -> tuple[float, float]:
    """UAS/LAS of the parser on sampled obfuscations, scored against the original trees."""
    results = policy.sample_many(sentences, targets, seed)
    predicted = parse_many(parser, [r.obfuscated for r in results])
    return uas_las(predicted, sentences, punct=punct)


def train_obfuscator(
    obf: NeuralObfuscator,
    parser: BiaffineParser,
    train: Sequence[Sentence],
    dev: Sequence[Sentence],
    config: TrainingConfig | None = None,
    report_path: str | Path | None = None,
    on_epoch: Callable[[dict], None] | None = None,
) -> tuple[NeuralObfuscator, dict]:
    """Optimize the obfuscator's parameters only; keep the best dev obfuscated-UAS epoch."""
    config = config or TrainingConfig()
    _require_frozen(parser)
    before = parser.checksum()
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    targets = set(config.targets)

    if config.use_parser_predictions:
        train = parse_many(parser, train)
    elif not all(s.has_tree for s in train):
        raise ValueError("training sentences need gold trees unless use_parser_predictions is set")

    params = [p for p in obf.parameters() if p.requires_grad]
    optimizer = torch.optim.Adam(params, lr=config.lr)
    support = _Support(obf, parser)
    batches_per_epoch = math.ceil(len(train) / config.batch_size)
    total_steps = config.epochs * batches_per_epoch

    out = open(report_path, "w", encoding="utf-8") if report_path else None

    def emit(record: dict) -> None:
        logger.info("obfuscator %s", record)
        if out:
            out.write(json.dumps(record) + "\n")
            out.flush()
        if on_epoch:
            on_epoch(record)

    def evaluate() -> tuple[float, float]:
        if not dev:
            return float("nan"), float("nan")
        return obfuscated_accuracy(obf, parser, dev, targets, config.eval_seed)

    try:
        start = time.time()
        dev_uas, dev_las = evaluate()
        records = [{"epoch": 0, "tau": config.tau(0, total_steps), "train_loss": None, "dev_uas": dev_uas, "dev_las": dev_las, "wall_time": time.time() - start}]
        emit(records[0])
        best = (dev_uas, 0, {k: v.detach().clone() for k, v in obf.state_dict().items()})
        step = 0
        order = np.arange(len(train))
        for epoch in range(1, config.epochs + 1):
            start = time.time()
            obf.train()
            rng.shuffle(order)
            total, count = 0.0, 0
            for b in range(batches_per_epoch):
                batch = [train[j] for j in order[b * config.batch_size : (b + 1) * config.batch_size]]
                tau = config.tau(step, total_steps)
                loss = objective_batch(obf, parser, batch, config, rng, tau=tau, _support=support)
                optimizer.zero_grad()
                loss.backward()
                nn.utils.clip_grad_norm_(params, config.clip)
                optimizer.step()
                total += loss.item() * len(batch)
                count += len(batch)
                step += 1
            obf.eval()
            dev_uas, dev_las = evaluate()
            record = {
                "epoch": epoch,
                "tau": config.tau(step, total_steps),  # schedule value reached at the end of the epoch
                "train_loss": total / max(count, 1),
                "dev_uas": dev_uas,
                "dev_las": dev_las,
                "wall_time": time.time() - start,
            }
            records.append(record)
            emit(record)
            if dev and dev_uas > best[0]:
                best = (dev_uas, epoch, {k: v.detach().clone() for k, v in obf.state_dict().items()})
        if not dev:
            best = (float("nan"), config.epochs, {k: v.detach().clone() for k, v in obf.state_dict().items()})
        obf.load_state_dict(best[2])
        obf.eval()
        after = parser.checksum()
        if after != before:
            raise ContractError("parser parameters changed during obfuscator training")
        summary = {
            "summary": True,
            "best_epoch": best[1],
            "best_dev_uas": best[0],
            "parser_checksum": before,
            "parser_checksum_after": after,
            "config": config.to_dict(),
            "optimizer": {"name": "adam", "lr": config.lr, "clip": config.clip},
        }
        emit(summary)
    finally:
        if out:
            out.close()
    return obf, {"epochs": records, **summary}
