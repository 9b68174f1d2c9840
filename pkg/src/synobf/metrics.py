"""Parsing accuracy, attacker strength and frame-signature overlap."""

from __future__ import annotations

import json
import math
import xml.etree.ElementTree as ET
from collections import Counter
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Collection, Iterable, Mapping, Sequence

import numpy as np
from scipy import stats

from .corpus import ConstituencyTree, Sentence

# -- attachment scores ----------------------------------------------------------


def uas_las(predicted: Sequence[Sentence], gold: Sequence[Sentence], punct: Collection[str] = ()) -> tuple[float, float]:
    """Percent of tokens with the right head, and with the right head and label.

    Tokens whose gold tag is in ``punct`` are skipped. Everything counts by default.
    """
    if len(predicted) != len(gold):
        raise ValueError(f"{len(predicted)} predicted sentences for {len(gold)} gold sentences")
    total = head_ok = both_ok = 0
    for k, (p, g) in enumerate(zip(predicted, gold)):
        if len(p) != len(g):
            raise ValueError(f"sentence {k}: predicted length {len(p)} != gold length {len(g)}")
        for pt, gt in zip(p, g):
            if gt.tag in punct:
                continue
            total += 1
            if pt.head == gt.head:
                head_ok += 1
                both_ok += pt.deprel == gt.deprel
    if total == 0:
        return float("nan"), float("nan")
    return 100.0 * head_ok / total, 100.0 * both_ok / total


# -- PARSEVAL -----------------------------------------------------------------------


@dataclass(frozen=True)
class ParsevalScores:
    precision: float
    recall: float
    f1: float
    matched: int
    predicted: int
    gold: int


def parseval(
    predicted: Sequence[ConstituencyTree], gold: Sequence[ConstituencyTree], include_preterminals: bool = False
) -> ParsevalScores:
    """Micro-averaged labeled-span precision, recall and F1 over a corpus."""
    if len(predicted) != len(gold):
        raise ValueError(f"{len(predicted)} predicted trees for {len(gold)} gold trees")
    matched = n_pred = n_gold = 0
    for k, (p, g) in enumerate(zip(predicted, gold)):
        if len(p.leaves()) != len(g.leaves()):
            raise ValueError(f"tree {k}: {len(p.leaves())} predicted leaves, {len(g.leaves())} gold leaves")
        ps, gs = p.spans(include_preterminals), g.spans(include_preterminals)
        matched += sum((ps & gs).values())
        n_pred += sum(ps.values())
        n_gold += sum(gs.values())
    precision = 100.0 * matched / n_pred if n_pred else 0.0
    recall = 100.0 * matched / n_gold if n_gold else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return ParsevalScores(precision, recall, f1, matched, n_pred, n_gold)


def parseval_f1(predicted: Sequence[ConstituencyTree], gold: Sequence[ConstituencyTree], include_preterminals: bool = False) -> float:
    return parseval(predicted, gold, include_preterminals).f1


# -- attacker strength ---------------------------------------------------------------

RANK_BUCKETS = (("1", 1), ("2-5", 5), ("6-10", 10), ("11-100", 100), (">100", None))


def _bucket(rank: int) -> str:
    for name, hi in RANK_BUCKETS:
        if hi is None or rank <= hi:
            return name
    raise AssertionError(rank)


def rank_of(words: Sequence[str], q: np.ndarray, true_word: str) -> int | None:
    """``1 + #{candidates with q strictly above the true word}``; None if the word is absent."""
    try:
        k = list(words).index(true_word)
    except ValueError:
        return None
    q = np.asarray(q)
    return 1 + int(np.count_nonzero(q > q[k]))


@dataclass(frozen=True)
class PrivacyReport:
    mrr: float
    attacker_error: float
    n_positions: int
    ranks: tuple[int, ...]
    per_rank_histogram: dict[str, int]
    missing: int = 0  # true words outside the attacker's support, scored at worst rank

    @classmethod
    def from_ranks(cls, ranks: Sequence[int], missing: int = 0) -> "PrivacyReport":
        if not ranks:
            raise ValueError("MRR needs at least one attacked position")
        ranks = tuple(int(r) for r in ranks)
        if min(ranks) < 1:
            raise ValueError("ranks start at 1")
        value = 100.0 * sum(1.0 / r for r in ranks) / len(ranks)
        hist = Counter(_bucket(r) for r in ranks)
        return cls(value, 100.0 - value, len(ranks), ranks, {b: hist.get(b, 0) for b, _ in RANK_BUCKETS}, missing)

    def to_record(self) -> dict:
        d = asdict(self)
        d["ranks"] = list(self.ranks)
        return d


def mrr(predictions: Sequence, truths: Sequence[str]) -> PrivacyReport:
    """Score attacker predictions (objects with ``words`` and ``q``) against the true words."""
    if len(predictions) != len(truths):
        raise ValueError(f"{len(predictions)} predictions for {len(truths)} true words")
    ranks, missing = [], 0
    for pred, word in zip(predictions, truths):
        r = pred.rank_of(word) if hasattr(pred, "rank_of") else rank_of(pred.words, pred.q, word)
        if r is None:
            missing += 1
            r = len(pred.words)
        ranks.append(r)
    return PrivacyReport.from_ranks(ranks, missing)


def accuracy_privacy_ratio(parser_accuracy: float, mrr_value: float) -> float:
    """Parser accuracy per unit of MRR; ``inf`` flags an attacker that never ranks a true word."""
    if mrr_value < 0:
        raise ValueError("MRR cannot be negative")
    if mrr_value == 0:
        return math.inf
    return parser_accuracy / mrr_value


# -- frame signatures --------------------------------------------------------------


@dataclass(frozen=True)
class FrameLexicon:
    signatures: dict[str, frozenset[str]]

    def __post_init__(self):
        for lemma, sig in self.signatures.items():
            if not sig:
                raise ValueError(f"empty frame signature for {lemma!r}")

    def __contains__(self, lemma: str) -> bool:
        return lemma in self.signatures

    def __getitem__(self, lemma: str) -> frozenset[str]:
        return self.signatures[lemma]

    def __len__(self) -> int:
        return len(self.signatures)

    @classmethod
    def from_lines(cls, lines: Iterable[str], source: str = "<lexicon>") -> "FrameLexicon":
        sigs: dict[str, frozenset[str]] = {}
        for lineno, line in enumerate(lines, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"{source}:{lineno}: expected 'lemma sig1,sig2,...'")
            sigs[parts[0]] = frozenset(s for s in parts[1].split(",") if s)
        return cls(sigs)

    def to_lines(self) -> list[str]:
        return [f"{lemma} {','.join(sorted(sig))}" for lemma, sig in sorted(self.signatures.items())]


def load_frame_lexicon(path: str | Path) -> FrameLexicon:
    with open(path, encoding="utf-8") as f:
        return FrameLexicon.from_lines(f, str(path))


def toy_frame_lexicon() -> FrameLexicon:
    text = resources.files("synobf").joinpath("data/toy_frames.txt").read_text(encoding="utf-8")
    return FrameLexicon.from_lines(text.splitlines(), "toy_frames.txt")


def load_propbank_frames(frames_dir: str | Path) -> FrameLexicon:
    """Build signatures from a directory of Propbank frame XML files.

    Each roleset contributes the concatenation of its numbered roles
    (``ARG0 ARG1`` gives ``"01"``); modifier roles are ignored.
    """
    sigs: dict[str, set[str]] = {}
    for path in sorted(Path(frames_dir).glob("*.xml")):
        root = ET.parse(path).getroot()
        for pred in root.iter("predicate"):
            lemma = pred.get("lemma", path.stem).replace("_", " ")
            for roleset in pred.iter("roleset"):
                nums = sorted({r.get("n", "") for r in roleset.iter("role") if r.get("n", "").isdigit()})
                if nums:
                    sigs.setdefault(lemma, set()).add("".join(nums))
    return FrameLexicon({k: frozenset(v) for k, v in sigs.items() if v})


@dataclass(frozen=True)
class FrameOverlap:
    mean: float
    overlaps: tuple[int, ...]
    skipped: tuple[tuple[str, str], ...] = field(default=())

    @property
    def empty(self) -> bool:
        return not self.overlaps


def signature_overlap(a: Collection[str], b: Collection[str]) -> int:
    return len(set(a) & set(b))


def frame_overlap(original: Sequence[str], substituted: Sequence[str], lexicon: FrameLexicon) -> FrameOverlap:
    """Mean ``|sig(v) & sig(w)|`` over aligned verb pairs found in the lexicon."""
    if len(original) != len(substituted):
        raise ValueError(f"{len(original)} original verbs for {len(substituted)} substituted verbs")
    overlaps, skipped = [], []
    for v, w in zip(original, substituted):
        if v in lexicon and w in lexicon:
            overlaps.append(signature_overlap(lexicon[v], lexicon[w]))
        else:
            skipped.append((v, w))
    mean = float(np.mean(overlaps)) if overlaps else float("nan")
    return FrameOverlap(mean, tuple(overlaps), tuple(skipped))


def one_sided_ttest(a: Sequence[float], b: Sequence[float]) -> tuple[float, float]:
    """Welch t statistic and p-value for the alternative ``mean(a) > mean(b)``."""
    res = stats.ttest_ind(np.asarray(a, float), np.asarray(b, float), equal_var=False, alternative="greater")
    return float(res.statistic), float(res.pvalue)


# -- result tables -----------------------------------------------------------------


@dataclass
class AttackerScore:
    prv: float
    mrr: float
    ratio: float


@dataclass
class ResultRow:
    label: str
    accuracy: float
    metric: str = "UAS"
    las: float | None = None
    attackers: dict[str, AttackerScore] = field(default_factory=dict)

    def __post_init__(self):
        self.attackers = {k: v if isinstance(v, AttackerScore) else AttackerScore(**v) for k, v in self.attackers.items()}

    @classmethod
    def build(cls, label: str, accuracy: float, reports: Mapping[str, PrivacyReport], metric: str = "UAS", las: float | None = None) -> "ResultRow":
        scores = {
            name: AttackerScore(r.attacker_error, r.mrr, accuracy_privacy_ratio(accuracy, r.mrr)) for name, r in reports.items()
        }
        return cls(label, accuracy, metric, las, scores)

    def to_record(self) -> dict:
        rec = asdict(self)
        for s in rec["attackers"].values():
            if math.isinf(s["ratio"]):
                s["ratio"] = "inf"
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> "ResultRow":
        rec = json.loads(json.dumps(rec))
        for s in rec.get("attackers", {}).values():
            if s["ratio"] == "inf":
                s["ratio"] = math.inf
        return cls(**rec)


def _fmt(value: float | None, digits: int = 1) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "-"
    if math.isinf(value):
        return "inf"
    return f"{value:.{digits}f}"


def render_table(rows: Sequence[ResultRow]) -> str:
    """Aligned plain-text table: one row per obfuscation setting, prv/ratio per attacker."""
    if not rows:
        return ""
    metric = rows[0].metric
    attackers: list[str] = []
    for r in rows:
        attackers += [a for a in r.attackers if a not in attackers]
    header = ["Obf. terms", metric, "LAS"]
    for a in attackers:
        header += [f"{a} prv", f"{a} ratio"]
    body = []
    for r in rows:
        line = [r.label, _fmt(r.accuracy), _fmt(r.las)]
        for a in attackers:
            s = r.attackers.get(a)
            line += [_fmt(s.prv), _fmt(s.ratio, 2)] if s else ["-", "-"]
        body.append(line)
    widths = [max(len(x[k]) for x in [header, *body]) for k in range(len(header))]

    def fmt(cells):
        return "  ".join(c.ljust(w) if k == 0 else c.rjust(w) for k, (c, w) in enumerate(zip(cells, widths))).rstrip()

    rule = "-" * len(fmt(header))
    return "\n".join([fmt(header), rule, *(fmt(b) for b in body)]) + "\n"


def write_records(rows: Sequence[ResultRow], path: str | Path, meta: dict | None = None) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as f:
        if meta is not None:
            f.write(json.dumps({"meta": meta}, sort_keys=True) + "\n")
        for r in rows:
            # keep insertion order: attacker columns render in the order they were added
            f.write(json.dumps(r.to_record()) + "\n")
    return path


def read_records(path: str | Path) -> tuple[list[ResultRow], dict | None]:
    rows, meta = [], None
    with open(path, encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            rec = json.loads(line)
            if "meta" in rec and len(rec) == 1:
                meta = rec["meta"]
            else:
                rows.append(ResultRow.from_record(rec))
    return rows, meta
