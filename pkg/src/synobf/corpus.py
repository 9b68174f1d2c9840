"""Corpus structures and readers/writers for CoNLL-U and bracketed trees."""

from __future__ import annotations

import hashlib
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, NamedTuple, Sequence

logger = logging.getLogger(__name__)

_FORBIDDEN_IN_FORM = re.compile(r"\s")


class CorpusError(ValueError):
    pass


class ConlluParseError(CorpusError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class StructureError(CorpusError):
    def __init__(self, message: str, sentence_id: str | None = None):
        self.sentence_id = sentence_id
        super().__init__(f"sentence {sentence_id!r}: {message}" if sentence_id is not None else message)


class BracketParseError(CorpusError):
    def __init__(self, message: str, offset: int):
        self.offset = offset
        super().__init__(f"offset {offset}: {message}")


class DepTree(NamedTuple):
    heads: tuple[int, ...]
    deprels: tuple[str, ...]


def tree_problems(heads: Sequence[int]) -> str | None:
    """Return a description of why ``heads`` is not a single-rooted tree, or None."""
    n = len(heads)
    roots = [i for i, h in enumerate(heads, start=1) if h == 0]
    if len(roots) != 1:
        return f"expected exactly one root, found {len(roots)}"
    for i, h in enumerate(heads, start=1):
        if not 0 <= h <= n:
            return f"head {h} of token {i} out of range [0, {n}]"
        if h == i:
            return f"token {i} is its own head"
    # every token must reach the root; a walk longer than n means a cycle
    for start in range(1, n + 1):
        node, steps = start, 0
        while node != 0:
            node = heads[node - 1]
            steps += 1
            if steps > n:
                return f"cycle through token {start}"
    return None


def is_tree(heads: Sequence[int]) -> bool:
    return tree_problems(heads) is None


@dataclass(frozen=True)
class Token:
    form: str
    tag: str
    head: int | None = None
    deprel: str | None = None

    def __post_init__(self):
        if not self.form or _FORBIDDEN_IN_FORM.search(self.form):
            raise StructureError(f"invalid token form {self.form!r}")
        if not self.tag or _FORBIDDEN_IN_FORM.search(self.tag):
            raise StructureError(f"invalid tag {self.tag!r} for form {self.form!r}")


@dataclass(frozen=True)
class Sentence:
    tokens: tuple[Token, ...]
    id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if not self.tokens:
            raise StructureError("empty sentence", self.id)
        with_heads = [t.head is not None for t in self.tokens]
        if any(with_heads):
            if not all(with_heads):
                raise StructureError("some tokens carry heads and some do not", self.id)
            problem = tree_problems(self.heads)
            if problem is not None:
                raise StructureError(problem, self.id)

    @classmethod
    def from_lists(
        cls,
        forms: Sequence[str],
        tags: Sequence[str],
        heads: Sequence[int] | None = None,
        deprels: Sequence[str | None] | None = None,
        id: str = "",
    ) -> "Sentence":
        if len(forms) != len(tags):
            raise StructureError("forms and tags differ in length", id)
        n = len(forms)
        heads = list(heads) if heads is not None else [None] * n
        deprels = list(deprels) if deprels is not None else [None] * n
        return cls(
            tuple(Token(f, t, h, d) for f, t, h, d in zip(forms, tags, heads, deprels)),
            id=id,
        )

    def __len__(self) -> int:
        return len(self.tokens)

    def __iter__(self) -> Iterator[Token]:
        return iter(self.tokens)

    def __getitem__(self, i: int) -> Token:
        return self.tokens[i]

    @property
    def forms(self) -> tuple[str, ...]:
        return tuple(t.form for t in self.tokens)

    @property
    def tags(self) -> tuple[str, ...]:
        return tuple(t.tag for t in self.tokens)

    @property
    def heads(self) -> tuple[int | None, ...]:
        return tuple(t.head for t in self.tokens)

    @property
    def deprels(self) -> tuple[str | None, ...]:
        return tuple(t.deprel for t in self.tokens)

    @property
    def has_tree(self) -> bool:
        return self.tokens[0].head is not None

    @property
    def tree(self) -> DepTree:
        if not self.has_tree:
            raise StructureError("sentence has no dependency annotation", self.id)
        return DepTree(tuple(self.heads), tuple(d or "_" for d in self.deprels))  # type: ignore[arg-type]

    def with_forms(self, forms: Sequence[str]) -> "Sentence":
        if len(forms) != len(self):
            raise StructureError("replacement forms differ in length", self.id)
        return Sentence(
            tuple(Token(f, t.tag, t.head, t.deprel) for f, t in zip(forms, self.tokens)),
            id=self.id,
        )

    def with_tree(self, heads: Sequence[int] | None, deprels: Sequence[str | None] | None = None) -> "Sentence":
        n = len(self)
        heads = list(heads) if heads is not None else [None] * n
        deprels = list(deprels) if deprels is not None else [None] * n
        return Sentence(
            tuple(Token(t.form, t.tag, h, d) for t, h, d in zip(self.tokens, heads, deprels)),
            id=self.id,
        )

    def without_tree(self) -> "Sentence":
        return self.with_tree(None)


# ---------------------------------------------------------------------------
# CoNLL-U


def _field(value: str) -> str | None:
    return None if value == "_" else value


def parse_conllu(lines: Iterable[str], tag_column: int = 5, source: str = "<string>") -> list[Sentence]:
    """Parse CoNLL-U text given as an iterable of lines."""
    if tag_column not in (4, 5):
        raise ValueError("tag_column must be 4 (UPOS) or 5 (XPOS)")
    sentences: list[Sentence] = []
    rows: list[tuple[int, list[str]]] = []
    sent_id: str | None = None

    def flush():
        nonlocal rows, sent_id
        if not rows:
            sent_id = None
            return
        sid = sent_id if sent_id is not None else str(len(sentences) + 1)
        tokens = []
        for lineno, cols in rows:
            form, tag = cols[1], cols[tag_column - 1]
            if tag == "_":
                raise ConlluParseError(f"missing tag in column {tag_column}", lineno)
            head = _field(cols[6])
            try:
                head_i = int(head) if head is not None else None
            except ValueError:
                raise ConlluParseError(f"non-integer head {head!r}", lineno) from None
            try:
                tokens.append(Token(form, tag, head_i, _field(cols[7])))
            except StructureError as err:
                raise ConlluParseError(str(err), lineno) from None
        sentences.append(Sentence(tuple(tokens), id=sid))
        rows = []
        sent_id = None

    lineno = 0
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip():
            flush()
            continue
        if line.startswith("#"):
            m = re.match(r"#\s*sent_id\s*=\s*(.*\S)", line)
            if m:
                sent_id = m.group(1)
            continue
        cols = line.split("\t")
        if len(cols) != 10:
            raise ConlluParseError(f"expected 10 tab-separated columns, found {len(cols)}", lineno)
        if "-" in cols[0] or "." in cols[0]:
            logger.warning("%s:%d: skipping multiword/empty node %s", source, lineno, cols[0])
            continue
        try:
            idx = int(cols[0])
        except ValueError:
            raise ConlluParseError(f"invalid token id {cols[0]!r}", lineno) from None
        if idx != len(rows) + 1:
            raise ConlluParseError(f"token id {idx} out of sequence", lineno)
        rows.append((lineno, cols))
    flush()
    return sentences


def read_conllu(path: str | Path, tag_column: int = 5) -> list[Sentence]:
    with open(path, encoding="utf-8") as f:
        return parse_conllu(f, tag_column=tag_column, source=str(path))


def format_conllu(sentences: Iterable[Sentence], tag_column: int = 5) -> str:
    out: list[str] = []
    for sent in sentences:
        if sent.id:
            out.append(f"# sent_id = {sent.id}")
        for i, tok in enumerate(sent, start=1):
            upos = tok.tag if tag_column == 4 else "_"
            xpos = tok.tag if tag_column == 5 else "_"
            head = "_" if tok.head is None else str(tok.head)
            deprel = tok.deprel if tok.deprel is not None else "_"
            out.append("\t".join([str(i), tok.form, "_", upos, xpos, "_", head, deprel, "_", "_"]))
        out.append("")
    return "\n".join(out) + ("\n" if out else "")


def write_conllu(sentences: Iterable[Sentence], path: str | Path, tag_column: int = 5) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(format_conllu(sentences, tag_column=tag_column))


# ---------------------------------------------------------------------------
# Vocabulary and POS spectrum


@dataclass(frozen=True)
class TagVocabulary:
    """Word types overall (``full``) and per tag (``per_tag``), with counts.

    ``per_tag`` values are sorted tuples so candidate orderings are stable.
    """

    full: frozenset[str]
    per_tag: Mapping[str, tuple[str, ...]]
    counts: Mapping[tuple[str, str], int]

    def candidates(self, tag: str, exclude: str | None = None) -> tuple[str, ...]:
        return tuple(w for w in self.per_tag.get(tag, ()) if w != exclude)

    @property
    def tags(self) -> tuple[str, ...]:
        return tuple(sorted(self.per_tag))

    def word_counts(self) -> Counter:
        total: Counter = Counter()
        for (_, word), c in self.counts.items():
            total[word] += c
        return total

    def digest(self) -> str:
        h = hashlib.sha256()
        for (tag, word), c in sorted(self.counts.items()):
            h.update(f"{tag}\t{word}\t{c}\n".encode())
        return h.hexdigest()

    def to_records(self) -> list[tuple[str, str, int]]:
        return [(t, w, c) for (t, w), c in sorted(self.counts.items())]

    @classmethod
    def from_records(cls, records: Iterable[Sequence]) -> "TagVocabulary":
        counts = {(str(t), str(w)): int(c) for t, w, c in records}
        return cls._from_counts(counts)

    @classmethod
    def _from_counts(cls, counts: Mapping[tuple[str, str], int]) -> "TagVocabulary":
        per_tag: dict[str, set[str]] = {}
        for tag, word in counts:
            per_tag.setdefault(tag, set()).add(word)
        return cls(
            full=frozenset(w for _, w in counts),
            per_tag={t: tuple(sorted(ws)) for t, ws in sorted(per_tag.items())},
            counts=dict(counts),
        )


def build_vocabulary(train: Iterable[Sentence]) -> TagVocabulary:
    counts: Counter = Counter()
    for sent in train:
        for tok in sent:
            counts[(tok.tag, tok.form)] += 1
    return TagVocabulary._from_counts(counts)


@dataclass(frozen=True)
class TagSpectrum:
    levels: tuple[frozenset[str], ...]
    names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        seen: set[str] = set()
        for level in self.levels:
            if seen & level:
                raise ValueError(f"spectrum levels overlap on {sorted(seen & level)}")
            seen |= level

    def cumulative(self, level: int) -> frozenset[str]:
        if not 1 <= level <= len(self.levels):
            raise ValueError(f"spectrum level must be in [1, {len(self.levels)}], got {level}")
        return frozenset().union(*self.levels[:level])


DEFAULT_SPECTRUM = TagSpectrum(
    levels=(
        frozenset({"NNP", "NNPS"}),
        frozenset({"NN", "NNS"}),
        frozenset({"JJ", "JJR", "JJS"}),
        frozenset({"VB", "VBN", "VBD", "VBZ", "VBP", "VBG"}),
        frozenset({"RB", "RBR", "RBS"}),
    ),
    names=("Named ent.", "+Nouns", "+Adjectives", "+Verbs", "+Adverbs"),
)


def spectrum_set(level: int, spectrum: TagSpectrum = DEFAULT_SPECTRUM) -> frozenset[str]:
    """Tags obfuscated at experiment ``level``: the union of the first ``level`` rows."""
    if isinstance(level, bool) or not isinstance(level, int):
        raise ValueError(f"spectrum level must be an integer, got {level!r}")
    return spectrum.cumulative(level)


# ---------------------------------------------------------------------------
# Bracketed constituency trees


@dataclass(frozen=True)
class ConstituencyTree:
    """A phrase-structure node. Preterminals hold a single leaf index as their child."""

    label: str
    children: tuple["ConstituencyTree | int", ...]
    word: str | None = None

    @property
    def is_preterminal(self) -> bool:
        return len(self.children) == 1 and isinstance(self.children[0], int)

    def leaves(self) -> list[int]:
        out: list[int] = []
        for child in self.children:
            if isinstance(child, int):
                out.append(child)
            else:
                out.extend(child.leaves())
        return out

    def words(self) -> list[str]:
        out: list[str] = []
        for node in self.preorder():
            if node.is_preterminal:
                out.append(node.word or "")
        return out

    def preorder(self) -> Iterator["ConstituencyTree"]:
        yield self
        for child in self.children:
            if not isinstance(child, int):
                yield from child.preorder()

    def spans(self, include_preterminals: bool = False) -> Counter:
        """Multiset of labeled spans ``(label, start, end)`` with ``end`` exclusive."""
        result: Counter = Counter()

        def walk(node: ConstituencyTree) -> tuple[int, int]:
            if node.is_preterminal:
                leaf = node.children[0]
                if include_preterminals:
                    result[(node.label, leaf, leaf + 1)] += 1
                return leaf, leaf + 1
            bounds = [walk(c) if not isinstance(c, int) else (c, c + 1) for c in node.children]
            start, end = bounds[0][0], bounds[-1][1]
            result[(node.label, start, end)] += 1
            return start, end

        walk(self)
        return result

    def to_bracketed(self) -> str:
        if self.is_preterminal:
            return f"({self.label} {self.word if self.word is not None else self.children[0]})"
        return f"({self.label} " + " ".join(
            c.to_bracketed() if not isinstance(c, int) else str(c) for c in self.children
        ) + ")"


_BRACKET_TOKEN = re.compile(r"\(|\)|[^\s()]+")


def _parse_sexprs(text: str) -> list[ConstituencyTree]:
    trees: list[ConstituencyTree] = []
    tokens = [(m.group(), m.start()) for m in _BRACKET_TOKEN.finditer(text)]
    i = 0

    def node(i: int, counter: list[int]) -> tuple[ConstituencyTree | None, int]:
        # tokens[i] is "("
        open_offset = tokens[i][1]
        i += 1
        if i >= len(tokens):
            raise BracketParseError("unexpected end of input after '('", open_offset)
        label = ""
        if tokens[i][0] not in "()":
            label = tokens[i][0]
            i += 1
        children: list[ConstituencyTree | int] = []
        word: str | None = None
        while True:
            if i >= len(tokens):
                raise BracketParseError("unbalanced parentheses: missing ')'", open_offset)
            tok, off = tokens[i]
            if tok == ")":
                i += 1
                break
            if tok == "(":
                child, i = node(i, counter)
                if child is not None:
                    children.append(child)
            else:
                if children or word is not None:
                    raise BracketParseError(f"unexpected bare token {tok!r}", off)
                word = tok
                i += 1
        if word is not None:
            leaf = counter[0]
            counter[0] += 1
            return ConstituencyTree(label, (leaf,), word=word), i
        if not children:
            raise BracketParseError("empty constituent", open_offset)
        if not label and len(children) == 1:
            # PTB-style unlabeled wrapper "( (S ...) )"
            return children[0], i  # type: ignore[return-value]
        return ConstituencyTree(label, tuple(children)), i

    while i < len(tokens):
        tok, off = tokens[i]
        if tok != "(":
            raise BracketParseError(f"expected '(' but found {tok!r}", off)
        tree, i = node(i, [0])
        if tree is None:
            raise BracketParseError("empty tree", off)
        trees.append(tree)
    return trees


def parse_bracketed(text: str) -> list[ConstituencyTree]:
    trees = _parse_sexprs(text)
    for tree in trees:
        if tree.leaves() != list(range(len(tree.leaves()))):
            raise BracketParseError("leaves are not in left-to-right order", 0)
    return trees


def read_bracketed(path: str | Path) -> list[ConstituencyTree]:
    with open(path, encoding="utf-8") as f:
        return parse_bracketed(f.read())
