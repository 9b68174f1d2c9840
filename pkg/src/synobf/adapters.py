"""Subprocess adapters for parsers and masked-word predictors that live outside this package."""

from __future__ import annotations

import shlex
import subprocess
from typing import Sequence

from .corpus import ConstituencyTree, CorpusError, Sentence, format_conllu, parse_bracketed, parse_conllu

DEFAULT_TIMEOUT = 120.0


class AdapterError(RuntimeError):
    def __init__(self, message: str, excerpt: str = "", position: int | None = None):
        self.excerpt = excerpt[:500]
        self.position = position
        detail = f" (response starts: {self.excerpt!r})" if excerpt else ""
        super().__init__(message + detail)


def _command(cmd: str | Sequence[str]) -> list[str]:
    return shlex.split(cmd) if isinstance(cmd, str) else list(cmd)


def run_command(cmd: str | Sequence[str], text: str, timeout: float, position: int | None = None) -> str:
    """Feed ``text`` on stdin and return stdout; any failure becomes an AdapterError."""
    argv = _command(cmd)
    try:
        proc = subprocess.run(argv, input=text, capture_output=True, text=True, timeout=timeout, encoding="utf-8")
    except subprocess.TimeoutExpired as exc:
        where = f" at position {position}" if position is not None else ""
        raise AdapterError(f"{argv[0]} timed out after {timeout:g}s{where}", position=position) from exc
    except OSError as exc:
        raise AdapterError(f"cannot run {argv[0]}: {exc}", position=position) from exc
    if proc.returncode != 0:
        raise AdapterError(f"{argv[0]} exited with status {proc.returncode}", proc.stderr or proc.stdout, position)
    return proc.stdout


class ExternalParserAdapter:
    """Runs a parser command once per batch.

    Dependency mode sends CoNLL-U and expects CoNLL-U with heads and deprels
    back. Constituency mode sends one space-separated sentence per line and
    expects one bracketed tree per line.
    """

    def __init__(self, command: str | Sequence[str], mode: str = "dependency", timeout: float = DEFAULT_TIMEOUT, tag_column: int = 5):
        if mode not in ("dependency", "constituency"):
            raise ValueError(f"unknown adapter mode {mode!r}")
        self.command = command
        self.mode = mode
        self.timeout = timeout
        self.tag_column = tag_column

    def parse(self, sentences: Sequence[Sentence]) -> list:
        if not sentences:
            return []
        if self.mode == "dependency":
            return self._dependency(sentences)
        return self._constituency(sentences)

    def _dependency(self, sentences: Sequence[Sentence]) -> list[Sentence]:
        raw = run_command(self.command, format_conllu(sentences, self.tag_column), self.timeout)
        try:
            parsed = parse_conllu(raw.splitlines(), tag_column=self.tag_column, source="adapter output")
        except CorpusError as exc:
            raise AdapterError(f"malformed CoNLL-U from parser: {exc}", raw) from exc
        if len(parsed) != len(sentences):
            raise AdapterError(f"parser returned {len(parsed)} sentences for {len(sentences)}", raw)
        out = []
        for k, (src, res) in enumerate(zip(sentences, parsed)):
            if res.forms != src.forms:
                raise AdapterError(f"sentence {k}: parser changed the tokens", raw)
            if not res.has_tree:
                raise AdapterError(f"sentence {k}: parser output has no heads", raw)
            out.append(src.with_tree(res.heads, res.deprels))
        return out

    def _constituency(self, sentences: Sequence[Sentence]) -> list[ConstituencyTree]:
        raw = run_command(self.command, "".join(" ".join(s.forms) + "\n" for s in sentences), self.timeout)
        lines = [ln for ln in raw.splitlines() if ln.strip()]
        if len(lines) != len(sentences):
            raise AdapterError(f"parser returned {len(lines)} trees for {len(sentences)} sentences", raw)
        out = []
        for k, (src, line) in enumerate(zip(sentences, lines)):
            try:
                trees = parse_bracketed(line)
            except CorpusError as exc:
                raise AdapterError(f"sentence {k}: malformed tree: {exc}", line) from exc
            if len(trees) != 1 or len(trees[0].leaves()) != len(src):
                raise AdapterError(f"sentence {k}: tree does not cover the {len(src)} input tokens", line)
            out.append(trees[0])
        return out


def external_parse(adapter: ExternalParserAdapter, sentences: Sequence[Sentence]) -> list:
    return adapter.parse(sentences)
