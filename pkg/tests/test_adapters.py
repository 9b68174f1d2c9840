import sys

import pytest

from conftest import sent
from synobf.adapters import AdapterError, ExternalParserAdapter, external_parse, run_command
from synobf.parser import parse_many

SENTENCES = [
    sent("the/DT dog/NN barks/VBZ"),
    sent("cats/NNS sleep/VBP"),
]


def adapter_script(tmp_path, body: str, name="adapter.py") -> str:
    path = tmp_path / name
    path.write_text("import sys\ntext = sys.stdin.read()\n" + body)
    return f"{sys.executable} {path}"


# every token attaches to the last one, which is the root
CHAIN = """
out = []
for line in text.splitlines():
    cols = line.split("\\t")
    if len(cols) == 10 and cols[0].isdigit():
        out.append(cols)
    elif not line.strip() and out:
        n = len(out)
        for c in out:
            c[6] = "0" if int(c[0]) == n else str(n)
            c[7] = "root" if int(c[0]) == n else "dep"
            print("\\t".join(c))
        print()
        out = []
"""


def test_dependency_round_trip(tmp_path):
    adapter = ExternalParserAdapter(adapter_script(tmp_path, CHAIN), timeout=30)
    parsed = external_parse(adapter, SENTENCES)
    assert [p.heads for p in parsed] == [(3, 3, 0), (2, 0)]
    assert parsed[0].forms == SENTENCES[0].forms
    assert parsed[0].deprels == ("dep", "dep", "root")
    assert adapter.parse([]) == []


def test_internal_parser_through_the_adapter(tmp_path, parser, splits):
    model = parser.save(tmp_path / "parser.pt")
    adapter = ExternalParserAdapter(f"{sys.executable} -m synobf parse --parser-model {model}", timeout=300)
    batch = [s.without_tree() for s in splits["test"][:15]]
    via_adapter = adapter.parse(batch)
    direct = parse_many(parser, batch)
    assert [s.heads for s in via_adapter] == [s.heads for s in direct]
    assert [s.deprels for s in via_adapter] == [s.deprels for s in direct]


def test_cyclic_output_is_an_adapter_error(tmp_path):
    body = CHAIN.replace('c[6] = "0" if int(c[0]) == n else str(n)', 'c[6] = str(n if int(c[0]) != n else 1)')
    adapter = ExternalParserAdapter(adapter_script(tmp_path, body), timeout=30)
    with pytest.raises(AdapterError):
        adapter.parse(SENTENCES)


def test_wrong_sentence_count(tmp_path):
    body = CHAIN + "\nprint('1\\tx\\t_\\tX\\tX\\t_\\t0\\troot\\t_\\t_\\n')\n"
    adapter = ExternalParserAdapter(adapter_script(tmp_path, body), timeout=30)
    with pytest.raises(AdapterError, match="3 sentences"):
        adapter.parse(SENTENCES)


def test_changed_tokens(tmp_path):
    body = "sys.stdout.write(text.replace('dog', 'cat'))\n"
    adapter = ExternalParserAdapter(adapter_script(tmp_path, body), timeout=30)
    with pytest.raises(AdapterError):
        adapter.parse([s.with_tree([2, 3, 0], ["det", "nsubj", "root"]) for s in SENTENCES[:1]])


def test_constituency_mode(tmp_path):
    body = """
for line in text.splitlines():
    words = line.split()
    print("(S " + " ".join(f"(X {w})" for w in words) + ")")
"""
    adapter = ExternalParserAdapter(adapter_script(tmp_path, body), mode="constituency", timeout=30)
    trees = adapter.parse(SENTENCES)
    assert [t.words() for t in trees] == [list(s.forms) for s in SENTENCES]
    assert trees[1].label == "S"


def test_constituency_leaf_mismatch(tmp_path):
    body = "for line in text.splitlines():\n    print('(S (X a))')\n"
    adapter = ExternalParserAdapter(adapter_script(tmp_path, body), mode="constituency", timeout=30)
    with pytest.raises(AdapterError):
        adapter.parse(SENTENCES)


def test_process_failures(tmp_path):
    with pytest.raises(AdapterError, match="status 4"):
        run_command(adapter_script(tmp_path, "sys.exit(4)\n"), "x", timeout=30)
    with pytest.raises(AdapterError, match="timed out"):
        run_command(adapter_script(tmp_path, "import time\ntime.sleep(10)\n"), "x", timeout=0.5)
    with pytest.raises(AdapterError, match="cannot run"):
        run_command("/nonexistent/parser", "x", timeout=30)
    with pytest.raises(ValueError):
        ExternalParserAdapter("cat", mode="semantic")
