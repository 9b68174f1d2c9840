import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import sent
from synobf.corpus import (
    DEFAULT_SPECTRUM,
    BracketParseError,
    ConlluParseError,
    Sentence,
    StructureError,
    TagSpectrum,
    TagVocabulary,
    build_vocabulary,
    format_conllu,
    is_tree,
    parse_bracketed,
    parse_conllu,
    read_conllu,
    spectrum_set,
    tree_problems,
    write_conllu,
)

CONLLU = """# sent_id = s1
1\tJohn\tJohn\tPROPN\tNNP\t_\t2\tnsubj\t_\t_
2\tphoned\tphone\tVERB\tVBD\t_\t0\troot\t_\t_
3\tthe\tthe\tDET\tDT\t_\t4\tdet\t_\t_
4\tterrorists\tterrorist\tNOUN\tNNS\t_\t2\tdobj\t_\t_

"""


def test_parse_conllu_reads_xpos_and_tree():
    [s] = parse_conllu(CONLLU.splitlines())
    assert s.id == "s1"
    assert s.forms == ("John", "phoned", "the", "terrorists")
    assert s.tags == ("NNP", "VBD", "DT", "NNS")
    assert s.heads == (2, 0, 4, 2)
    assert s.deprels == ("nsubj", "root", "det", "dobj")


def test_upos_column_option():
    [s] = parse_conllu(CONLLU.splitlines(), tag_column=4)
    assert s.tags == ("PROPN", "VERB", "DET", "NOUN")


def test_multiword_and_empty_nodes_are_skipped(caplog):
    text = CONLLU.replace("3\tthe", "3-4\tthe_terrorists\t_\t_\t_\t_\t_\t_\t_\t_\n3\tthe", 1)
    text = text.replace("4\tterrorists", "3.1\tghost\t_\t_\tNN\t_\t_\t_\t_\t_\n4\tterrorists", 1)
    [s] = parse_conllu(text.splitlines())
    assert "skipping" in caplog.text
    assert s.forms == ("John", "phoned", "the", "terrorists")


def test_malformed_line_reports_line_number():
    bad = CONLLU.replace("2\tphoned\tphone\tVERB\tVBD\t_\t0", "2\tphoned\tphone\tVERB")
    with pytest.raises(ConlluParseError) as err:
        parse_conllu(bad.splitlines())
    assert err.value.line == 3


def test_cyclic_tree_rejected():
    with pytest.raises(StructureError):
        sent("a/DT b/NN", heads=[2, 1], deprels=["x", "y"])


def test_tree_checks():
    assert is_tree([2, 0, 2])
    assert not is_tree([0, 0])
    assert not is_tree([2, 1])
    assert tree_problems([3, 0]) is not None


def test_missing_sent_id_defaults_to_position():
    [s] = parse_conllu(CONLLU.replace("# sent_id = s1\n", "").splitlines())
    assert s.id == "1"


def test_round_trip_file(tmp_path):
    sentences = parse_conllu(CONLLU.splitlines())
    write_conllu(sentences, tmp_path / "x.conllu")
    assert read_conllu(tmp_path / "x.conllu") == sentences


def test_sentence_helpers():
    s = sent("the/DT dog/NN", heads=[2, 0], deprels=["det", "root"])
    assert s.with_forms(["a", "cat"]).forms == ("a", "cat")
    assert s.with_forms(["a", "cat"]).heads == s.heads
    assert not s.without_tree().has_tree
    with pytest.raises(StructureError):
        Sentence(())


words = st.text(alphabet="abcdefgXYZ-'", min_size=1, max_size=6)
tags = st.sampled_from(["NN", "NNS", "VB", "DT", "JJ", "NNP"])


@st.composite
def sentences(draw):
    n = draw(st.integers(1, 8))
    forms = draw(st.lists(words, min_size=n, max_size=n))
    ts = draw(st.lists(tags, min_size=n, max_size=n))
    # attach every non-root token to a node placed before it in a random order
    root = draw(st.integers(1, n))
    order = [root] + [i for i in range(1, n + 1) if i != root]
    heads = [0] * n
    for k, node in enumerate(order[1:], start=1):
        heads[node - 1] = order[draw(st.integers(0, k - 1))]
    rels = draw(st.lists(st.sampled_from(["nsubj", "dobj", "det", "amod"]), min_size=n, max_size=n))
    return Sentence.from_lists(forms, ts, heads, rels, id=draw(st.sampled_from(["s7", "doc-2"])))


@given(st.lists(sentences(), min_size=1, max_size=4))
@settings(max_examples=60, deadline=None)
def test_conllu_round_trip_property(batch):
    assert parse_conllu(format_conllu(batch).splitlines()) == batch


@given(st.lists(sentences(), min_size=1, max_size=6))
@settings(max_examples=40, deadline=None)
def test_vocabulary_is_per_tag_and_round_trips(batch):
    vocab = build_vocabulary(batch)
    for s in batch:
        for tok in s:
            assert tok.form in vocab.per_tag[tok.tag]
            assert tok.form not in vocab.candidates(tok.tag, exclude=tok.form)
    again = TagVocabulary.from_records(vocab.to_records())
    assert again.per_tag == vocab.per_tag
    assert again.digest() == vocab.digest()


def test_candidates_for_unknown_tag_is_empty(vocab):
    assert vocab.candidates("XYZ") == ()


def test_spectrum_levels_are_cumulative():
    assert spectrum_set(1) == {"NNP", "NNPS"}
    for j in range(1, 5):
        assert spectrum_set(j) < spectrum_set(j + 1)
    assert {"RB", "RBR", "RBS"} <= spectrum_set(5)
    assert "DT" not in spectrum_set(5)
    assert DEFAULT_SPECTRUM.names[-1] == "+Adverbs"
    with pytest.raises(ValueError):
        spectrum_set(6)
    with pytest.raises(ValueError):
        spectrum_set(0)


def test_spectrum_rows_must_be_disjoint():
    with pytest.raises(ValueError):
        TagSpectrum(levels=(frozenset({"NN"}), frozenset({"NN", "JJ"})), names=("a", "b"))


def test_bracketed_ptb_wrapper_and_spans():
    [t] = parse_bracketed("( (S (NP (NNP John)) (VP (VBD phoned) (NP (DT the) (NNS terrorists)))) )")
    assert t.label == "S"
    assert t.words() == ["John", "phoned", "the", "terrorists"]
    assert t.spans() == {("S", 0, 4): 1, ("NP", 0, 1): 1, ("VP", 1, 4): 1, ("NP", 2, 4): 1}
    assert len(t.spans(include_preterminals=True)) == 8
    assert parse_bracketed(t.to_bracketed()) == [t]


@pytest.mark.parametrize("text", ["(S (NP John)", "(S (NP John)))", "S (NP John)", "(S (NP John) bare)"])
def test_bracketed_errors(text):
    with pytest.raises(BracketParseError):
        parse_bracketed(text)
