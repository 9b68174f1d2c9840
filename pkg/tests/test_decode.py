import itertools

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from synobf.corpus import is_tree
from synobf.decode import decode_heads, greedy_heads, mst_heads
from synobf.parser import ParseScores, decode_tree


def tree_score(scores, heads):
    return sum(scores[i, h] for i, h in enumerate(heads))


def brute_force_best(scores):
    n = scores.shape[0]
    best, best_heads = -np.inf, None
    for heads in itertools.product(range(n + 1), repeat=n):
        if is_tree(heads):
            s = tree_score(scores, heads)
            if s > best:
                best, best_heads = s, list(heads)
    return best, best_heads


def networkx_single_root_best(scores):
    """Best single-rooted tree: try each root child, solve the rest as an arborescence."""
    n = scores.shape[0]
    best = -np.inf
    for r in range(1, n + 1):
        g = nx.DiGraph()
        g.add_nodes_from(range(n + 1))
        g.add_edge(0, r, weight=scores[r - 1, 0])
        for d in range(1, n + 1):
            for h in range(1, n + 1):
                if h != d and d != r:
                    g.add_edge(h, d, weight=scores[d - 1, h])
        arb = nx.maximum_spanning_arborescence(g, attr="weight", preserve_attrs=True)
        best = max(best, sum(w for _, _, w in arb.edges(data="weight")))
    return best


def test_forced_tree_is_returned():
    s = np.full((4, 5), -10.0)
    s[0, 0] = 5
    s[1:, 1] = 5
    for method in ("greedy", "mst"):
        assert decode_heads(s, method) == [0, 1, 1, 1]


def test_two_cycle_is_repaired():
    s = np.full((3, 4), -5.0)
    s[0, 0] = 2
    s[1, 3] = 4  # 2 -> 3
    s[2, 2] = 4  # 3 -> 2
    heads = greedy_heads(s)
    assert is_tree(heads)
    assert heads[0] == 0


def test_unknown_method():
    with pytest.raises(ValueError):
        decode_heads(np.zeros((2, 3)), "cky")


def test_random_matrices_always_give_trees():
    rng = np.random.default_rng(0)
    for trial in range(1000):
        n = int(rng.integers(1, 12))
        s = rng.normal(size=(n, n + 1)) * rng.choice([0.1, 1, 10])
        for method in ("greedy", "mst"):
            assert is_tree(decode_heads(s, method)), (trial, method)


def test_mst_matches_brute_force_on_small_instances():
    rng = np.random.default_rng(1)
    for _ in range(150):
        n = int(rng.integers(1, 6))
        s = rng.normal(size=(n, n + 1))
        best, _ = brute_force_best(s)
        assert tree_score(s, mst_heads(s)) == pytest.approx(best, abs=1e-9)


def test_mst_matches_networkx_oracle():
    rng = np.random.default_rng(2)
    for _ in range(60):
        n = int(rng.integers(2, 10))
        s = rng.normal(size=(n, n + 1))
        assert tree_score(s, mst_heads(s)) == pytest.approx(networkx_single_root_best(s), abs=1e-9)


@given(arrays(np.float64, st.tuples(st.integers(1, 7)).map(lambda t: (t[0], t[0] + 1)),
              elements=st.floats(-50, 50, allow_nan=False)))
@settings(max_examples=200, deadline=None)
def test_greedy_never_beats_mst(s):
    g, m = greedy_heads(s), mst_heads(s)
    assert is_tree(g) and is_tree(m)
    assert tree_score(s, g) <= tree_score(s, m) + 1e-9


def test_decode_tree_labels_follow_predicted_heads():
    arc = np.log(np.array([[0.9, 0.05, 0.05], [0.8, 0.1, 0.1]]))
    arc[1] = np.log([0.1, 0.8, 0.1])
    lab = np.zeros((2, 3, 2))
    lab[0, 0] = [5, 0]
    lab[1, 1] = [0, 5]
    tree = decode_tree(ParseScores(arc, lab, ("root", "dep")))
    assert list(tree.heads) == [0, 1]
    assert list(tree.deprels) == ["root", "dep"]


def test_parse_scores_shape_validation():
    with pytest.raises(ValueError):
        ParseScores(np.zeros((2, 2)), np.zeros((2, 3, 1)), ("x",))
