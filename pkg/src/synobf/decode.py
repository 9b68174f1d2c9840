"""Head selection over arc-score matrices.

Score matrices are ``(n, n + 1)``: row ``i`` holds the scores of every
candidate head (column 0 is the artificial root) for token ``i + 1``.
Both decoders return 1-based head lists that form a single-rooted tree.
"""

from __future__ import annotations

import numpy as np


def _ancestors_reach_root(heads: list[int]) -> list[bool]:
    n = len(heads)
    rooted = [False] * (n + 1)
    rooted[0] = True
    for start in range(1, n + 1):
        path, node = [], start
        while not rooted[node] and node not in path and len(path) <= n:
            path.append(node)
            node = heads[node - 1]
        if rooted[node]:
            for p in path:
                rooted[p] = True
    return rooted[1:]


def _find_cycle(heads: list[int], nodes: range) -> list[int] | None:
    n = len(heads)
    for start in nodes:
        seen: dict[int, int] = {}
        node, step = start, 0
        while node != 0 and node not in seen and step <= n:
            seen[node] = step
            node = heads[node - 1]
            step += 1
        if node != 0 and node in seen:
            cycle, cur = [node], heads[node - 1]
            while cur != node:
                cycle.append(cur)
                cur = heads[cur - 1]
            return cycle
    return None


def greedy_heads(scores: np.ndarray) -> list[int]:
    """Per-token argmax, then enforce one root and break cycles by cheapest reattachment."""
    scores = np.asarray(scores, dtype=np.float64)
    n = scores.shape[0]
    s = scores.copy()
    s[np.arange(n), np.arange(1, n + 1)] = -np.inf
    heads = [int(h) for h in s.argmax(axis=1)]

    roots = [i for i in range(1, n + 1) if heads[i - 1] == 0]
    if not roots:
        # promote the token that loses least by attaching to the root
        loss = [s[i - 1, heads[i - 1]] - s[i - 1, 0] for i in range(1, n + 1)]
        root = 1 + int(np.argmin(loss))
    else:
        root = max(roots, key=lambda i: s[i - 1, 0])
    no_root = s.copy()
    no_root[:, 0] = -np.inf
    for i in range(1, n + 1):
        if i == root:
            heads[i - 1] = 0
        elif heads[i - 1] == 0:
            heads[i - 1] = int(no_root[i - 1].argmax()) if n > 1 else 0

    while True:
        cycle = _find_cycle(heads, range(1, n + 1))
        if cycle is None:
            return heads
        rooted = _ancestors_reach_root(heads)
        best = None
        for dep in cycle:
            for head in range(1, n + 1):
                if head == dep or not rooted[head - 1]:
                    continue
                cost = s[dep - 1, heads[dep - 1]] - s[dep - 1, head]
                if best is None or cost < best[0]:
                    best = (cost, dep, head)
        assert best is not None, "the root token is always a valid reattachment point"
        _, dep, head = best
        heads[dep - 1] = head


def _chu_liu_edmonds(s: np.ndarray) -> np.ndarray:
    """Maximum arborescence rooted at node 0 over the square matrix ``s[dep, head]``."""
    size = s.shape[0]
    s = s.copy()
    np.fill_diagonal(s, -np.inf)
    s[0, :] = -np.inf
    heads = s.argmax(axis=1)
    heads[0] = -1

    # look for a cycle among the greedy choices
    cycle = None
    color = np.zeros(size, dtype=int)  # 0 unvisited, 1 on stack, 2 done
    for start in range(1, size):
        if color[start]:
            continue
        path, node = [], start
        while node > 0 and color[node] == 0:
            color[node] = 1
            path.append(node)
            node = heads[node]
        if node > 0 and color[node] == 1:
            cycle = path[path.index(node):]
        for p in path:
            color[p] = 2
        if cycle:
            break
    if cycle is None:
        return heads

    in_cycle = np.zeros(size, dtype=bool)
    in_cycle[cycle] = True
    rest = np.flatnonzero(~in_cycle)  # always contains 0 first
    cyc = np.asarray(cycle)
    cycle_score = s[cyc, heads[cyc]].sum()

    m = len(rest)
    sub = np.full((m + 1, m + 1), -np.inf)
    sub[:m, :m] = s[np.ix_(rest, rest)]
    # edges entering the cycle from u: break the arc into the chosen cycle node
    gain = s[np.ix_(cyc, rest)] - s[cyc, heads[cyc]][:, None]
    enter = gain.argmax(axis=0)
    sub[m, :m] = gain[enter, np.arange(m)] + cycle_score
    # edges leaving the cycle towards d
    leave_scores = s[np.ix_(rest, cyc)]
    leave = leave_scores.argmax(axis=1)
    sub[:m, m] = leave_scores[np.arange(m), leave]

    sub_heads = _chu_liu_edmonds(sub)

    new_heads = heads.copy()
    for k, dep in enumerate(rest):
        if k == 0:
            continue
        h = sub_heads[k]
        new_heads[dep] = cyc[leave[k]] if h == m else rest[h]
    h = sub_heads[m]
    entry = cyc[enter[h]]
    new_heads[entry] = rest[h]
    return new_heads


def _tree_score(s: np.ndarray, heads: np.ndarray) -> float:
    return float(sum(s[d, heads[d]] for d in range(1, len(heads))))


def mst_heads(scores: np.ndarray) -> list[int]:
    """Maximum spanning tree with exactly one token attached to the root."""
    scores = np.asarray(scores, dtype=np.float64)
    n = scores.shape[0]
    square = np.full((n + 1, n + 1), -np.inf)
    square[1:, :] = scores
    heads = _chu_liu_edmonds(square)
    root_children = np.flatnonzero(heads[1:] == 0) + 1
    if len(root_children) == 1:
        return [int(h) for h in heads[1:]]
    best, best_score = None, -np.inf
    for r in range(1, n + 1):
        constrained = square.copy()
        constrained[1:, 0] = -np.inf
        constrained[r, 0] = square[r, 0]
        cand = _chu_liu_edmonds(constrained)
        score = _tree_score(constrained, cand)
        if score > best_score:
            best, best_score = cand, score
    assert best is not None
    return [int(h) for h in best[1:]]


def decode_heads(scores: np.ndarray, method: str = "greedy") -> list[int]:
    if method == "greedy":
        return greedy_heads(scores)
    if method == "mst":
        return mst_heads(scores)
    raise ValueError(f"unknown decoder {method!r}")
