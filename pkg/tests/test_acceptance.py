"""One test per acceptance criterion; each prints a PASS/FAIL line (also summarized at the end of the run)."""

import math
import time

import numpy as np
import pytest
import torch

from conftest import TIMINGS, TINY_VOCAB_CORPUS, random_instance, record_criterion, sent, tiny_obfuscator, tiny_parser
from synobf.corpus import build_vocabulary, spectrum_set
from synobf.metrics import PrivacyReport, accuracy_privacy_ratio, frame_overlap, mrr, signature_overlap, toy_frame_lexicon
from synobf.obfuscator import CipherPolicy, RandomPolicy
from synobf.parser import loglik, parse_many, uas
from synobf.training import exact_objectives, gumbel_softmax, obfuscated_accuracy


def _policy_violations(policy, sentences, vocab, seeds) -> list[str]:
    problems = []
    for level in range(1, 6):
        targets = spectrum_set(level)
        for s, dists in zip(sentences, policy.distributions(sentences, targets)):
            for d, tok in zip(dists, s):
                if tok.tag not in targets:
                    ok = d.support == (tok.form,) and d.probs == (1.0,)
                elif d.unsubstitutable:
                    ok = d.support == ()
                else:
                    ok = tok.form not in d.support and min(d.probs) >= 0 and abs(sum(d.probs) - 1) <= 1e-9
                if not ok:
                    problems.append(f"{policy.name} level {level} {s.id}:{d.position} distribution")
        for seed in seeds:
            for r in policy.sample_many(sentences, targets, seed):
                o, y = r.original, r.obfuscated
                if len(y) != len(o) or y.tags != o.tags:
                    problems.append(f"{policy.name} seed {seed} {o.id}: length or tags changed")
                    continue
                for i, (a, b) in enumerate(zip(o, y)):
                    inside = a.tag in targets
                    substitutable = inside and i not in r.unsubstitutable
                    if not inside and b.form != a.form:
                        problems.append(f"{policy.name} seed {seed} {o.id}:{i} changed outside the target set")
                    if substitutable and (b.form == a.form or b.form not in vocab.per_tag[a.tag] or not r.mask[i]):
                        problems.append(f"{policy.name} seed {seed} {o.id}:{i} not substituted")
                    if r.mask[i] != (b.form != a.form):
                        problems.append(f"{policy.name} seed {seed} {o.id}:{i} mask disagrees")
    return problems


def test_criterion_1_obfuscator_invariants(splits, vocab, neural_level5):
    test = splits["test"]
    start = time.perf_counter()
    problems = []
    for policy in (RandomPolicy(vocab), CipherPolicy(vocab, seed=0), neural_level5[0]):
        problems += _policy_violations(policy, test, vocab, seeds=range(10))
    elapsed = time.perf_counter() - start
    passed = not problems and elapsed < 60
    record_criterion(1, "obfuscator invariants", passed, f"{len(problems)} violations over 3 policies x 5 levels x 10 seeds, {elapsed:.1f}s")
    assert not problems, problems[:10]
    assert elapsed < 60


def test_criterion_2_gumbel_max():
    start = time.perf_counter()
    target = np.array([0.5, 0.3, 0.2])
    logits = torch.tensor(np.log(target))
    draws = gumbel_softmax(logits.expand(100_000, 3), 1.0, np.random.default_rng(0))
    tv = 0.5 * float(np.abs(draws.discrete.sum(0).numpy() / 100_000 - target).sum())
    sharp = gumbel_softmax(logits.expand(10_000, 3), 0.01, np.random.default_rng(1))
    rate = float((sharp.relaxed.max(-1).values > 0.99).double().mean())
    elapsed = time.perf_counter() - start
    passed = tv < 0.01 and rate >= 0.99 and elapsed < 60
    record_criterion(
        2,
        "Gumbel-max exactness and sharpening",
        passed,
        f"TV {tv:.4f} (< 0.01 {'ok' if tv < 0.01 else 'FAIL'}); tau=0.01 share with max > 0.99: {rate:.4f} "
        f"(>= 0.99 {'ok' if rate >= 0.99 else 'FAIL'}; about 0.972 is the exact value for this categorical); {elapsed:.1f}s",
    )
    assert tv < 0.01
    assert rate >= 0.99, f"sharpening share {rate:.4f} below 0.99"


def test_criterion_3_gradient_check():
    start = time.perf_counter()
    model = tiny_parser()
    assert len(model.words) == 8 and model.encoder.word_embed.weight.shape[1] == 16
    gold = sent("ab/NN ac/VB dd/NN", heads=[2, 0, 2], deprels=["nsubj", "root", "dobj"])
    x = torch.tensor(np.random.default_rng(0).dirichlet(np.ones(8), size=3), dtype=torch.float64, requires_grad=True)
    (grad,) = torch.autograd.grad(loglik(model, x, gold.tags, gold.tree), x)
    eps = 1e-6
    fd = torch.zeros_like(x)
    with torch.no_grad():
        for i in range(3):
            for j in range(8):
                plus, minus = x.detach().clone(), x.detach().clone()
                plus[i, j] += eps
                minus[i, j] -= eps
                fd[i, j] = (loglik(model, plus, gold.tags, gold.tree, check=False) - loglik(model, minus, gold.tags, gold.tree, check=False)) / (2 * eps)
    rel = float(((grad - fd).abs() / torch.maximum(fd.abs(), torch.full_like(fd, 1e-3))).max())
    elapsed = time.perf_counter() - start
    passed = rel < 1e-4 and elapsed < 60
    record_criterion(3, "gradient vs central differences", passed, f"max relative error {rel:.2e}, {elapsed:.1f}s")
    assert passed


def test_criterion_4_jensen_oracle():
    start = time.perf_counter()
    parser = tiny_parser()
    rng = np.random.default_rng(0)
    targets = {"NN", "VB"}
    random_policy = RandomPolicy(build_vocabulary(TINY_VOCAB_CORPUS))
    worst = -math.inf
    for trial in range(100):
        s = random_instance(rng)
        policy = tiny_obfuscator(trial) if trial % 2 else random_policy
        L, L0 = exact_objectives(policy, parser, s, None, targets)
        worst = max(worst, L - L0)
    cipher = CipherPolicy(random_policy.vocab, seed=0)
    gap = max(abs(np.subtract(*exact_objectives(cipher, parser, random_instance(rng), None, targets))) for _ in range(20))
    elapsed = time.perf_counter() - start
    passed = worst <= 1e-9 and gap <= 1e-9 and elapsed < 300
    record_criterion(4, "Jensen bound by enumeration", passed, f"max L - L0 = {worst:.3e} over 100 instances; degenerate |L - L0| <= {gap:.1e}; {elapsed:.1f}s")
    assert passed


def test_criterion_5_mrr_oracle():
    start = time.perf_counter()

    class Pred:
        def __init__(self, words, q):
            self.words, self.q = words, q

    rng = np.random.default_rng(1)
    preds, truths, expected = [], [], []
    for _ in range(1000):
        m = int(rng.integers(1, 10))
        q = rng.integers(1, 6, size=m).astype(float)
        q /= q.sum()
        words = [f"w{j}" for j in range(m)]
        k = int(rng.integers(0, m))
        preds.append(Pred(words, q))
        truths.append(words[k])
        # oracle: position of the first entry tied with the true one in a full sort
        ordered = sorted(q.tolist(), reverse=True)
        expected.append(ordered.index(q[k]) + 1)
    report = mrr(preds, truths)
    same = list(report.ranks) == expected and report.mrr == 100 * sum(1 / r for r in expected) / len(expected)
    hand = PrivacyReport.from_ranks([1, 2, 4]).mrr
    elapsed = time.perf_counter() - start
    passed = same and abs(hand - 58.33) <= 0.01 and elapsed < 60
    record_criterion(5, "MRR oracle equivalence", passed, f"1000 ranks identical: {same}; ranks [1,2,4] -> {hand:.4f}; {elapsed:.1f}s")
    assert passed


def test_criterion_6_frozen_parser(parser, neural_level5):
    _, report, before = neural_level5
    after = parser.checksum()
    passed = before == after == report["parser_checksum_after"]
    record_criterion(6, "frozen parser checksum", passed, f"{before[:16]} before, {after[:16]} after")
    assert passed


def test_criterion_7_trend(parser, splits, vocab, neural_level5):
    start = time.perf_counter()
    test = splits["test"]
    base = uas(parse_many(parser, [s.without_tree() for s in test]), test)
    # random-policy UAS is an expectation over the sampler: estimate it on seeds 0..9
    seeds = range(10)
    random_policy = RandomPolicy(vocab)
    grid = np.array([[obfuscated_accuracy(random_policy, parser, test, spectrum_set(j), seed=s)[0] for j in range(1, 6)] for s in seeds])
    curve = grid.mean(0)
    neural = np.mean([obfuscated_accuracy(neural_level5[0], parser, test, spectrum_set(5), seed=s)[0] for s in seeds])
    total = TIMINGS.get("parser", 0) + TIMINGS.get("obfuscator", 0) + time.perf_counter() - start
    a = base >= 90
    b = neural - curve[-1] >= 2
    c = all(x >= y for x, y in zip([base, *curve], curve))
    rising = int(sum((np.diff(row) > 0).any() for row in grid))
    passed = a and b and c and total < 1800
    record_criterion(
        7,
        "desk-scale trends",
        passed,
        f"(a) UAS {base:.1f}; (b) level 5 neural {neural:.2f} vs random {curve[-1]:.2f}; "
        f"(c) random by level {' '.join(f'{x:.2f}' for x in curve)} (mean of {len(seeds)} seeds; "
        f"{rising} single seeds not monotone); {total:.0f}s",
    )
    assert a and b and c
    assert total < 1800


def test_criterion_8_attacker_sanity(cipher_attack, random_attack):
    cipher, rand = cipher_attack["top1"], random_attack["top1"]
    ceiling = random_attack["prior"]
    total = TIMINGS.get("attack_cipher", 0) + TIMINGS.get("attack_random", 0)
    passed = cipher > 99 and rand <= ceiling + 2 and total < 600
    record_criterion(
        8,
        "attacker sanity",
        passed,
        f"cipher top-1 {cipher:.2f}; random top-1 {rand:.2f} vs prior ceiling {ceiling:.2f}; {total:.0f}s",
    )
    assert passed


def test_criterion_9_ratio():
    ratio = accuracy_privacy_ratio(94.1, 100 - 68.3)
    passed = abs(ratio - 2.97) <= 0.01
    record_criterion(9, "accuracy/privacy ratio", passed, f"94.1 / (100 - 68.3) = {ratio:.4f}")
    assert passed


def test_criterion_10_frame_overlap():
    lex = toy_frame_lexicon()
    worked = signature_overlap({"012"}, {"012", "01"})
    # hand enumeration over the bundled toy lexicon
    pairs = [("advocate", "affect", 1), ("yield", "scare", 2), ("meet", "place", 0), ("send", "throw", 1), ("see", "visit", 1)]
    result = frame_overlap([a for a, _, _ in pairs], [b for _, b, _ in pairs], lex)
    hand = sum(k for _, _, k in pairs) / len(pairs)
    passed = worked == 1 and result.overlaps == tuple(k for _, _, k in pairs) and result.mean == pytest.approx(hand)
    record_criterion(
        10,
        "frame-signature overlap",
        passed,
        f"overlap({{012}}, {{012,01}}) = {worked}; toy mean {result.mean:.2f} vs hand {hand:.2f}; "
        "corpus averages 1.46 (random) / 1.80 (neural) are reference values, not reproducible on the fixture",
    )
    assert passed
