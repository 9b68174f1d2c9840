"""Command-line harness: ``synobf <command> [options]``.

Exit codes: 0 success, 1 internal failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import torch

from .adapters import AdapterError, ExternalParserAdapter
from .attackers import (
    AttackerConfig,
    AttackInstance,
    MaskedPredictorAttacker,
    attack_many,
    context_count_predictor,
    external_masked_predictor,
    train_attacker,
)
from .checkpoint import CheckpointError, file_digest
from .corpus import (
    DEFAULT_SPECTRUM,
    CorpusError,
    Sentence,
    build_vocabulary,
    format_conllu,
    parse_conllu,
    read_conllu,
    spectrum_set,
    write_conllu,
)
from .fixture import VERB_LEMMAS, write_fixture
from .layers import EncoderConfig
from .metrics import (
    ResultRow,
    frame_overlap,
    load_frame_lexicon,
    mrr,
    one_sided_ttest,
    read_records,
    render_table,
    toy_frame_lexicon,
    uas_las,
    write_records,
)
from .obfuscator import NeuralObfuscator, ObfuscationPolicy, ObfuscatorConfig, RandomPolicy, build_obfuscator
from .parser import BiaffineParser, ParserConfig, parse_many, train_parser
from .training import TrainingConfig, train_obfuscator

logger = logging.getLogger("synobf")

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2
VERB_TAGS = frozenset({"VB", "VBD", "VBG", "VBN", "VBP", "VBZ"})


class UsageError(Exception):
    """Bad arguments, missing inputs or inconsistent configuration (exit code 2)."""


# -- config handling -------------------------------------------------------------------


def effective_config(args: argparse.Namespace, defaults: dict[str, Any]) -> dict[str, Any]:
    """Defaults < JSON config file < explicit command-line flags."""
    cfg = dict(defaults)
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise UsageError(f"config file not found: {path}")
        try:
            loaded = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise UsageError(f"{path}: invalid JSON: {exc}") from exc
        if not isinstance(loaded, dict):
            raise UsageError(f"{path}: the config must be a JSON object")
        unknown = set(loaded) - set(defaults)
        if unknown:
            raise UsageError(f"{path}: unknown keys {sorted(unknown)}")
        cfg.update(loaded)
    for key in defaults:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    return cfg


def _need_file(path: str | None, what: str) -> Path:
    if not path:
        raise UsageError(f"missing {what}")
    p = Path(path)
    if str(path) != "-" and not p.exists():
        raise UsageError(f"{what} not found: {p}")
    return p


def _read(path: str | None, what: str) -> list[Sentence]:
    p = _need_file(path, what)
    if str(p) == "-":
        return parse_conllu(sys.stdin, source="<stdin>")
    return read_conllu(p)


def _targets(cfg: dict) -> frozenset[str]:
    if cfg.get("targets"):
        tags = cfg["targets"]
        return frozenset(tags.split(",") if isinstance(tags, str) else tags)
    level = cfg.get("level")
    if level is None:
        raise UsageError("give --level or --targets")
    if int(level) == 0:
        return frozenset()
    try:
        return spectrum_set(int(level))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _load_parser(path: str | None) -> BiaffineParser:
    p = _need_file(path, "parser checkpoint")
    return BiaffineParser.load(p).freeze()


def _load_policy(cfg: dict, train: Sequence[Sentence] | None) -> ObfuscationPolicy:
    if cfg["policy"] == "random":
        if not train:
            raise UsageError("the random policy needs --train to build the vocabulary")
        return RandomPolicy(build_vocabulary(train))
    if cfg["policy"] == "neural":
        return NeuralObfuscator.load(_need_file(cfg.get("obfuscator"), "obfuscator checkpoint"))
    raise UsageError(f"unknown policy {cfg['policy']!r}")


def _parser_backend(cfg: dict):
    spec = cfg.get("parser") or "internal"
    if spec == "internal":
        model = _load_parser(cfg.get("parser_model"))
        meta = {"parser": "internal", "parser_sha256": file_digest(cfg["parser_model"])}
        return (lambda sents: parse_many(model, sents)), meta, model
    if spec.startswith("external:"):
        adapter = ExternalParserAdapter(spec[len("external:") :], timeout=float(cfg.get("timeout") or 120))
        # a neural policy still trains against the internal parser when one is given
        model = _load_parser(cfg["parser_model"]) if cfg.get("parser_model") else None
        return adapter.parse, {"parser": spec}, model
    raise UsageError(f"--parser must be 'internal' or 'external:<command>', got {spec!r}")


def _write_json(obj: Any, path: Path | None = None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True, default=str)
    if path is None:
        print(text)
    else:
        path.write_text(text + "\n", encoding="utf-8")


def _out_dir(cfg: dict) -> Path:
    out = Path(cfg.get("out") or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _encoder(cfg: dict) -> EncoderConfig:
    return EncoderConfig.preset(cfg.get("preset") or "desk")


# -- commands -----------------------------------------------------------------------------


def cmd_make_fixture(args) -> int:
    cfg = effective_config(args, {"out": "fixture", "seed": 0, "n_train": 2000, "n_dev": 200, "n_test": 200})
    paths = write_fixture(cfg["out"], cfg["seed"], cfg["n_train"], cfg["n_dev"], cfg["n_test"])
    _write_json({k: str(v) for k, v in paths.items()})
    return EXIT_OK


PARSER_DEFAULTS = {"train": None, "dev": None, "out": ".", "seed": 0, "preset": "desk", "epochs": None, "embeddings": None, "decoder": "greedy"}


def cmd_train_parser(args) -> int:
    cfg = effective_config(args, PARSER_DEFAULTS)
    train, dev = _read(cfg["train"], "training corpus"), _read(cfg["dev"], "dev corpus")
    if cfg["embeddings"]:
        _need_file(cfg["embeddings"], "embeddings file")
    overrides = {"seed": cfg["seed"], "decoder": cfg["decoder"]}
    if cfg["epochs"]:
        overrides["epochs"] = cfg["epochs"]
    pconfig = ParserConfig.preset(cfg["preset"], **overrides)
    out = _out_dir(cfg)
    with open(out / "parser_report.jsonl", "w", encoding="utf-8") as f:
        f.write(json.dumps({"config": cfg}) + "\n")
        model, report = train_parser(train, dev, pconfig, cfg["embeddings"], on_epoch=lambda r: f.write(json.dumps(r) + "\n"))
        f.write(json.dumps({"summary": True, "best_epoch": report["best_epoch"], "best_dev_uas": report["best_dev_uas"]}) + "\n")
    path = model.save(out / "parser.pt", {"report": report})
    print(f"dev UAS {report['best_dev_uas']:.2f} (epoch {report['best_epoch']})")
    print(f"parser checkpoint: {path}")
    return EXIT_OK


OBF_DEFAULTS = {
    "train": None, "dev": None, "parser_model": None, "out": ".", "seed": 0, "preset": "desk",
    "level": 5, "targets": None, "epochs": 5, "batch_size": 32, "lr": 1e-3, "tau_start": 1.0, "tau_end": 0.5,
    "entropy_weight": 0.0, "embeddings": None, "use_parser_predictions": False,
}


def _train_obf(cfg: dict, parser: BiaffineParser, train, dev, targets, report_path: Path) -> tuple[NeuralObfuscator, dict]:
    tconfig = TrainingConfig(
        tau_start=cfg["tau_start"], tau_end=cfg["tau_end"], entropy_weight=cfg["entropy_weight"], epochs=cfg["epochs"],
        batch_size=cfg["batch_size"], lr=cfg["lr"], seed=cfg["seed"], targets=tuple(targets),
        use_parser_predictions=bool(cfg["use_parser_predictions"]),
    )
    torch.manual_seed(cfg["seed"])
    obf = build_obfuscator(build_vocabulary(train), ObfuscatorConfig(encoder=_encoder(cfg)), cfg.get("embeddings"))
    return train_obfuscator(obf, parser, train, dev, tconfig, report_path=report_path)


def cmd_train_obf(args) -> int:
    cfg = effective_config(args, OBF_DEFAULTS)
    parser = _load_parser(cfg["parser_model"])
    train, dev = _read(cfg["train"], "training corpus"), _read(cfg["dev"], "dev corpus")
    targets = _targets(cfg)
    out = _out_dir(cfg)
    obf, report = _train_obf(cfg, parser, train, dev, targets, out / "obfuscator_report.jsonl")
    for rec in report["epochs"]:
        print(f"epoch {rec['epoch']}: tau {rec['tau']:.3f} dev obfuscated UAS {rec['dev_uas']:.2f}")
    print(f"parser checksum before {report['parser_checksum'][:16]} after {report['parser_checksum_after'][:16]}")
    path = obf.save(out / "obfuscator.pt", {"report": report, "effective_config": cfg})
    print(f"obfuscator checkpoint: {path}")
    return EXIT_OK


OBFUSCATE_DEFAULTS = {"input": None, "output": None, "policy": "random", "obfuscator": None, "train": None, "level": None, "targets": None, "seed": 0}


def cmd_obfuscate(args) -> int:
    cfg = effective_config(args, OBFUSCATE_DEFAULTS)
    sentences = _read(cfg["input"], "input corpus")
    train = _read(cfg["train"], "training corpus") if cfg["train"] else None
    policy = _load_policy(cfg, train)
    targets = _targets(cfg)
    results = policy.sample_many(sentences, targets, cfg["seed"])
    if not cfg["output"]:
        raise UsageError("missing --output")
    out = Path(cfg["output"])
    out.parent.mkdir(parents=True, exist_ok=True)
    write_conllu([r.obfuscated.without_tree() for r in results], out)
    with open(str(out) + ".mask", "w", encoding="utf-8") as f:
        for r in results:
            f.write(" ".join("1" if m else "0" for m in r.mask) + "\n")
    with open(str(out) + ".unsub", "w", encoding="utf-8") as f:
        for r in results:
            f.write(" ".join(str(i + 1) for i in sorted(r.unsubstitutable)) + "\n")
    n_sub = sum(sum(r.mask) for r in results)
    n_unsub = sum(len(r.unsubstitutable) for r in results)
    print(f"{len(results)} sentences, {n_sub} substitutions, {n_unsub} unsubstitutable positions -> {out}")
    return EXIT_OK


def cmd_parse(args) -> int:
    cfg = effective_config(args, {"input": "-", "output": "-", "parser_model": None, "decoder": None})
    model = _load_parser(cfg["parser_model"])
    sentences = _read(cfg["input"], "input corpus")
    parsed = parse_many(model, [s.without_tree() for s in sentences], method=cfg["decoder"])
    text = format_conllu(parsed)
    if cfg["output"] == "-":
        sys.stdout.write(text)
    else:
        Path(cfg["output"]).write_text(text, encoding="utf-8")
    return EXIT_OK


def read_mask(path: str | Path, sentences: Sequence[Sentence]) -> list[tuple[bool, ...]]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if len(lines) != len(sentences):
        raise UsageError(f"{path}: {len(lines)} mask lines for {len(sentences)} sentences")
    masks = []
    for k, (line, s) in enumerate(zip(lines, sentences)):
        bits = line.split()
        if len(bits) != len(s) or any(b not in ("0", "1") for b in bits):
            raise UsageError(f"{path}:{k + 1}: expected {len(s)} values of 0/1")
        masks.append(tuple(b == "1" for b in bits))
    return masks


def _aligned(a: Sequence[Sentence], b: Sequence[Sentence], what: str) -> None:
    if len(a) != len(b) or any(len(x) != len(y) for x, y in zip(a, b)):
        raise UsageError(f"{what}: corpora are not aligned sentence by sentence")


def build_attacker(spec: str, train: Sequence[Sentence], vocab, policy: ObfuscationPolicy | None, targets, cfg: dict):
    if spec == "context":
        return MaskedPredictorAttacker(context_count_predictor(train, vocab.full))
    if spec == "trained":
        if policy is None:
            raise UsageError("the trained attacker needs the policy under attack")
        results = policy.sample_many(train, targets, cfg["seed"] + 1)
        aconfig = AttackerConfig(encoder=_encoder(cfg), epochs=cfg.get("attacker_epochs") or 10, seed=cfg["seed"])
        return train_attacker(results, aconfig, policy=policy, targets=targets)[0]
    if spec.startswith("external:"):
        return MaskedPredictorAttacker(external_masked_predictor(spec[len("external:") :], vocab.full))
    raise UsageError(f"unknown attacker {spec!r} (context, trained or external:<command>)")


ATTACK_DEFAULTS = {
    "train": None, "input": None, "mask": None, "original": None, "attacker": "context", "policy": "random",
    "obfuscator": None, "level": None, "targets": None, "seed": 0, "preset": "desk", "attacker_epochs": 10,
}


def cmd_attack(args) -> int:
    cfg = effective_config(args, ATTACK_DEFAULTS)
    train = _read(cfg["train"], "training corpus")
    obfuscated = _read(cfg["input"], "obfuscated corpus")
    original = _read(cfg["original"], "original corpus")
    _aligned(obfuscated, original, "attack")
    masks = read_mask(_need_file(cfg["mask"] or (str(cfg["input"]) + ".mask"), "mask file"), obfuscated)
    vocab = build_vocabulary(train)
    policy = targets = None
    if cfg["attacker"] == "trained":
        policy = _load_policy(cfg, train)
        targets = _targets(cfg)
    attacker = build_attacker(cfg["attacker"], train, vocab, policy, targets, cfg)
    instances = [AttackInstance(o, m, g.forms) for o, m, g in zip(obfuscated, masks, original)]
    preds = attack_many(attacker, instances)
    flat = [p for ps in preds for p in ps]
    truths = [w for inst in instances for w in inst.truths()]
    if not flat:
        raise UsageError("no substituted positions to attack")
    report = mrr(flat, truths)
    _write_json({"attacker": cfg["attacker"], "mrr": report.mrr, "attacker_error": report.attacker_error,
                 "n_positions": report.n_positions, "histogram": report.per_rank_histogram, "missing": report.missing, "config": cfg})
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = effective_config(args, {"gold": None, "input": None, "predicted": None, "parser": "internal", "parser_model": None, "punct": None})
    gold = _read(cfg["gold"], "gold corpus")
    if cfg["predicted"]:
        predicted = _read(cfg["predicted"], "predicted corpus")
    else:
        sentences = _read(cfg["input"], "input corpus")
        _aligned(sentences, gold, "evaluate")
        backend, _, _ = _parser_backend(cfg)
        predicted = backend([s.without_tree() for s in sentences])
    _aligned(predicted, gold, "evaluate")
    punct = set(cfg["punct"].split(",")) if cfg["punct"] else set()
    u, l = uas_las(predicted, gold, punct=punct)
    _write_json({"uas": u, "las": l, "sentences": len(gold), "punct_excluded": sorted(punct)})
    return EXIT_OK


SPECTRUM_DEFAULTS = {
    "train": None, "dev": None, "test": None, "parser": "internal", "parser_model": None, "policy": "random",
    "obfuscator_dir": None, "attackers": "context", "out": ".", "seed": 0, "preset": "desk", "levels": "1,2,3,4,5",
    "epochs": 5, "batch_size": 32, "lr": 1e-3, "tau_start": 1.0, "tau_end": 0.5, "entropy_weight": 0.0,
    "embeddings": None, "use_parser_predictions": False, "attacker_epochs": 10, "timeout": 120,
}


def run_spectrum(cfg: dict, train, dev, test) -> tuple[list[ResultRow], dict]:
    """Obfuscate, parse and attack the test set at every requested spectrum level."""
    backend, parser_meta, internal = _parser_backend(cfg)
    vocab = build_vocabulary(train)
    attackers = [a.strip() for a in str(cfg["attackers"]).split(",") if a.strip()]
    if not attackers:
        raise UsageError("at least one attacker is required")
    levels = [int(j) for j in str(cfg["levels"]).split(",")]
    meta = {"config": cfg, "seed": cfg["seed"], **parser_meta, "obfuscators": {}}

    base = backend([s.without_tree() for s in test])
    u, l = uas_las(base, test)
    rows = [ResultRow("No obf.", u, "UAS", l)]
    for j in levels:
        t0 = time.time()
        try:
            targets = spectrum_set(j)
            if cfg["policy"] == "random":
                policy: ObfuscationPolicy = RandomPolicy(vocab)
            elif cfg["policy"] == "neural":
                policy = _level_obfuscator(cfg, j, internal, train, dev, targets, meta)
            else:
                raise UsageError(f"unknown policy {cfg['policy']!r}")
            results = policy.sample_many(test, targets, cfg["seed"])
            predicted = backend([r.obfuscated.without_tree() for r in results])
            u, l = uas_las(predicted, test)
            instances = [AttackInstance.from_result(r) for r in results]
            truths = [w for inst in instances for w in inst.truths()]
            reports = {}
            for spec in attackers:
                attacker = build_attacker(spec, train, vocab, policy, targets, cfg)
                flat = [p for ps in attack_many(attacker, instances) for p in ps]
                reports[spec] = mrr(flat, truths)
        except (UsageError, AdapterError, CheckpointError):
            raise
        except Exception as exc:
            raise RuntimeError(f"spectrum level {j} failed: {exc}") from exc
        label = DEFAULT_SPECTRUM.names[j - 1]
        rows.append(ResultRow.build(label, u, reports, "UAS", l))
        logger.info("level %d (%s): UAS %.2f in %.1fs", j, label, u, time.time() - t0)
    return rows, meta


def _level_obfuscator(cfg, level, parser, train, dev, targets, meta) -> NeuralObfuscator:
    if parser is None:
        raise UsageError("training a neural policy needs the internal parser")
    directory = Path(cfg.get("obfuscator_dir") or Path(cfg["out"]) / "obfuscators")
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"level{level}.pt"
    if not path.exists():
        logger.info("training obfuscator for level %d", level)
        obf, report = _train_obf(cfg, parser, train, dev, targets, directory / f"level{level}_report.jsonl")
        obf.save(path, {"report": report})
    meta["obfuscators"][str(level)] = file_digest(path)
    return NeuralObfuscator.load(path)


def cmd_spectrum(args) -> int:
    if getattr(args, "render", None):
        rows, _ = read_records(_need_file(args.render, "records file"))
        sys.stdout.write(render_table(rows))
        return EXIT_OK
    cfg = effective_config(args, SPECTRUM_DEFAULTS)
    train, dev, test = _read(cfg["train"], "training corpus"), _read(cfg["dev"], "dev corpus"), _read(cfg["test"], "test corpus")
    torch.manual_seed(cfg["seed"])
    rows, meta = run_spectrum(cfg, train, dev, test)
    out = _out_dir(cfg)
    stem = f"spectrum_{cfg['policy']}"
    write_records(rows, out / f"{stem}.jsonl", meta)
    table = render_table(rows)
    (out / f"{stem}.txt").write_text(table, encoding="utf-8")
    sys.stdout.write(table)
    return EXIT_OK


def read_lemma_map(path: str | None) -> dict[str, str]:
    if not path:
        return dict(VERB_LEMMAS)
    out = {}
    for lineno, line in enumerate(Path(_need_file(path, "lemma map")).read_text(encoding="utf-8").splitlines(), 1):
        if line.strip():
            parts = line.split()
            if len(parts) != 2:
                raise UsageError(f"{path}:{lineno}: expected 'form lemma'")
            out[parts[0]] = parts[1]
    return out


def verb_pairs(original: Sequence[Sentence], obfuscated: Sequence[Sentence], lemmas: dict[str, str]) -> tuple[list[str], list[str]]:
    a, b = [], []
    for o, y in zip(original, obfuscated):
        for to, ty in zip(o, y):
            if to.tag in VERB_TAGS:
                a.append(lemmas.get(to.form, to.form.lower()))
                b.append(lemmas.get(ty.form, ty.form.lower()))
    return a, b


def cmd_analyze_frames(args) -> int:
    cfg = effective_config(args, {"original": None, "obfuscated": None, "compare": None, "lexicon": None, "lemmas": None})
    original = _read(cfg["original"], "original corpus")
    obfuscated = _read(cfg["obfuscated"], "obfuscated corpus")
    _aligned(original, obfuscated, "analyze-frames")
    lexicon = load_frame_lexicon(_need_file(cfg["lexicon"], "frame lexicon")) if cfg["lexicon"] else toy_frame_lexicon()
    lemmas = read_lemma_map(cfg["lemmas"])
    first = frame_overlap(*verb_pairs(original, obfuscated, lemmas), lexicon)
    report: dict[str, Any] = {"mean_overlap": first.mean, "scored": len(first.overlaps), "skipped": len(first.skipped), "empty": first.empty}
    if cfg["compare"]:
        other_corpus = _read(cfg["compare"], "comparison corpus")
        _aligned(original, other_corpus, "analyze-frames")
        other = frame_overlap(*verb_pairs(original, other_corpus, lemmas), lexicon)
        report["compare_mean_overlap"] = other.mean
        if len(first.overlaps) > 1 and len(other.overlaps) > 1:
            t, p = one_sided_ttest(first.overlaps, other.overlaps)
            report.update({"t_statistic": t, "p_value": p, "alternative": "first mean greater than compare mean"})
    _write_json(report)
    return EXIT_OK


# -- argument parsing ----------------------------------------------------------------------


def build_argparser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="synobf", description="Syntax-preserving word obfuscation experiments.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, *, seed=True, preset=False):
        p.add_argument("--config", help="JSON file with option values; flags override it")
        if seed:
            p.add_argument("--seed", type=int)
        if preset:
            p.add_argument("--preset", choices=["desk", "paper"])
        return p

    def training_opts(p):
        p.add_argument("--epochs", type=int)
        p.add_argument("--batch-size", dest="batch_size", type=int)
        p.add_argument("--lr", type=float)
        p.add_argument("--tau-start", dest="tau_start", type=float)
        p.add_argument("--tau-end", dest="tau_end", type=float)
        p.add_argument("--entropy-weight", dest="entropy_weight", type=float)
        p.add_argument("--embeddings")
        p.add_argument("--use-parser-predictions", dest="use_parser_predictions", action="store_true", default=None)

    def level_opts(p):
        p.add_argument("--level", type=int, choices=range(0, 6), metavar="{0..5}")
        p.add_argument("--targets", help="comma-separated tag set, overrides --level")

    p = common(sub.add_parser("make-fixture", help="write the synthetic train/dev/test corpus"))
    p.add_argument("--out")
    p.add_argument("--n-train", dest="n_train", type=int)
    p.add_argument("--n-dev", dest="n_dev", type=int)
    p.add_argument("--n-test", dest="n_test", type=int)
    p.set_defaults(func=cmd_make_fixture)

    p = common(sub.add_parser("train-parser", help="train the biaffine dependency parser"), preset=True)
    p.add_argument("--train")
    p.add_argument("--dev")
    p.add_argument("--out")
    p.add_argument("--epochs", type=int)
    p.add_argument("--embeddings")
    p.add_argument("--decoder", choices=["greedy", "mst"])
    p.set_defaults(func=cmd_train_parser)

    p = common(sub.add_parser("train-obf", help="train the neural obfuscator against a frozen parser"), preset=True)
    p.add_argument("--train")
    p.add_argument("--dev")
    p.add_argument("--parser-model", dest="parser_model")
    p.add_argument("--out")
    level_opts(p)
    training_opts(p)
    p.set_defaults(func=cmd_train_obf)

    p = common(sub.add_parser("obfuscate", help="obfuscate a CoNLL-U file"))
    p.add_argument("--input")
    p.add_argument("--output")
    p.add_argument("--policy", choices=["random", "neural"])
    p.add_argument("--obfuscator", help="neural obfuscator checkpoint")
    p.add_argument("--train", help="training corpus (vocabulary for the random policy)")
    level_opts(p)
    p.set_defaults(func=cmd_obfuscate)

    p = common(sub.add_parser("parse", help="parse CoNLL-U ('-' for stdin/stdout)"), seed=False)
    p.add_argument("--input")
    p.add_argument("--output")
    p.add_argument("--parser-model", dest="parser_model")
    p.add_argument("--decoder", choices=["greedy", "mst"])
    p.set_defaults(func=cmd_parse)

    p = common(sub.add_parser("attack", help="score an attacker on an obfuscated corpus"), preset=True)
    p.add_argument("--train")
    p.add_argument("--input", help="obfuscated CoNLL-U")
    p.add_argument("--mask", help="sidecar mask file (default: <input>.mask)")
    p.add_argument("--original", help="original CoNLL-U, used only for scoring")
    p.add_argument("--attacker", help="context, trained or external:<command>")
    p.add_argument("--policy", choices=["random", "neural"])
    p.add_argument("--obfuscator")
    p.add_argument("--attacker-epochs", dest="attacker_epochs", type=int)
    level_opts(p)
    p.set_defaults(func=cmd_attack)

    p = common(sub.add_parser("evaluate", help="UAS/LAS of parses against gold trees"), seed=False)
    p.add_argument("--gold")
    p.add_argument("--input", help="sentences to parse (e.g. obfuscated)")
    p.add_argument("--predicted", help="already parsed CoNLL-U")
    p.add_argument("--parser", help="internal or external:<command>")
    p.add_argument("--parser-model", dest="parser_model")
    p.add_argument("--punct", help="comma-separated tags excluded from scoring")
    p.set_defaults(func=cmd_evaluate)

    p = common(sub.add_parser("spectrum", help="run the five-level tag spectrum experiment"), preset=True)
    p.add_argument("--train")
    p.add_argument("--dev")
    p.add_argument("--test")
    p.add_argument("--parser", help="internal or external:<command>")
    p.add_argument("--parser-model", dest="parser_model")
    p.add_argument("--policy", choices=["random", "neural"])
    p.add_argument("--obfuscator-dir", dest="obfuscator_dir")
    p.add_argument("--attackers", help="comma-separated: context, trained, external:<command>")
    p.add_argument("--levels", help="comma-separated subset of 1..5")
    p.add_argument("--attacker-epochs", dest="attacker_epochs", type=int)
    p.add_argument("--timeout", type=float)
    p.add_argument("--out")
    p.add_argument("--render", help="re-render the table of an existing records file and exit")
    training_opts(p)
    p.set_defaults(func=cmd_spectrum)

    p = common(sub.add_parser("analyze-frames", help="verb frame-signature overlap"), seed=False)
    p.add_argument("--original")
    p.add_argument("--obfuscated")
    p.add_argument("--compare", help="a second obfuscated corpus for a one-sided t-test")
    p.add_argument("--lexicon", help="'lemma sig1,sig2' file (default: bundled toy lexicon)")
    p.add_argument("--lemmas", help="'form lemma' file (default: fixture verb lemmas)")
    p.set_defaults(func=cmd_analyze_frames)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    ap = build_argparser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "seed", None) is not None:
        torch.manual_seed(args.seed)
        np.random.seed(args.seed)
    try:
        return args.func(args)
    except (UsageError, FileNotFoundError, CorpusError, CheckpointError) as exc:
        print(f"synobf {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except AdapterError as exc:
        print(f"synobf {args.command}: adapter error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except Exception as exc:  # noqa: BLE001
        logger.debug("internal failure", exc_info=True)
        print(f"synobf {args.command}: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
