"""Synthetic template grammar used as a self-contained parsing fixture.

Every sentence has a deterministic gold dependency tree. Within each POS tag
of the five-level spectrum, words fall into lexical classes that decide an
attachment the tags alone cannot: given names vs surnames (head of a
two-token name), relational vs plain nouns and verb classes (PP
attachment), stacking vs plain adjectives, degree vs focus adverbs. Word
choice inside a tag never depends on the visible context, so an attacker
seeing only substitutes can do no better than the tag-conditional prior.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from pathlib import Path

from .corpus import Sentence, Token, write_conllu

GIVEN_NAMES = ["John", "Mary", "Paul", "Anna", "Peter", "Laura", "David", "Susan", "Mark", "Helen", "Tom", "Kate"]
SURNAMES = ["Smith", "Jones", "Brown", "Miller", "Davis", "Wilson", "Moore", "Taylor", "Clark", "Lewis", "Walker", "Hall"]
TEAMS = ["Yankees", "Beatles", "Giants", "Lakers", "Celtics", "Mets"]

RELATIONAL_NN = ["owner", "friend", "author", "member", "leader", "father",
                 "sister", "partner", "critic", "rival", "neighbor", "student"]
PLAIN_NN = ["dog", "car", "house", "park", "table", "book", "garden", "river", "city", "window",
            "hat", "box", "tree", "road", "lamp", "chair", "bag", "cake", "ship", "device"]
RELATIONAL_NNS = ["friends", "owners", "members", "authors", "leaders", "fathers",
                  "sisters", "partners", "critics", "rivals"]
PLAIN_NNS = ["terrorists", "children", "dogs", "cars", "houses", "parks", "books", "gardens",
             "boats", "trees", "lamps", "chairs", "hats", "boxes", "letters", "devices"]

STACKING_JJ = ["light", "dark", "pale", "deep", "bright", "bold", "soft", "pure", "rich", "plain"]
PLAIN_JJ = ["big", "small", "old", "new", "red", "green", "happy", "ferocious", "quiet",
            "strange", "tall", "warm", "cold", "heavy", "fresh", "sharp", "blue", "yellow"]
JJR = ["bigger", "smaller", "older", "newer", "taller", "warmer"]
JJS = ["biggest", "smallest", "oldest", "newest", "tallest", "warmest"]

DEGREE_RB = ["very", "quite", "rather", "fairly", "too", "really", "extremely", "so"]
FOCUS_RB = ["only", "even", "just", "also", "still", "almost"]
RBR = ["faster", "sooner", "later", "harder"]
RBS = ["fastest", "soonest", "latest", "hardest"]

# lemma: (VB/VBP, VBZ, VBD)
VERB_ATTACHING = {
    "place": ("place", "places", "placed"),
    "keep": ("keep", "keeps", "kept"),
    "hide": ("hide", "hides", "hid"),
    "store": ("store", "stores", "stored"),
    "leave": ("leave", "leaves", "left"),
    "send": ("send", "sends", "sent"),
    "throw": ("throw", "throws", "threw"),
    "drop": ("drop", "drops", "dropped"),
    "push": ("push", "pushes", "pushed"),
    "carry": ("carry", "carries", "carried"),
}
NOUN_ATTACHING = {
    "see": ("see", "sees", "saw"),
    "phone": ("phone", "phones", "phoned"),
    "scare": ("scare", "scares", "scared"),
    "visit": ("visit", "visits", "visited"),
    "call": ("call", "calls", "called"),
    "meet": ("meet", "meets", "met"),
    "help": ("help", "helps", "helped"),
    "advocate": ("advocate", "advocates", "advocated"),
    "affect": ("affect", "affects", "affected"),
    "yield": ("yield", "yields", "yielded"),
}

DT_SG = ["the", "a", "this", "that", "every"]
DT_PL = ["the", "these", "those", "some"]
PREPOSITIONS = ["with", "in", "on", "near", "from", "for"]

VERB_LEMMAS: dict[str, str] = {
    form: lemma
    for table in (VERB_ATTACHING, NOUN_ATTACHING)
    for lemma, forms in table.items()
    for form in forms
}

LEXICAL_CLASS: dict[str, str] = {
    **{w: "given" for w in GIVEN_NAMES},
    **{w: "surname" for w in SURNAMES},
    **{w: "relational" for w in RELATIONAL_NN + RELATIONAL_NNS},
    **{w: "plain-noun" for w in PLAIN_NN + PLAIN_NNS},
    **{w: "stacking" for w in STACKING_JJ},
    **{w: "plain-adj" for w in PLAIN_JJ},
    **{w: "degree" for w in DEGREE_RB},
    **{w: "focus" for w in FOCUS_RB},
    **{f: "verb-attaching" for forms in VERB_ATTACHING.values() for f in forms},
    **{f: "noun-attaching" for forms in NOUN_ATTACHING.values() for f in forms},
}


def _zipf(words: list[str], s: float = 1.0) -> list[float]:
    return [1.0 / (k + 1) ** s for k in range(len(words))]


@dataclass(eq=False)
class _Node:
    form: str
    tag: str
    deprel: str = "root"
    head: "_Node | None" = None


@dataclass
class GrammarConfig:
    p_name_subject: float = 0.3
    p_team: float = 0.08
    p_two_token_name: float = 0.5
    p_adjectives: float = 0.6
    p_two_adjectives: float = 0.45
    p_adverb_modifier: float = 0.35
    p_pp: float = 0.65
    p_final_adverb: float = 0.4


class TemplateGrammar:
    def __init__(self, config: GrammarConfig | None = None):
        self.config = config or GrammarConfig()
        self._verbs = {**VERB_ATTACHING, **NOUN_ATTACHING}
        self._lemmas = list(self._verbs)

    def _pick(self, rng: random.Random, words: list[str]) -> str:
        return rng.choices(words, weights=_zipf(words))[0]

    def _name(self, rng: random.Random) -> tuple[list[_Node], _Node]:
        c = self.config
        if rng.random() < c.p_two_token_name:
            given = _Node(self._pick(rng, GIVEN_NAMES), "NNP", "nn")
            surname = _Node(self._pick(rng, SURNAMES), "NNP")
            given.head = surname
            nodes = [given, surname] if rng.random() < 0.5 else [surname, given]
            return nodes, surname
        pool = GIVEN_NAMES if rng.random() < 0.5 else SURNAMES
        node = _Node(self._pick(rng, pool), "NNP")
        return [node], node

    def _team(self, rng: random.Random) -> tuple[list[_Node], _Node]:
        noun = _Node(self._pick(rng, TEAMS), "NNPS")
        det = _Node("the", "DT", "det", noun)
        return [det, noun], noun

    def _noun_phrase(self, rng: random.Random, plural: bool, modifiers: bool = True) -> tuple[list[_Node], _Node]:
        c = self.config
        if plural:
            pool = RELATIONAL_NNS if rng.random() < 0.4 else PLAIN_NNS
            noun = _Node(self._pick(rng, pool), "NNS")
            det = _Node(rng.choice(DT_PL), "DT", "det", noun)
        else:
            pool = RELATIONAL_NN if rng.random() < 0.4 else PLAIN_NN
            noun = _Node(self._pick(rng, pool), "NN")
            det = _Node(rng.choice(DT_SG), "DT", "det", noun)
        adjectives: list[_Node] = []
        if modifiers and rng.random() < c.p_adjectives:
            if rng.random() < c.p_two_adjectives:
                first = _Node(self._pick(rng, STACKING_JJ if rng.random() < 0.45 else PLAIN_JJ), "JJ", "amod")
                second = _Node(self._pick(rng, STACKING_JJ if rng.random() < 0.45 else PLAIN_JJ), "JJ", "amod", noun)
                first.head = second if first.form in STACKING_JJ else noun
                adjectives = [first, second]
            else:
                r = rng.random()
                if r < 0.7:
                    pool = STACKING_JJ if rng.random() < 0.45 else PLAIN_JJ
                    adjectives = [_Node(self._pick(rng, pool), "JJ", "amod", noun)]
                elif r < 0.85:
                    adjectives = [_Node(self._pick(rng, JJR), "JJR", "amod", noun)]
                else:
                    adjectives = [_Node(self._pick(rng, JJS), "JJS", "amod", noun)]
        adverbs: list[_Node] = []
        if adjectives and rng.random() < c.p_adverb_modifier:
            pool = DEGREE_RB if rng.random() < 0.55 else FOCUS_RB
            adv = _Node(self._pick(rng, pool), "RB", "advmod")
            adv.head = adjectives[0] if adv.form in DEGREE_RB else noun
            adverbs = [adv]
        return [det, *adverbs, *adjectives, noun], noun

    def _argument(self, rng: random.Random, p_name: float) -> tuple[list[_Node], _Node, bool]:
        r = rng.random()
        if r < p_name:
            nodes, head = self._name(rng)
            return nodes, head, False
        if r < p_name + self.config.p_team:
            nodes, head = self._team(rng)
            return nodes, head, True
        plural = rng.random() < 0.4
        nodes, head = self._noun_phrase(rng, plural)
        return nodes, head, plural

    def sentence(self, rng: random.Random, sent_id: str = "") -> Sentence:
        c = self.config
        subj_nodes, subj_head, plural = self._argument(rng, c.p_name_subject)
        lemma = rng.choice(self._lemmas)
        base, third, past = self._verbs[lemma]
        r = rng.random()
        aux: list[_Node] = []
        if r < 0.4:
            verb = _Node(third, "VBZ") if not plural else _Node(base, "VBP")
        elif r < 0.75:
            verb = _Node(past, "VBD")
        else:
            verb = _Node(base, "VB")
            aux = [_Node("will", "MD", "aux", verb)]
        subj_head.deprel, subj_head.head = "nsubj", verb

        obj_nodes, obj_head, _ = self._argument(rng, 0.25)
        obj_head.deprel, obj_head.head = "dobj", verb
        nodes = [*subj_nodes, *aux, verb, *obj_nodes]

        if rng.random() < c.p_pp:
            if lemma in VERB_ATTACHING:
                attach = verb
            elif obj_head.form in RELATIONAL_NN or obj_head.form in RELATIONAL_NNS:
                attach = obj_head
            else:
                attach = verb
            prep = _Node(rng.choice(PREPOSITIONS), "IN", "prep", attach)
            if rng.random() < 0.2:
                pobj_nodes, pobj_head = self._name(rng)
            else:
                pobj_nodes, pobj_head = self._noun_phrase(rng, rng.random() < 0.4)
            pobj_head.deprel, pobj_head.head = "pobj", prep
            nodes += [prep, *pobj_nodes]

        if rng.random() < c.p_final_adverb:
            r = rng.random()
            if r < 0.7:
                adv = _Node(self._pick(rng, DEGREE_RB + FOCUS_RB), "RB", "advmod", verb)
            elif r < 0.85:
                adv = _Node(self._pick(rng, RBR), "RBR", "advmod", verb)
            else:
                adv = _Node(self._pick(rng, RBS), "RBS", "advmod", verb)
            nodes.append(adv)
        nodes.append(_Node(".", ".", "punct", verb))

        index = {id(node): i for i, node in enumerate(nodes, start=1)}
        tokens = tuple(
            Token(n.form, n.tag, 0 if n.head is None else index[id(n.head)], n.deprel) for n in nodes
        )
        return Sentence(tokens, id=sent_id)


def generate_corpus(n: int, seed: int = 0, prefix: str = "s", config: GrammarConfig | None = None) -> list[Sentence]:
    rng = random.Random(seed)
    grammar = TemplateGrammar(config)
    return [grammar.sentence(rng, f"{prefix}{i + 1}") for i in range(n)]


def fixture_splits(seed: int = 0, n_train: int = 2000, n_dev: int = 200, n_test: int = 200) -> dict[str, list[Sentence]]:
    return {
        "train": generate_corpus(n_train, seed=seed, prefix="train-"),
        "dev": generate_corpus(n_dev, seed=seed + 1, prefix="dev-"),
        "test": generate_corpus(n_test, seed=seed + 2, prefix="test-"),
    }


def write_fixture(outdir: str | Path, seed: int = 0, n_train: int = 2000, n_dev: int = 200, n_test: int = 200) -> dict[str, Path]:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = {}
    for split, sentences in fixture_splits(seed, n_train, n_dev, n_test).items():
        paths[split] = outdir / f"{split}.conllu"
        write_conllu(sentences, paths[split])
    return paths
