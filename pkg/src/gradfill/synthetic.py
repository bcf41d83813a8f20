"""Deterministic synthetic query/reply corpus for desk-scale experiments.

Words are pronounceable pseudo-words grouped into semantic classes. A reply
copies the noun from its query and draws adjectives, verbs, objects and places
from that noun's class, with number agreement spread across the sentence, so
every position depends on context on both sides.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .corpus import SequencePair

_ONSETS = "b c d f g h j k l m n p r s t v z br tr pl st gr kl".split()
_VOWELS = "a e i o u ai ou".split()

FUNCTION_WORDS = {
    "sg": {"det": "the", "aux": "is", "pron": "it", "have": "has", "this": "this"},
    "pl": {"det": "the", "aux": "are", "pron": "they", "have": "have", "this": "these"},
}


@dataclass
class Lexicon:
    classes: list  # one dict per class: nouns, adjs, verbs_sg, verbs_pl, objs, places


def _word_stream(rng: np.random.Generator):
    seen = set()
    while True:
        n = int(rng.integers(2, 4))
        w = "".join(_ONSETS[rng.integers(len(_ONSETS))] + _VOWELS[rng.integers(len(_VOWELS))] for _ in range(n))
        if w not in seen:
            seen.add(w)
            yield w


def make_lexicon(n_classes: int = 16, nouns: int = 20, adjs: int = 8, verbs: int = 8, objs: int = 10, places: int = 6, seed: int = 0) -> Lexicon:
    rng = np.random.default_rng(seed)
    words = _word_stream(rng)
    take = lambda k: list(itertools.islice(words, k))  # noqa: E731
    classes = []
    for _ in range(n_classes):
        vs = take(verbs)
        classes.append(
            {
                "nouns": take(nouns),
                "adjs": take(adjs),
                "verbs_sg": [v + "s" for v in vs],
                "verbs_pl": vs,
                "objs": take(objs),
                "places": take(places),
            }
        )
    return Lexicon(classes)


_QUERIES = [
    "what does the {noun} do",
    "where is the {noun}",
    "tell me about the {noun}",
    "why {aux} the {noun} {adj}",
    "do you like the {noun}",
    "what about {this} {noun}",
]

_REPLIES = [
    "{det} {adj} {noun} {verb} the {obj}",
    "{det} {noun} {verb} the {obj} in the {place}",
    "{det} {adj} {noun} {aux} in the {place} and {pron} {verb} the {obj}",
    "{this} {noun} {aux} very {adj} because {pron} {verb} the {obj}",
    "i think {det} {noun} {aux} {adj} and {adj2}",
    "{pron} {verb} the {adj} {obj} near the {place}",
    "{det} {noun} {have} a {obj} so {pron} {aux} {adj}",
    "in the {place} {det} {adj} {noun} {verb} every {obj}",
    "yes {this} {noun} {verb} the {obj} and {pron} {aux} {adj}",
    "no the {noun} never {verb2} the {obj} in the {place}",
]


def generate_pairs(n: int, lexicon: Lexicon, seed: int = 0) -> list[SequencePair]:
    """``n`` token-string pairs; replies are 5-14 tokens long."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        cls = lexicon.classes[rng.integers(len(lexicon.classes))]
        num = "sg" if rng.random() < 0.6 else "pl"
        fw = FUNCTION_WORDS[num]
        noun = cls["nouns"][rng.integers(len(cls["nouns"]))]
        if num == "pl":
            noun = noun + "s"
        verbs = cls["verbs_sg"] if num == "sg" else cls["verbs_pl"]
        a1, a2 = rng.choice(len(cls["adjs"]), size=2, replace=False)
        slots = {
            "noun": noun,
            "adj": cls["adjs"][a1],
            "adj2": cls["adjs"][a2],
            "verb": verbs[rng.integers(len(verbs))],
            "verb2": cls["verbs_pl"][rng.integers(len(verbs))],
            "obj": cls["objs"][rng.integers(len(cls["objs"]))],
            "place": cls["places"][rng.integers(len(cls["places"]))],
            **fw,
        }
        q = _QUERIES[rng.integers(len(_QUERIES))].format(**slots)
        r = _REPLIES[rng.integers(len(_REPLIES))].format(**slots)
        out.append(SequencePair(q.split(), r.split()))
    return out


def desk_corpus(n_train: int = 12000, n_test: int = 500, seed: int = 0, **lex_kwargs):
    """Train and test pairs drawn from one lexicon; test pairs use a separate stream."""
    lex = make_lexicon(seed=seed, **lex_kwargs)
    return generate_pairs(n_train, lex, seed=seed + 1), generate_pairs(n_test, lex, seed=seed + 2), lex
