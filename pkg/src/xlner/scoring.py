"""Sentence quality scores and top-fraction selection of weak sentences."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .corpus_io import WeakSentence


@dataclass
class ScoredSentence:
    """A weak sentence plus the per-entity records its score came from."""

    weak: WeakSentence
    entity_records: list[tuple[float, float]]  # (entity alignment score, ner score)

    @property
    def id(self) -> int:
        return self.weak.id

    @property
    def score(self) -> float:
        return self.weak.sentence_score


def entity_alignment_score(word_scores: Sequence[float]) -> float:
    """Arithmetic mean of one entity's target-word alignment scores."""
    if not word_scores:
        raise ValueError("entity has no aligned target words")
    return math.fsum(word_scores) / len(word_scores)


def sentence_score(entity_records: Sequence[tuple[float, float]]) -> float:
    """Mean of ln(alignment score * NER score) over the sentence's entities.

    All inputs live in (0, 1], so the score is always <= 0; higher is
    better.
    """
    if not entity_records:
        raise ValueError("no entities")
    for align, ner in entity_records:
        if not (0.0 < align <= 1.0) or not (0.0 < ner <= 1.0):
            raise ValueError(f"scores out of (0, 1]: ({align}, {ner})")
    return math.fsum(math.log(align * ner) for align, ner in entity_records) / len(
        entity_records
    )


def keep_count(n: int, fraction: float) -> int:
    """ceil(fraction * n), computed exactly for decimal fractions like 0.4."""
    exact = Fraction(fraction).limit_denominator(10**9)
    return math.ceil(exact * n)


def filter_top(
    sentences: Sequence[ScoredSentence], fraction: float
) -> tuple[list[ScoredSentence], list[ScoredSentence]]:
    """Keep the ceil(fraction * N) best-scoring sentences.

    Ranking is by score descending with ties broken toward the smaller
    sentence id; both returned lists are re-sorted by id.
    """
    if not (0.0 < fraction <= 1.0):
        raise ValueError(f"fraction out of (0, 1]: {fraction}")
    ranked = sorted(sentences, key=lambda s: (-s.score, s.id))
    cut = keep_count(len(ranked), fraction)
    kept = sorted(ranked[:cut], key=lambda s: s.id)
    dropped = sorted(ranked[cut:], key=lambda s: s.id)
    return kept, dropped
