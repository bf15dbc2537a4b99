"""Propagate source entity labels to target words across alignment links."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .alignment import AlignmentLink
from .corpus_io import EntitySpan
from .tags import OUTSIDE, type_rank


@dataclass(frozen=True)
class ProjectedWord:
    """Label decision for one target word.

    ``span_index`` points into the sentence's span list and is the
    reference back to the originating entity; it is None exactly when the
    label is O, as is ``alignment_score``.
    """

    tgt_index: int
    label: str
    alignment_score: float | None = None
    span_index: int | None = None


def project_tags(
    spans: Sequence[EntitySpan],
    links: Sequence[AlignmentLink],
    tgt_len: int,
) -> list[ProjectedWord]:
    """Assign each target word the label carried over its best link.

    Every target word linked to a source word inside a span receives that
    span's label. When several candidates compete, the highest link score
    wins; ties fall to the smaller source word index, then to the fixed
    PER < ORG < LOC < MISC order. Unlinked words and words linked only to
    non-entity source words stay O. Deterministic and independent of link
    input order.
    """
    span_of_src: dict[int, int] = {}
    for index, span in enumerate(spans):
        for word in span.word_indices():
            span_of_src[word] = index

    # tgt word -> (sort key, winning candidate)
    best: dict[int, tuple[tuple[float, int, int], tuple[float, int]]] = {}
    for link in links:
        span_index = span_of_src.get(link.src)
        if span_index is None:
            continue
        if not (0 <= link.tgt < tgt_len):
            raise ValueError(f"link target {link.tgt} out of range for length {tgt_len}")
        key = (-link.score, link.src, type_rank(spans[span_index].label))
        kept = best.get(link.tgt)
        if kept is None or key < kept[0]:
            best[link.tgt] = (key, (link.score, span_index))

    projected = []
    for tgt_index in range(tgt_len):
        kept = best.get(tgt_index)
        if kept is None:
            projected.append(ProjectedWord(tgt_index, OUTSIDE))
        else:
            score, span_index = kept[1]
            projected.append(
                ProjectedWord(tgt_index, spans[span_index].label, score, span_index)
            )
    return projected


def to_bio(projected: Sequence[ProjectedWord]) -> list[str]:
    """Rebuild a valid BIO sequence from per-word label decisions.

    A maximal run of consecutive words carrying the same originating span
    becomes B-X, I-X, ...; adjacent runs from different spans each restart
    at B-X. Target-side contiguity alone decides boundaries because word
    order need not survive translation.
    """
    tags = []
    prev_span: int | None = None
    for word in projected:
        if word.label == OUTSIDE:
            tags.append(OUTSIDE)
            prev_span = None
        elif word.span_index is not None and word.span_index == prev_span:
            tags.append(f"I-{word.label}")
        else:
            tags.append(f"B-{word.label}")
            prev_span = word.span_index
    return tags


def check_entity_coverage(
    spans: Sequence[EntitySpan], links: Sequence[AlignmentLink]
) -> list[int]:
    """Source entity word indices that no link covers, in increasing order."""
    linked = {link.src for link in links}
    uncovered = []
    for span in spans:
        for word in span.word_indices():
            if word not in linked:
                uncovered.append(word)
    return sorted(uncovered)
