"""Embedding-based word alignment.

Stage 1 links mutually-best word pairs under normalized cosine similarity.
Stage 2 recovers entity words missed by stage 1 through a maximum-weight
bipartite matching over subword similarities, folded back to word level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .corpus_io import EmbeddingSet

MUTUAL = "mutual"
MATCH_FALLBACK = "match_fallback"

# Weight slack treated as a tie when picking among optimal matchings.
# Similarity entries live in [0, 1], so accumulated float error on any
# matching weight is orders of magnitude below this.
_WEIGHT_TOL = 1e-9


@dataclass(frozen=True)
class AlignmentLink:
    """One (source word, target word) link with its similarity score."""

    src: int
    tgt: int
    score: float
    method: str


def cosine_matrix(src: EmbeddingSet, tgt: EmbeddingSet) -> np.ndarray:
    """Raw cosine similarity between every source and target vector."""
    if src.level != tgt.level:
        raise ValueError(f"mixed embedding levels: {src.level} vs {tgt.level}")
    if src.vectors.shape[1] != tgt.vectors.shape[1]:
        raise ValueError(
            f"dimension mismatch: {src.vectors.shape[1]} vs {tgt.vectors.shape[1]}"
        )
    return _normalize_rows(src.vectors) @ _normalize_rows(tgt.vectors).T


def _normalize_rows(vectors: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise ValueError("zero-norm embedding vector")
    return vectors / norms


def similarity_matrix(
    src: EmbeddingSet, tgt: EmbeddingSet, epsilon: float = 1e-6
) -> np.ndarray:
    """Cosine similarity mapped affinely onto [epsilon, 1].

    The (cos+1)/2 map is strictly monotone, so argmax decisions match those
    on raw cosine; the epsilon floor keeps downstream log-scores finite.
    """
    sim = (cosine_matrix(src, tgt) + 1.0) / 2.0
    return np.clip(sim, epsilon, 1.0)


def mutual_argmax_align(sim: np.ndarray) -> list[AlignmentLink]:
    """Link (i, j) iff j is row i's best column and i is column j's best row.

    Argmax ties resolve to the smaller index on both axes. Works on any
    finite real matrix; the result is a partial matching sorted by
    (src, tgt).
    """
    sim = np.asarray(sim, dtype=float)
    if sim.size == 0:
        return []
    row_best = np.argmax(sim, axis=1)  # first occurrence == smallest index
    col_best = np.argmax(sim, axis=0)
    links = []
    for i, j in enumerate(row_best):
        if col_best[j] == i:
            links.append(AlignmentLink(i, int(j), float(sim[i, j]), MUTUAL))
    return links


def _matching_weight(sim: np.ndarray, rows: Sequence[int], cols: Sequence[int]) -> float:
    return math.fsum(float(sim[r, c]) for r, c in zip(rows, cols))


def _best_remaining_weight(
    sim: np.ndarray, used_rows: set[int], used_cols: set[int]
) -> float:
    rows = [r for r in range(sim.shape[0]) if r not in used_rows]
    cols = [c for c in range(sim.shape[1]) if c not in used_cols]
    if not rows or not cols:
        return 0.0
    sub = sim[np.ix_(rows, cols)]
    r_idx, c_idx = linear_sum_assignment(sub, maximize=True)
    return _matching_weight(sub, r_idx, c_idx)


def solve_max_weight_matching(sim: np.ndarray) -> list[AlignmentLink]:
    """Maximum-weight bipartite matching over a non-negative score matrix.

    Among equal-weight optima the lexicographically smallest link list
    (ordered by (src, tgt)) is returned: rows are committed in order, each
    to the smallest column that still permits an optimal completion, and
    the search stops as soon as the committed links reach the optimum, so
    zero-weight links are never appended to an already-optimal matching.
    """
    sim = np.asarray(sim, dtype=float)
    if sim.size == 0:
        return []
    if np.any(sim < 0.0):
        raise ValueError("similarity entries must be non-negative")
    best_total = _best_remaining_weight(sim, set(), set())

    links: list[AlignmentLink] = []
    used_cols: set[int] = set()
    committed = 0.0
    for row in range(sim.shape[0]):
        if committed >= best_total - _WEIGHT_TOL:
            break
        used_rows = set(range(row + 1))
        for col in range(sim.shape[1]):
            if col in used_cols:
                continue
            candidate = committed + float(sim[row, col])
            achievable = candidate + _best_remaining_weight(
                sim, used_rows, used_cols | {col}
            )
            if achievable >= best_total - _WEIGHT_TOL:
                links.append(
                    AlignmentLink(row, col, float(sim[row, col]), MATCH_FALLBACK)
                )
                used_cols.add(col)
                committed = math.fsum(link.score for link in links)
                break
    return links


def subword_to_word_links(
    links: Sequence[AlignmentLink],
    src_map: Sequence[int],
    tgt_map: Sequence[int],
) -> list[AlignmentLink]:
    """Fold subword-level links up to word level.

    A word pair is linked iff some subword link maps to it; its score is
    the maximum among contributing subword links.
    """
    best: dict[tuple[int, int], AlignmentLink] = {}
    for link in links:
        src_word = src_map[link.src]
        tgt_word = tgt_map[link.tgt]
        key = (src_word, tgt_word)
        kept = best.get(key)
        if kept is None or link.score > kept.score:
            best[key] = AlignmentLink(src_word, tgt_word, link.score, link.method)
    return [best[key] for key in sorted(best)]


def align_pair(
    word_sim: np.ndarray,
    subword_sim: np.ndarray | None,
    src_map: Sequence[int] | None,
    tgt_map: Sequence[int] | None,
    entity_word_indices: Sequence[int],
) -> list[AlignmentLink]:
    """Two-stage alignment for one sentence pair.

    Stage 1 is the mutual-argmax alignment on word similarities. If any
    entity word is left uncovered, stage 2 solves the subword matching and
    adds only those folded word links whose source is an uncovered entity
    word and whose target no stage-1 link already occupies. Stage-1 links
    are never removed or rescored.
    """
    stage1 = mutual_argmax_align(word_sim)
    covered = {link.src for link in stage1}
    uncovered = set(entity_word_indices) - covered
    if not uncovered:
        return stage1

    if subword_sim is None or src_map is None or tgt_map is None:
        raise ValueError("subword similarities required to recover entity words")
    stage1_tgts = {link.tgt for link in stage1}
    merged = {(link.src, link.tgt): link for link in stage1}
    fallback = subword_to_word_links(
        solve_max_weight_matching(subword_sim), src_map, tgt_map
    )
    for link in fallback:
        if link.src not in uncovered or link.tgt in stage1_tgts:
            continue
        merged.setdefault((link.src, link.tgt), link)
    return [merged[key] for key in sorted(merged)]
