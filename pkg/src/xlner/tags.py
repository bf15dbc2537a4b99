"""Tag inventory and BIO utilities for the four-type entity scheme."""

from __future__ import annotations

from typing import Sequence

ENTITY_TYPES = ("PER", "ORG", "LOC", "MISC")
OUTSIDE = "O"

# Canonical tag order. Index positions double as class indices for the
# distillation losses and the teacher-distribution file format.
TAGSET = (OUTSIDE,) + tuple(
    f"{prefix}-{etype}" for etype in ENTITY_TYPES for prefix in ("B", "I")
)
TAG_TO_INDEX = {tag: i for i, tag in enumerate(TAGSET)}
N_TAGS = len(TAGSET)

_TYPE_RANK = {etype: i for i, etype in enumerate(ENTITY_TYPES)}


def type_rank(entity_type: str) -> int:
    """Position of an entity type in the fixed PER < ORG < LOC < MISC order."""
    return _TYPE_RANK[entity_type]


def bio_violation(tags: Sequence[str]) -> int | None:
    """Return the index of the first BIO violation, or None if valid.

    A violation is an unknown tag or an I-X whose predecessor is neither
    B-X nor I-X of the same type.
    """
    prev = OUTSIDE
    for i, tag in enumerate(tags):
        if tag not in TAG_TO_INDEX:
            return i
        if tag.startswith("I-"):
            etype = tag[2:]
            if prev != f"B-{etype}" and prev != f"I-{etype}":
                return i
        prev = tag
    return None


def validate_bio(tags: Sequence[str]) -> None:
    i = bio_violation(tags)
    if i is not None:
        raise ValueError(f"invalid BIO sequence at position {i}: {tags[i]!r}")
