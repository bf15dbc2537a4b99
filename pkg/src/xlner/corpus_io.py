"""Readers and writers for the toolkit's on-disk formats.

All files are UTF-8 with ``\\n`` line endings.

* Parallel corpus: one pair per line, ``id<TAB>source<TAB>target``,
  tokens space-joined on each side. Empty lines are skipped.
* Source annotations: JSON lines, e.g.
  ``{"id": 0, "spans": [{"start": 0, "end": 1, "label": "PER", "score": 0.97}]}``
  with half-open ``[start, end)`` word spans.
* Embeddings: JSON lines, e.g.
  ``{"id": 0, "side": "src", "level": "word", "vectors": [[...], ...], "word_map": null}``.
  Subword-level records carry a ``word_map`` from subword index to word index.
* Weak CoNLL output: per sentence a ``# id=<id> score=<score>`` header
  (score printed with six decimals), ``token<TAB>tag`` lines, then one
  blank line.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

import numpy as np

from .tags import ENTITY_TYPES, bio_violation

EMBEDDING_SIDES = ("src", "tgt")
EMBEDDING_LEVELS = ("word", "subword")


class FormatError(ValueError):
    """A file did not conform to one of the formats above."""

    def __init__(self, path, line: int | None, message: str):
        self.path = str(path)
        self.line = line
        where = f"{path}: line {line}" if line is not None else str(path)
        super().__init__(f"{where}: {message}")


@dataclass(frozen=True)
class SentencePair:
    """One source/target translation pair with pre-tokenized text."""

    id: int
    src_tokens: tuple[str, ...]
    tgt_tokens: tuple[str, ...]


@dataclass(frozen=True)
class EntitySpan:
    """A detected source entity: half-open word span, label, NER confidence."""

    start: int
    end: int
    label: str
    ner_score: float

    def word_indices(self) -> range:
        return range(self.start, self.end)


@dataclass(frozen=True)
class EmbeddingSet:
    """Per-token vectors for one sentence side, at word or subword level."""

    level: str
    vectors: np.ndarray  # n x d, finite, nonzero row norms
    word_map: tuple[int, ...] | None = None

    def word_count(self) -> int:
        if self.level == "word":
            return int(self.vectors.shape[0])
        assert self.word_map is not None
        return self.word_map[-1] + 1


@dataclass
class WeakSentence:
    """Target tokens with projected BIO tags and the sentence quality score."""

    id: int
    tgt_tokens: tuple[str, ...]
    tags: list[str]
    sentence_score: float


def validate_weak_sentence(sentence: WeakSentence) -> None:
    if len(sentence.tags) != len(sentence.tgt_tokens):
        raise ValueError(
            f"sentence {sentence.id}: {len(sentence.tags)} tags for "
            f"{len(sentence.tgt_tokens)} tokens"
        )
    i = bio_violation(sentence.tags)
    if i is not None:
        raise ValueError(
            f"sentence {sentence.id}: invalid BIO tag {sentence.tags[i]!r} at position {i}"
        )
    if sentence.sentence_score > 0:
        raise ValueError(f"sentence {sentence.id}: positive sentence score")


def read_parallel(path) -> list[SentencePair]:
    """Parse a tab-separated parallel corpus, preserving file order."""
    pairs: list[SentencePair] = []
    seen: set[int] = set()
    with open(path, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise FormatError(
                    path, lineno, f"expected 3 fields (got {len(fields)})"
                )
            id_text, src_text, tgt_text = fields
            try:
                pair_id = int(id_text)
            except ValueError:
                raise FormatError(path, lineno, f"bad sentence id {id_text!r}") from None
            if pair_id < 0:
                raise FormatError(path, lineno, f"negative sentence id {pair_id}")
            if pair_id in seen:
                raise FormatError(path, lineno, f"duplicate sentence id {pair_id}")
            seen.add(pair_id)
            src_tokens = tuple(src_text.split(" "))
            tgt_tokens = tuple(tgt_text.split(" "))
            for side, tokens in (("source", src_tokens), ("target", tgt_tokens)):
                if not tokens or any(tok == "" for tok in tokens):
                    raise FormatError(path, lineno, f"empty {side} token")
            pairs.append(SentencePair(pair_id, src_tokens, tgt_tokens))
    return pairs


def _parse_span(record_spans, path, lineno) -> list[EntitySpan]:
    spans = []
    for raw in record_spans:
        try:
            start = int(raw["start"])
            end = int(raw["end"])
            label = str(raw["label"])
            score = float(raw["score"])
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(path, lineno, f"malformed span record: {exc}") from None
        if label not in ENTITY_TYPES:
            raise FormatError(path, lineno, f"unknown entity label {label!r}")
        if not (0.0 < score <= 1.0):
            raise FormatError(path, lineno, f"ner_score out of range: {score}")
        if not (0 <= start < end):
            raise FormatError(path, lineno, f"bad span bounds [{start}, {end})")
        spans.append(EntitySpan(start, end, label, score))
    spans.sort(key=lambda s: s.start)
    for prev, cur in zip(spans, spans[1:]):
        if cur.start < prev.end:
            raise FormatError(
                path, lineno,
                f"overlapping spans [{prev.start}, {prev.end}) and [{cur.start}, {cur.end})",
            )
    return spans


def read_source_annotations(path) -> dict[int, list[EntitySpan]]:
    """Parse source-side entity annotations keyed by sentence id.

    Sentences absent from the file simply have no record; callers treat
    missing ids as empty span lists.
    """
    annotations: dict[int, list[EntitySpan]] = {}
    with open(path, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(path, lineno, f"bad JSON: {exc}") from None
            try:
                record_id = int(record["id"])
                record_spans = record["spans"]
            except (KeyError, TypeError, ValueError) as exc:
                raise FormatError(path, lineno, f"malformed record: {exc}") from None
            if record_id in annotations:
                raise FormatError(path, lineno, f"duplicate sentence id {record_id}")
            annotations[record_id] = _parse_span(record_spans, path, lineno)
    return annotations


def _parse_word_map(raw_map, n_rows, path, lineno) -> tuple[int, ...]:
    if not isinstance(raw_map, list) or not raw_map:
        raise FormatError(path, lineno, "subword record requires a non-empty word_map")
    if len(raw_map) != n_rows:
        raise FormatError(
            path, lineno,
            f"word_map length {len(raw_map)} does not match {n_rows} vectors",
        )
    word_map = []
    for value in raw_map:
        if not isinstance(value, int) or value < 0:
            raise FormatError(path, lineno, f"bad word_map entry {value!r}")
        word_map.append(value)
    if word_map[0] != 0:
        raise FormatError(path, lineno, "word_map must start at word 0")
    for prev, cur in zip(word_map, word_map[1:]):
        if cur < prev or cur > prev + 1:
            raise FormatError(
                path, lineno, "word_map must be monotone and cover every word"
            )
    return tuple(word_map)


def read_embeddings(path) -> dict[tuple[int, str], EmbeddingSet]:
    """Parse an embeddings file into a map keyed by (sentence id, side)."""
    embeddings: dict[tuple[int, str], EmbeddingSet] = {}
    dim: int | None = None
    with open(path, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(path, lineno, f"bad JSON: {exc}") from None
            try:
                record_id = int(record["id"])
                side = record["side"]
                level = record["level"]
                rows = record["vectors"]
            except (KeyError, TypeError, ValueError) as exc:
                raise FormatError(path, lineno, f"malformed record: {exc}") from None
            if side not in EMBEDDING_SIDES:
                raise FormatError(path, lineno, f"unknown side {side!r}")
            if level not in EMBEDDING_LEVELS:
                raise FormatError(path, lineno, f"unknown level {level!r}")
            if (record_id, side) in embeddings:
                raise FormatError(
                    path, lineno, f"duplicate record for id={record_id} side={side}"
                )
            if not isinstance(rows, list) or not rows:
                raise FormatError(path, lineno, "vectors must be a non-empty list")
            widths = {len(row) for row in rows}
            if len(widths) != 1:
                raise FormatError(path, lineno, "dimension mismatch across rows")
            vectors = np.asarray(rows, dtype=float)
            if dim is None:
                dim = vectors.shape[1]
            elif vectors.shape[1] != dim:
                raise FormatError(
                    path, lineno,
                    f"dimension {vectors.shape[1]} differs from file dimension {dim}",
                )
            if not np.all(np.isfinite(vectors)):
                raise FormatError(path, lineno, "non-finite embedding value")
            if np.any(np.linalg.norm(vectors, axis=1) == 0.0):
                raise FormatError(path, lineno, "zero-norm embedding row")
            word_map = None
            if level == "subword":
                word_map = _parse_word_map(
                    record.get("word_map"), vectors.shape[0], path, lineno
                )
            elif record.get("word_map") is not None:
                raise FormatError(path, lineno, "word-level record carries a word_map")
            embeddings[(record_id, side)] = EmbeddingSet(level, vectors, word_map)
    return embeddings


def format_score(score: float) -> str:
    # +0.0 so that a negative zero never prints as "-0.000000".
    return f"{score + 0.0:.6f}"


def write_conll(sentences: list[WeakSentence], path) -> None:
    """Write weakly labeled sentences as CoNLL blocks; byte-deterministic."""
    for sentence in sentences:
        validate_weak_sentence(sentence)
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for sentence in sentences:
            handle.write(
                f"# id={sentence.id} score={format_score(sentence.sentence_score)}\n"
            )
            for token, tag in zip(sentence.tgt_tokens, sentence.tags):
                handle.write(f"{token}\t{tag}\n")
            handle.write("\n")


_CONLL_HEADER = re.compile(r"^# id=(\d+) score=(-?\d+\.\d{6})$")


def read_conll(path) -> list[WeakSentence]:
    """Re-parse a weak CoNLL file written by :func:`write_conll`."""
    sentences: list[WeakSentence] = []
    current: WeakSentence | None = None
    with open(path, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.rstrip("\n")
            if line.startswith("#"):
                match = _CONLL_HEADER.match(line)
                if match is None:
                    raise FormatError(path, lineno, f"bad header {line!r}")
                if current is not None:
                    raise FormatError(path, lineno, "header inside sentence block")
                current = WeakSentence(int(match.group(1)), (), [], float(match.group(2)))
            elif line == "":
                if current is None:
                    raise FormatError(path, lineno, "blank line outside a sentence")
                validate_weak_sentence(current)
                sentences.append(current)
                current = None
            else:
                fields = line.split("\t")
                if len(fields) != 2:
                    raise FormatError(path, lineno, "expected token<TAB>tag")
                if current is None:
                    raise FormatError(path, lineno, "token line before header")
                current.tgt_tokens = current.tgt_tokens + (fields[0],)
                current.tags.append(fields[1])
    if current is not None:
        raise FormatError(path, None, "unterminated final sentence block")
    return sentences
