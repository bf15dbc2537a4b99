"""End-to-end weak-data generation and its resumable stage artifacts.

The single-shot path (``run_generate``) and the staged subcommands share
the same per-stage cores, so running ``align``, ``project``, ``score``,
``filter`` in order produces byte-identical output to one ``gen`` call.
Stage artifacts are JSON-lines files keyed by sentence id under the
configured work directory:

* ``links.jsonl``      alignment links and uncovered entity words
* ``projected.jsonl``  BIO tags plus per-entity word scores
* ``scored.jsonl``     sentence scores ready for selection
* ``kept.json``        ids selected by the filter stage
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace

from .alignment import AlignmentLink, align_pair, mutual_argmax_align, similarity_matrix
from .corpus_io import (
    EmbeddingSet,
    EntitySpan,
    FormatError,
    SentencePair,
    WeakSentence,
    format_score,
    read_embeddings,
    read_parallel,
    read_source_annotations,
    write_conll,
)
from .projection import check_entity_coverage, project_tags, to_bio
from .scoring import ScoredSentence, entity_alignment_score, filter_top, sentence_score
from .tags import ENTITY_TYPES

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2

LINKS_ARTIFACT = "links.jsonl"
PROJECTED_ARTIFACT = "projected.jsonl"
SCORED_ARTIFACT = "scored.jsonl"
KEPT_ARTIFACT = "kept.json"

STATUS_OK = "ok"
STATUS_ZERO_ENTITY = "zero_entity"
STATUS_DROPPED = "dropped_uncovered"


class PipelineError(Exception):
    """A stage failure carrying the exit code for the CLI."""

    def __init__(self, stage: str, message: str, exit_code: int):
        self.stage = stage
        self.exit_code = exit_code
        super().__init__(f"stage={stage}: {message}")


@dataclass
class PipelineConfig:
    corpus: str | None = None
    annotations: str | None = None
    word_emb: str | None = None
    subword_emb: str | None = None
    out: str | None = None
    workdir: str = "xlner-stages"
    keep_fraction: float = 0.4
    epsilon: float = 1e-6
    tag_set: tuple[str, ...] = ENTITY_TYPES
    drop_uncovered: bool = True


@dataclass
class SentenceAlignment:
    id: int
    zero_entity: bool
    links: list[AlignmentLink] = field(default_factory=list)
    uncovered: list[int] = field(default_factory=list)


@dataclass
class SentenceProjection:
    id: int
    status: str
    tags: list[str] = field(default_factory=list)
    # Per entity: (alignment scores of the target words it kept, NER score).
    entities: list[tuple[list[float], float]] = field(default_factory=list)


@dataclass
class GenerationSummary:
    read: int
    zero_entity: int
    dropped_uncovered: int
    scored: int
    kept: int
    mean_kept_score: float | None

    def lines(self) -> list[str]:
        mean = "n/a" if self.mean_kept_score is None else format_score(self.mean_kept_score)
        return [
            f"sentences read:        {self.read}",
            f"zero-entity excluded:  {self.zero_entity}",
            f"dropped uncovered:     {self.dropped_uncovered}",
            f"scored:                {self.scored}",
            f"kept:                  {self.kept}",
            f"mean sentence score:   {mean} (over kept)",
        ]


_CONFIG_BOOL = {"true": True, "false": False, "1": True, "0": False}


def parse_config_file(path) -> dict[str, str]:
    """Parse a ``key = value`` config file; '#' starts a comment line."""
    values: dict[str, str] = {}
    with open(path, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise FormatError(path, lineno, "expected key=value")
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip()
    return values


def apply_config_values(config: PipelineConfig, values: dict[str, str]) -> PipelineConfig:
    updates = {}
    for key, value in values.items():
        if key in ("corpus", "annotations", "word_emb", "subword_emb", "out", "workdir"):
            updates[key] = value
        elif key in ("keep_fraction", "epsilon"):
            try:
                updates[key] = float(value)
            except ValueError:
                raise ValueError(f"config key {key}: bad number {value!r}") from None
        elif key == "drop_uncovered":
            if value.lower() not in _CONFIG_BOOL:
                raise ValueError(f"config key drop_uncovered: bad boolean {value!r}")
            updates[key] = _CONFIG_BOOL[value.lower()]
        elif key == "tag_set":
            updates[key] = tuple(part.strip() for part in value.split(",") if part.strip())
        else:
            raise ValueError(f"unknown config key {key!r}")
    return replace(config, **updates)


def validate_config(config: PipelineConfig, stage: str) -> None:
    if not (0.0 < config.keep_fraction <= 1.0):
        raise PipelineError(
            stage, f"keep_fraction out of (0, 1]: {config.keep_fraction}", EXIT_VALIDATION
        )
    if not (0.0 < config.epsilon < 1.0):
        raise PipelineError(stage, f"epsilon out of (0, 1): {config.epsilon}", EXIT_VALIDATION)
    if not config.tag_set or any(t not in ENTITY_TYPES for t in config.tag_set):
        raise PipelineError(
            stage, f"tag_set must be a non-empty subset of {ENTITY_TYPES}", EXIT_VALIDATION
        )


def _read_input(reader, path, stage: str, kind: str):
    if not path:
        raise PipelineError(stage, f"no {kind} path configured", EXIT_VALIDATION)
    if not os.path.exists(path):
        raise PipelineError(stage, f"missing {kind} file {path}", EXIT_IO)
    try:
        return reader(path)
    except FormatError as exc:
        raise PipelineError(stage, str(exc), EXIT_VALIDATION) from exc
    except OSError as exc:
        raise PipelineError(stage, f"cannot read {kind} file {path}: {exc}", EXIT_IO) from exc


def _embedding_for(
    embeddings: dict[tuple[int, str], EmbeddingSet],
    pair: SentencePair,
    side: str,
    level: str,
    stage: str,
) -> EmbeddingSet:
    record = embeddings.get((pair.id, side))
    if record is None:
        raise PipelineError(stage, f"missing embeddings for id={pair.id}", EXIT_IO)
    if record.level != level:
        raise PipelineError(
            stage,
            f"embeddings for id={pair.id} side={side} are {record.level}-level, expected {level}",
            EXIT_VALIDATION,
        )
    tokens = pair.src_tokens if side == "src" else pair.tgt_tokens
    if record.word_count() != len(tokens):
        raise PipelineError(
            stage,
            f"embeddings for id={pair.id} side={side} cover {record.word_count()} words "
            f"for {len(tokens)} tokens",
            EXIT_VALIDATION,
        )
    return record


def _validate_spans(pair: SentencePair, spans: list[EntitySpan], config: PipelineConfig, stage: str) -> None:
    for span in spans:
        if span.end > len(pair.src_tokens):
            raise PipelineError(
                stage,
                f"id={pair.id}: span [{span.start}, {span.end}) exceeds "
                f"source length {len(pair.src_tokens)}",
                EXIT_VALIDATION,
            )
        if span.label not in config.tag_set:
            raise PipelineError(
                stage,
                f"id={pair.id}: label {span.label} not in configured tag set",
                EXIT_VALIDATION,
            )


def align_all(
    pairs: list[SentencePair],
    annotations: dict[int, list[EntitySpan]],
    word_embs: dict[tuple[int, str], EmbeddingSet],
    subword_embs: dict[tuple[int, str], EmbeddingSet],
    config: PipelineConfig,
) -> list[SentenceAlignment]:
    """Two-stage alignment of every sentence pair with at least one entity.

    Subword embeddings are only fetched for sentences whose entity words
    stage 1 misses, so records may be absent for the rest.
    """
    stage = "align"
    results = []
    for pair in pairs:
        spans = annotations.get(pair.id, [])
        if not spans:
            results.append(SentenceAlignment(pair.id, zero_entity=True))
            continue
        _validate_spans(pair, spans, config, stage)
        src_word = _embedding_for(word_embs, pair, "src", "word", stage)
        tgt_word = _embedding_for(word_embs, pair, "tgt", "word", stage)
        try:
            word_sim = similarity_matrix(src_word, tgt_word, config.epsilon)
        except ValueError as exc:
            raise PipelineError(stage, f"id={pair.id}: {exc}", EXIT_VALIDATION) from exc
        entity_words = sorted({w for span in spans for w in span.word_indices()})

        stage1 = mutual_argmax_align(word_sim)
        if set(entity_words) - {link.src for link in stage1}:
            src_sub = _embedding_for(subword_embs, pair, "src", "subword", stage)
            tgt_sub = _embedding_for(subword_embs, pair, "tgt", "subword", stage)
            try:
                subword_sim = similarity_matrix(src_sub, tgt_sub, config.epsilon)
                links = align_pair(
                    word_sim, subword_sim, src_sub.word_map, tgt_sub.word_map, entity_words
                )
            except ValueError as exc:
                raise PipelineError(stage, f"id={pair.id}: {exc}", EXIT_VALIDATION) from exc
        else:
            links = stage1
        uncovered = check_entity_coverage(spans, links)
        results.append(SentenceAlignment(pair.id, False, links, uncovered))
    return results


def project_all(
    pairs_by_id: dict[int, SentencePair],
    annotations: dict[int, list[EntitySpan]],
    alignments: list[SentenceAlignment],
    config: PipelineConfig,
) -> list[SentenceProjection]:
    """Project tags for every aligned sentence; mark drops instead of emitting them.

    A sentence is dropped when entity words stayed uncovered (if configured)
    or when conflict resolution left some entity without any target word.
    """
    stage = "project"
    results = []
    for record in alignments:
        pair = pairs_by_id.get(record.id)
        if pair is None:
            raise PipelineError(
                stage, f"stale intermediate: unknown sentence id {record.id}", EXIT_VALIDATION
            )
        if record.zero_entity:
            results.append(SentenceProjection(record.id, STATUS_ZERO_ENTITY))
            continue
        if record.uncovered and config.drop_uncovered:
            results.append(SentenceProjection(record.id, STATUS_DROPPED))
            continue
        spans = annotations.get(record.id, [])
        projected = project_tags(spans, record.links, len(pair.tgt_tokens))
        tags = to_bio(projected)
        entities: list[tuple[list[float], float]] = []
        for index, span in enumerate(spans):
            word_scores = [
                word.alignment_score
                for word in projected
                if word.span_index == index and word.alignment_score is not None
            ]
            if word_scores:
                entities.append((word_scores, span.ner_score))
        if not entities or (config.drop_uncovered and len(entities) < len(spans)):
            # Some entity lost every target word to conflicts: no usable label.
            results.append(SentenceProjection(record.id, STATUS_DROPPED))
            continue
        results.append(SentenceProjection(record.id, STATUS_OK, tags, entities))
    return results


def score_all(
    pairs_by_id: dict[int, SentencePair],
    projections: list[SentenceProjection],
) -> list[ScoredSentence]:
    """Turn every surviving projection into a scored weak sentence."""
    stage = "score"
    scored = []
    for record in projections:
        if record.status != STATUS_OK:
            continue
        pair = pairs_by_id.get(record.id)
        if pair is None:
            raise PipelineError(
                stage, f"stale intermediate: unknown sentence id {record.id}", EXIT_VALIDATION
            )
        entity_records = [
            (entity_alignment_score(word_scores), ner_score)
            for word_scores, ner_score in record.entities
        ]
        score = sentence_score(entity_records)
        weak = WeakSentence(record.id, pair.tgt_tokens, list(record.tags), score)
        scored.append(ScoredSentence(weak, entity_records))
    return scored


def summarize(
    read: int,
    alignments: list[SentenceAlignment],
    projections: list[SentenceProjection],
    scored: list[ScoredSentence],
    kept: list[ScoredSentence],
) -> GenerationSummary:
    mean = None
    if kept:
        mean = sum(s.score for s in kept) / len(kept)
    return GenerationSummary(
        read=read,
        zero_entity=sum(1 for p in projections if p.status == STATUS_ZERO_ENTITY),
        dropped_uncovered=sum(1 for p in projections if p.status == STATUS_DROPPED),
        scored=len(scored),
        kept=len(kept),
        mean_kept_score=mean,
    )


def load_corpus_inputs(config: PipelineConfig, stage: str):
    pairs = _read_input(read_parallel, config.corpus, stage, "corpus")
    annotations = _read_input(read_source_annotations, config.annotations, stage, "annotations")
    return pairs, annotations


def run_generate(config: PipelineConfig) -> GenerationSummary:
    """Single-shot align -> project -> score -> filter -> write."""
    validate_config(config, "gen")
    if not config.out:
        raise PipelineError("gen", "no output path configured", EXIT_VALIDATION)
    pairs, annotations = load_corpus_inputs(config, "align")
    word_embs = _read_input(read_embeddings, config.word_emb, "align", "word embeddings")
    subword_embs = _read_input(
        read_embeddings, config.subword_emb, "align", "subword embeddings"
    )
    alignments = align_all(pairs, annotations, word_embs, subword_embs, config)
    pairs_by_id = {pair.id: pair for pair in pairs}
    projections = project_all(pairs_by_id, annotations, alignments, config)
    scored = score_all(pairs_by_id, projections)
    kept, _ = filter_top(scored, config.keep_fraction)
    _write_output([s.weak for s in kept], config.out, "filter")
    return summarize(len(pairs), alignments, projections, scored, kept)


def _write_output(sentences: list[WeakSentence], path, stage: str) -> None:
    try:
        write_conll(sentences, path)
    except OSError as exc:
        raise PipelineError(stage, f"cannot write {path}: {exc}", EXIT_IO) from exc


# ---------------------------------------------------------------------------
# Stage artifact serialization.

def _artifact_path(config: PipelineConfig, name: str) -> str:
    return os.path.join(config.workdir, name)


def _write_jsonl(path, records) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for record in records:
            handle.write(json.dumps(record) + "\n")


def _read_jsonl(path, stage: str):
    if not os.path.exists(path):
        raise PipelineError(
            stage,
            f"missing intermediate file {path} (run the previous stage first)",
            EXIT_IO,
        )
    records = []
    with open(path, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise PipelineError(
                    stage, f"corrupt intermediate {path} line {lineno}: {exc}", EXIT_VALIDATION
                ) from exc
    return records


def _alignment_to_record(alignment: SentenceAlignment) -> dict:
    return {
        "id": alignment.id,
        "zero_entity": alignment.zero_entity,
        "links": [
            {"src": l.src, "tgt": l.tgt, "score": l.score, "method": l.method}
            for l in alignment.links
        ],
        "uncovered": alignment.uncovered,
    }


def _alignment_from_record(record: dict, stage: str) -> SentenceAlignment:
    try:
        return SentenceAlignment(
            id=int(record["id"]),
            zero_entity=bool(record["zero_entity"]),
            links=[
                AlignmentLink(int(l["src"]), int(l["tgt"]), float(l["score"]), str(l["method"]))
                for l in record["links"]
            ],
            uncovered=[int(w) for w in record["uncovered"]],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise PipelineError(stage, f"corrupt links record: {exc}", EXIT_VALIDATION) from exc


def _projection_to_record(projection: SentenceProjection) -> dict:
    record = {"id": projection.id, "status": projection.status}
    if projection.status == STATUS_OK:
        record["tags"] = projection.tags
        record["entities"] = [
            {"word_scores": word_scores, "ner_score": ner_score}
            for word_scores, ner_score in projection.entities
        ]
    return record


def _projection_from_record(record: dict, stage: str) -> SentenceProjection:
    try:
        status = str(record["status"])
        projection = SentenceProjection(int(record["id"]), status)
        if status == STATUS_OK:
            projection.tags = [str(t) for t in record["tags"]]
            projection.entities = [
                ([float(s) for s in entity["word_scores"]], float(entity["ner_score"]))
                for entity in record["entities"]
            ]
        return projection
    except (KeyError, TypeError, ValueError) as exc:
        raise PipelineError(stage, f"corrupt projection record: {exc}", EXIT_VALIDATION) from exc


def run_align_stage(config: PipelineConfig, pharaoh_path=None) -> list[SentenceAlignment]:
    validate_config(config, "align")
    pairs, annotations = load_corpus_inputs(config, "align")
    word_embs = _read_input(read_embeddings, config.word_emb, "align", "word embeddings")
    subword_embs = _read_input(
        read_embeddings, config.subword_emb, "align", "subword embeddings"
    )
    alignments = align_all(pairs, annotations, word_embs, subword_embs, config)
    _write_jsonl(
        _artifact_path(config, LINKS_ARTIFACT),
        (_alignment_to_record(a) for a in alignments),
    )
    if pharaoh_path:
        _write_pharaoh(alignments, pharaoh_path)
    return alignments


def _write_pharaoh(alignments: list[SentenceAlignment], path) -> None:
    """Debug dump: per sentence, space-joined ``src-tgt:score:method`` links."""
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for alignment in alignments:
            links = " ".join(
                f"{l.src}-{l.tgt}:{l.score:.6f}:{l.method}" for l in alignment.links
            )
            handle.write(f"{alignment.id}\t{links}\n")


def run_project_stage(config: PipelineConfig) -> list[SentenceProjection]:
    validate_config(config, "project")
    stage = "project"
    pairs, annotations = load_corpus_inputs(config, stage)
    records = _read_jsonl(_artifact_path(config, LINKS_ARTIFACT), stage)
    alignments = [_alignment_from_record(r, stage) for r in records]
    _check_complete(pairs, {a.id for a in alignments}, stage, LINKS_ARTIFACT)
    pairs_by_id = {pair.id: pair for pair in pairs}
    projections = project_all(pairs_by_id, annotations, alignments, config)
    _write_jsonl(
        _artifact_path(config, PROJECTED_ARTIFACT),
        (_projection_to_record(p) for p in projections),
    )
    return projections


def _check_complete(pairs: list[SentencePair], artifact_ids: set[int], stage: str, name: str) -> None:
    missing = [pair.id for pair in pairs if pair.id not in artifact_ids]
    if missing:
        raise PipelineError(
            stage,
            f"stale intermediate {name}: no record for id={missing[0]}",
            EXIT_VALIDATION,
        )


def run_score_stage(config: PipelineConfig) -> list[ScoredSentence]:
    validate_config(config, "score")
    stage = "score"
    pairs, _ = load_corpus_inputs(config, stage)
    records = _read_jsonl(_artifact_path(config, PROJECTED_ARTIFACT), stage)
    projections = [_projection_from_record(r, stage) for r in records]
    _check_complete(pairs, {p.id for p in projections}, stage, PROJECTED_ARTIFACT)
    pairs_by_id = {pair.id: pair for pair in pairs}
    scored = score_all(pairs_by_id, projections)
    _write_jsonl(
        _artifact_path(config, SCORED_ARTIFACT),
        (
            {
                "id": s.id,
                "score": s.score,
                "tags": s.weak.tags,
                "entity_records": [[a, n] for a, n in s.entity_records],
            }
            for s in scored
        ),
    )
    return scored


def run_filter_stage(config: PipelineConfig) -> tuple[list[ScoredSentence], list[ScoredSentence]]:
    validate_config(config, "filter")
    stage = "filter"
    if not config.out:
        raise PipelineError(stage, "no output path configured", EXIT_VALIDATION)
    pairs, _ = load_corpus_inputs(config, stage)
    pairs_by_id = {pair.id: pair for pair in pairs}
    records = _read_jsonl(_artifact_path(config, SCORED_ARTIFACT), stage)
    scored = []
    for record in records:
        try:
            record_id = int(record["id"])
            score = float(record["score"])
            tags = [str(t) for t in record["tags"]]
            entity_records = [(float(a), float(n)) for a, n in record["entity_records"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise PipelineError(stage, f"corrupt scored record: {exc}", EXIT_VALIDATION) from exc
        pair = pairs_by_id.get(record_id)
        if pair is None:
            raise PipelineError(
                stage, f"stale intermediate: unknown sentence id {record_id}", EXIT_VALIDATION
            )
        weak = WeakSentence(record_id, pair.tgt_tokens, tags, score)
        scored.append(ScoredSentence(weak, entity_records))
    kept, dropped = filter_top(scored, config.keep_fraction)
    _write_output([s.weak for s in kept], config.out, stage)
    kept_path = _artifact_path(config, KEPT_ARTIFACT)
    os.makedirs(os.path.dirname(kept_path) or ".", exist_ok=True)
    with open(kept_path, "w", encoding="utf-8", newline="\n") as handle:
        json.dump({"kept_ids": [s.id for s in kept], "scored": len(scored)}, handle)
        handle.write("\n")
    return kept, dropped
