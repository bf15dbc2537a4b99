"""Cross-lingual weak NER data generation and teacher-student distillation.

Align parallel sentences through multilingual embeddings, project source
entity annotations onto the target side, score and filter the projections
into weakly labeled CoNLL training data, and train against the joint
teacher-student objective with verifiable gradients.
"""

from .alignment import (
    AlignmentLink,
    align_pair,
    cosine_matrix,
    mutual_argmax_align,
    similarity_matrix,
    solve_max_weight_matching,
    subword_to_word_links,
)
from .corpus_io import (
    EmbeddingSet,
    EntitySpan,
    FormatError,
    SentencePair,
    WeakSentence,
    read_conll,
    read_embeddings,
    read_parallel,
    read_source_annotations,
    write_conll,
)
from .distill import (
    LossBreakdown,
    ToyStudent,
    batch_joint_loss,
    joint_loss,
    joint_loss_gradient,
    mse_loss,
    nll_loss,
    read_teacher_distributions,
    train_toy_student,
)
from .pipeline import GenerationSummary, PipelineConfig, PipelineError, run_generate
from .projection import ProjectedWord, check_entity_coverage, project_tags, to_bio
from .scoring import ScoredSentence, entity_alignment_score, filter_top, sentence_score
from .tags import ENTITY_TYPES, N_TAGS, TAG_TO_INDEX, TAGSET

__version__ = "0.1.0"

__all__ = [
    "AlignmentLink",
    "EmbeddingSet",
    "EntitySpan",
    "FormatError",
    "GenerationSummary",
    "LossBreakdown",
    "PipelineConfig",
    "PipelineError",
    "ProjectedWord",
    "ScoredSentence",
    "SentencePair",
    "ToyStudent",
    "WeakSentence",
    "align_pair",
    "batch_joint_loss",
    "check_entity_coverage",
    "cosine_matrix",
    "entity_alignment_score",
    "filter_top",
    "joint_loss",
    "joint_loss_gradient",
    "mse_loss",
    "mutual_argmax_align",
    "nll_loss",
    "project_tags",
    "read_conll",
    "read_embeddings",
    "read_parallel",
    "read_source_annotations",
    "read_teacher_distributions",
    "run_generate",
    "sentence_score",
    "similarity_matrix",
    "solve_max_weight_matching",
    "subword_to_word_links",
    "to_bio",
    "train_toy_student",
    "write_conll",
    "ENTITY_TYPES",
    "N_TAGS",
    "TAGSET",
    "TAG_TO_INDEX",
]
