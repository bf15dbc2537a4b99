"""Teacher-student joint objective with analytic, checkable gradients.

The objective for one sentence is MSE between the teacher's and student's
per-token tag distributions plus the NLL of the weak labels under the
student; batches average per-sentence values. A linear-softmax toy student
trained by full-batch gradient descent exercises the loss end to end at
desk scale.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .tags import N_TAGS

PROB_CLAMP = 1e-12
DISTRIBUTION_ATOL = 1e-6


class TrainingDivergedError(RuntimeError):
    def __init__(self, epoch: int, loss: float):
        self.epoch = epoch
        super().__init__(f"loss became non-finite at epoch {epoch}: {loss}")


@dataclass(frozen=True)
class LossBreakdown:
    mse: float
    nll: float

    @property
    def total(self) -> float:
        return self.mse + self.nll


@dataclass
class ToyStudent:
    """Per-token linear-softmax tagger over fixed input features."""

    weights: np.ndarray  # n_tags x dim
    bias: np.ndarray  # n_tags

    def logits(self, features: np.ndarray) -> np.ndarray:
        return features @ self.weights.T + self.bias

    def probs(self, features: np.ndarray) -> np.ndarray:
        return softmax(self.logits(features))


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax, shift-stabilized."""
    logits = np.asarray(logits, dtype=float)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def validate_tag_distribution(probs: np.ndarray, n_tags: int | None = None) -> None:
    probs = np.asarray(probs, dtype=float)
    if probs.ndim != 2:
        raise ValueError(f"expected tokens x tags matrix, got shape {probs.shape}")
    if n_tags is not None and probs.shape[1] != n_tags:
        raise ValueError(f"expected {n_tags} tag classes, got {probs.shape[1]}")
    if np.any(probs < 0.0) or not np.all(np.isfinite(probs)):
        raise ValueError("distribution entries must be finite and non-negative")
    sums = probs.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > DISTRIBUTION_ATOL):
        worst = int(np.argmax(np.abs(sums - 1.0)))
        raise ValueError(f"token {worst} distribution sums to {sums[worst]}")


def mse_loss(teach: np.ndarray, stud: np.ndarray) -> float:
    """Mean over all tokens and tag classes of the squared difference."""
    teach = np.asarray(teach, dtype=float)
    stud = np.asarray(stud, dtype=float)
    if teach.shape != stud.shape:
        raise ValueError(f"shape mismatch: {teach.shape} vs {stud.shape}")
    return float(np.mean((teach - stud) ** 2))


def nll_loss(stud: np.ndarray, weak_tags: Sequence[int]) -> float:
    """Mean over tokens of -ln of the student probability at the weak tag."""
    stud = np.asarray(stud, dtype=float)
    if len(weak_tags) != stud.shape[0]:
        raise ValueError(f"{len(weak_tags)} weak tags for {stud.shape[0]} tokens")
    tags = np.asarray(weak_tags, dtype=int)
    if np.any(tags < 0) or np.any(tags >= stud.shape[1]):
        raise ValueError("weak tag index out of range")
    picked = stud[np.arange(stud.shape[0]), tags]
    return float(np.mean(-np.log(np.maximum(picked, PROB_CLAMP))))


def joint_loss(
    teach: np.ndarray, stud: np.ndarray, weak_tags: Sequence[int]
) -> LossBreakdown:
    """MSE plus NLL for one sentence."""
    return LossBreakdown(mse_loss(teach, stud), nll_loss(stud, weak_tags))


def batch_joint_loss(
    sentences: Sequence[tuple[np.ndarray, np.ndarray, Sequence[int]]],
) -> LossBreakdown:
    """Average the per-sentence components over a batch of (teach, stud, weak)."""
    if not sentences:
        raise ValueError("empty batch")
    parts = [joint_loss(teach, stud, weak) for teach, stud, weak in sentences]
    n = len(parts)
    return LossBreakdown(
        sum(p.mse for p in parts) / n,
        sum(p.nll for p in parts) / n,
    )


def joint_loss_gradient(
    student_logits: np.ndarray, teach: np.ndarray, weak_tags: Sequence[int]
) -> np.ndarray:
    """Gradient of the joint loss w.r.t. the student's per-token logits.

    The student distribution is softmax(logits) row-wise. Tokens whose
    weak-tag probability sits below the clamp contribute no NLL gradient,
    matching the clamped loss exactly.
    """
    logits = np.asarray(student_logits, dtype=float)
    teach = np.asarray(teach, dtype=float)
    if logits.shape != teach.shape:
        raise ValueError(f"shape mismatch: {logits.shape} vs {teach.shape}")
    n_tokens, n_classes = logits.shape
    tags = np.asarray(weak_tags, dtype=int)
    if tags.shape != (n_tokens,):
        raise ValueError(f"{tags.size} weak tags for {n_tokens} tokens")
    if np.any(tags < 0) or np.any(tags >= n_classes):
        raise ValueError("weak tag index out of range")

    probs = softmax(logits)
    diff = probs - teach
    # d(mse)/dz via the softmax Jacobian: p * (diff - <diff, p>) scaled by 2/(L*C).
    grad_mse = (2.0 / (n_tokens * n_classes)) * probs * (
        diff - (diff * probs).sum(axis=1, keepdims=True)
    )
    onehot = np.zeros_like(probs)
    onehot[np.arange(n_tokens), tags] = 1.0
    active = (probs[np.arange(n_tokens), tags] >= PROB_CLAMP).astype(float)
    grad_nll = (probs - onehot) * active[:, None] / n_tokens
    return grad_mse + grad_nll


def finite_difference_gradient(
    student_logits: np.ndarray,
    teach: np.ndarray,
    weak_tags: Sequence[int],
    step: float = 1e-5,
) -> np.ndarray:
    """Central finite differences of the joint loss over each logit."""
    logits = np.asarray(student_logits, dtype=float)
    grad = np.zeros_like(logits)
    for index in np.ndindex(*logits.shape):
        plus = logits.copy()
        minus = logits.copy()
        plus[index] += step
        minus[index] -= step
        loss_plus = joint_loss(teach, softmax(plus), weak_tags).total
        loss_minus = joint_loss(teach, softmax(minus), weak_tags).total
        grad[index] = (loss_plus - loss_minus) / (2.0 * step)
    return grad


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Elementwise relative error with a small floor against 0/0."""
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-6)
    return float(np.max(np.abs(analytic - numeric) / denom))


def gradient_check(
    trials: int = 100,
    seed: int = 0,
    step: float = 1e-5,
    min_tokens: int = 3,
    max_tokens: int = 10,
    n_tags: int = N_TAGS,
) -> float:
    """Max relative error between analytic and numeric gradients over random instances."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        n_tokens = int(rng.integers(min_tokens, max_tokens + 1))
        logits = rng.normal(0.0, 2.0, size=(n_tokens, n_tags))
        teach = rng.uniform(0.05, 1.0, size=(n_tokens, n_tags))
        teach /= teach.sum(axis=1, keepdims=True)
        weak = rng.integers(0, n_tags, size=n_tokens)
        analytic = joint_loss_gradient(logits, teach, weak)
        numeric = finite_difference_gradient(logits, teach, weak, step)
        worst = max(worst, max_relative_error(analytic, numeric))
    return worst


def train_toy_student(
    features: np.ndarray,
    teach: np.ndarray,
    weak_tags: Sequence[int],
    lr: float,
    epochs: int,
    seed: int,
) -> tuple[ToyStudent, list[float]]:
    """Full-batch gradient descent of the joint loss on one token batch.

    Weights and bias initialize uniformly in [-0.1, 0.1] from the seed,
    which is the run's only randomness. The trace records the total loss
    after each epoch's update; a non-finite loss aborts with the epoch
    number.
    """
    features = np.asarray(features, dtype=float)
    teach = np.asarray(teach, dtype=float)
    if features.ndim != 2:
        raise ValueError(f"expected tokens x dim features, got shape {features.shape}")
    if teach.shape[0] != features.shape[0]:
        raise ValueError(
            f"{teach.shape[0]} teacher rows for {features.shape[0]} tokens"
        )
    if lr < 0:
        raise ValueError("learning rate must be non-negative")
    if epochs < 1:
        raise ValueError("epochs must be >= 1")

    n_tags = teach.shape[1]
    rng = np.random.default_rng(seed)
    student = ToyStudent(
        weights=rng.uniform(-0.1, 0.1, size=(n_tags, features.shape[1])),
        bias=rng.uniform(-0.1, 0.1, size=n_tags),
    )
    trace: list[float] = []
    for epoch in range(1, epochs + 1):
        grad = joint_loss_gradient(student.logits(features), teach, weak_tags)
        student.weights -= lr * (grad.T @ features)
        student.bias -= lr * grad.sum(axis=0)
        loss = joint_loss(teach, student.probs(features), weak_tags).total
        if not np.isfinite(loss):
            raise TrainingDivergedError(epoch, loss)
        trace.append(loss)
    return student, trace


def read_teacher_distributions(path) -> dict[int, np.ndarray]:
    """Parse a teacher-distribution file: one ``{"id", "probs"}`` JSON per line."""
    from .corpus_io import FormatError

    teachers: dict[int, np.ndarray] = {}
    with open(path, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                record_id = int(record["id"])
                probs = np.asarray(record["probs"], dtype=float)
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise FormatError(path, lineno, f"malformed record: {exc}") from None
            if record_id in teachers:
                raise FormatError(path, lineno, f"duplicate sentence id {record_id}")
            try:
                validate_tag_distribution(probs, N_TAGS)
            except ValueError as exc:
                raise FormatError(path, lineno, str(exc)) from None
            teachers[record_id] = probs
    return teachers
