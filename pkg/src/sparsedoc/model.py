"""Attention pooling over entity embeddings and document classification.

Every entity embedding gets a scalar score from one shared linear layer; the
softmax of the scores weights a convex combination of the embeddings into a
single document embedding, which a linear+softmax layer turns into class
probabilities.  Training minimizes label-smoothed cross-entropy, optionally
plus a binary cross-entropy term that pushes sigmoid(score) toward expert
relevant/irrelevant annotations on the entities that have one.

Probabilities are clamped at 1e-12 before any log so saturated predictions
keep losses finite.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import ValidationError
from .filtering import FilteredDocument, Route

LOG_CLAMP = 1e-12


@dataclass(frozen=True, slots=True)
class HeadParams:
    classes: tuple[str, ...]
    w_s: np.ndarray  # (d,) shared scorer weight
    b_s: np.ndarray  # (1,) shared scorer bias
    w_c: np.ndarray  # (C, d) classifier weight
    b_c: np.ndarray  # (C,) classifier bias

    def __post_init__(self) -> None:
        C = len(self.classes)
        if C < 2:
            raise ValidationError("need at least 2 classes")
        if len(set(self.classes)) != C:
            raise ValidationError("duplicate class names")
        d = self.w_s.shape[0]
        if self.w_s.shape != (d,) or self.b_s.shape != (1,) or self.w_c.shape != (C, d) or self.b_c.shape != (C,):
            raise ValidationError(
                f"inconsistent head shapes: w_s {self.w_s.shape}, b_s {self.b_s.shape}, "
                f"w_c {self.w_c.shape}, b_c {self.b_c.shape}"
            )

    @property
    def dim(self) -> int:
        return self.w_s.shape[0]

    def as_dict(self) -> dict[str, np.ndarray]:
        return {"w_s": self.w_s, "b_s": self.b_s, "w_c": self.w_c, "b_c": self.b_c}

    def with_params(self, arrays: dict[str, np.ndarray]) -> "HeadParams":
        return HeadParams(classes=self.classes, **arrays)


def init_head(dim: int, classes: Sequence[str], seed: int) -> HeadParams:
    """Xavier-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    lim_s = math.sqrt(6.0 / (dim + 1))
    lim_c = math.sqrt(6.0 / (dim + len(classes)))
    return HeadParams(
        classes=tuple(classes),
        w_s=rng.uniform(-lim_s, lim_s, size=dim),
        b_s=np.zeros(1),
        w_c=rng.uniform(-lim_c, lim_c, size=(len(classes), dim)),
        b_c=np.zeros(len(classes)),
    )


@dataclass(frozen=True, slots=True)
class DocPrediction:
    scores: np.ndarray
    weights: np.ndarray
    doc_embedding: np.ndarray
    probs: np.ndarray
    predicted_index: int

    def label(self, classes: Sequence[str]) -> str:
        return classes[self.predicted_index]


def score_entities(embeddings: np.ndarray, head: HeadParams) -> np.ndarray:
    if embeddings.ndim != 2 or embeddings.shape[0] == 0:
        raise ValidationError(f"expected non-empty (n, d) embeddings, got shape {embeddings.shape}")
    if embeddings.shape[1] != head.dim:
        raise ValidationError(f"embedding dim {embeddings.shape[1]} != head dim {head.dim}")
    return embeddings @ head.w_s + head.b_s[0]


def attention_weights(scores: np.ndarray) -> np.ndarray:
    if scores.size == 0:
        raise ValidationError("no scores")
    if not np.all(np.isfinite(scores)):
        raise ValidationError("non-finite entity score")
    e = np.exp(scores - scores.max())
    return e / e.sum()


def pool(embeddings: np.ndarray, weights: np.ndarray) -> np.ndarray:
    if embeddings.shape[0] != weights.shape[0]:
        raise ValidationError(f"{embeddings.shape[0]} embeddings vs {weights.shape[0]} weights")
    return weights @ embeddings


def classify(doc_embedding: np.ndarray, head: HeadParams) -> np.ndarray:
    logits = head.w_c @ doc_embedding + head.b_c
    e = np.exp(logits - logits.max())
    return e / e.sum()


def doc_forward(embeddings: np.ndarray, head: HeadParams) -> DocPrediction:
    scores = score_entities(embeddings, head)
    weights = attention_weights(scores)
    z = pool(embeddings, weights)
    probs = classify(z, head)
    return DocPrediction(
        scores=scores,
        weights=weights,
        doc_embedding=z,
        probs=probs,
        predicted_index=int(np.argmax(probs)),
    )


def smoothed_target(n_classes: int, gold_index: int, smoothing: float) -> np.ndarray:
    if not 0 <= smoothing < 1:
        raise ValidationError(f"smoothing {smoothing} outside [0, 1)")
    if not 0 <= gold_index < n_classes:
        raise ValidationError(f"gold index {gold_index} outside 0..{n_classes - 1}")
    q = np.full(n_classes, smoothing / n_classes)
    q[gold_index] += 1.0 - smoothing
    return q


def classification_loss(probs: np.ndarray, gold_index: int, smoothing: float) -> float:
    q = smoothed_target(len(probs), gold_index, smoothing)
    return float(-(q * np.log(np.maximum(probs, LOG_CLAMP))).sum())


def relevance_loss(scores: np.ndarray, annotations: Sequence[bool | None]) -> float:
    """Mean BCE between sigmoid(score) and the expert flag, over annotated
    entities only; 0.0 when nothing is annotated."""
    if len(annotations) != len(scores):
        raise ValidationError(f"{len(scores)} scores vs {len(annotations)} annotations")
    idx = [i for i, a in enumerate(annotations) if a is not None]
    if not idx:
        return 0.0
    r = np.clip(expit(scores[idx]), LOG_CLAMP, 1.0 - LOG_CLAMP)
    a = np.array([float(annotations[i]) for i in idx])
    return float(-(a * np.log(r) + (1.0 - a) * np.log(1.0 - r)).mean())


@dataclass(slots=True)
class HeadCache:
    embeddings: np.ndarray
    scores: np.ndarray
    weights: np.ndarray
    doc_embedding: np.ndarray
    probs: np.ndarray
    target: np.ndarray
    rel_index: np.ndarray
    rel_target: np.ndarray
    rel_prob: np.ndarray
    lam: float


def head_forward(
    embeddings: np.ndarray,
    gold_index: int,
    annotations: Sequence[bool | None],
    head: HeadParams,
    smoothing: float,
    lam: float,
) -> tuple[float, HeadCache]:
    """Total loss (cross-entropy + lam * relevance BCE) with the forward cache
    head_backward needs."""
    pred = doc_forward(embeddings, head)
    target = smoothed_target(len(head.classes), gold_index, smoothing)
    loss = float(-(target * np.log(np.maximum(pred.probs, LOG_CLAMP))).sum())
    idx = np.array([i for i, a in enumerate(annotations) if a is not None], dtype=np.int64)
    rel_target = np.array([float(annotations[i]) for i in idx])
    rel_prob = np.clip(expit(pred.scores[idx]), LOG_CLAMP, 1.0 - LOG_CLAMP) if len(idx) else np.empty(0)
    if len(idx) and lam != 0.0:
        bce = -(rel_target * np.log(rel_prob) + (1.0 - rel_target) * np.log(1.0 - rel_prob)).mean()
        loss += lam * float(bce)
    cache = HeadCache(
        embeddings=embeddings,
        scores=pred.scores,
        weights=pred.weights,
        doc_embedding=pred.doc_embedding,
        probs=pred.probs,
        target=target,
        rel_index=idx,
        rel_target=rel_target,
        rel_prob=rel_prob,
        lam=lam,
    )
    return loss, cache


def head_backward(cache: HeadCache, head: HeadParams) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """Exact reverse-mode gradients of the cached loss: parameter grads keyed
    like HeadParams.as_dict(), plus d(loss)/d(embedding) for the encoder."""
    du = cache.probs - cache.target  # d loss / d logits
    grad_w_c = np.outer(du, cache.doc_embedding)
    grad_b_c = du.copy()
    dz = head.w_c.T @ du
    dW = cache.embeddings @ dz
    dS = cache.weights * (dW - float(cache.weights @ dW))
    if cache.lam != 0.0 and len(cache.rel_index):
        dS[cache.rel_index] += cache.lam * (cache.rel_prob - cache.rel_target) / len(cache.rel_index)
    grad_w_s = cache.embeddings.T @ dS
    grad_b_s = np.array([dS.sum()])
    dembeddings = np.outer(cache.weights, dz) + np.outer(dS, head.w_s)
    return {"w_s": grad_w_s, "b_s": grad_b_s, "w_c": grad_w_c, "b_c": grad_b_c}, dembeddings


def total_loss(
    fdoc: FilteredDocument,
    gold_index: int,
    embeddings: np.ndarray,
    head: HeadParams,
    smoothing: float,
    lam: float,
) -> float:
    """Loss for one routed document; rejects case-A documents, which are never
    trained on."""
    if fdoc.route is Route.CASE_A:
        raise ValidationError(f"document {fdoc.doc_id} routed to case_a; nothing to train")
    annotations = [e.relevance for e in fdoc.entities]
    loss, _ = head_forward(embeddings, gold_index, annotations, head, smoothing, lam)
    return loss
