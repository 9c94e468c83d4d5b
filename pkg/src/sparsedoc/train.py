"""AdamW training with gradient accumulation, early stopping, k-fold
cross-validation, and accuracy/balanced-accuracy metrics.

Only case-B documents produce gradients; case-A documents take the default
label at evaluation time and are excluded from training batches.  Gradients
are averaged over each accumulation group of ``batch_size`` documents, so one
optimizer step sees the mean document gradient regardless of group size.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .corpus import DocumentSet, tokenize
from .encoder import (
    EncoderConfig,
    TrainableEncoderProvider,
    build_token_vocab,
    zero_grads,
)
from .errors import NumericsError, ValidationError
from .filtering import FilteredDocument, Route
from .model import HeadParams, doc_forward, head_backward, head_forward, init_head

_HEAD_KEYS = ("w_s", "b_s", "w_c", "b_c")


@dataclass(frozen=True, slots=True)
class TrainConfig:
    learning_rate: float = 2e-5
    batch_size: int = 4
    patience: int = 5
    smoothing: float = 0.1
    lam: float | None = None  # None: 1.0 when any annotation is present, else 0.0
    max_epochs: int = 50
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01

    def __post_init__(self) -> None:
        if self.learning_rate <= 0 or self.batch_size < 1 or self.max_epochs < 1:
            raise ValidationError("learning rate, batch size, and max epochs must be positive")
        if self.patience < 1:
            raise ValidationError("patience must be at least 1")
        if not 0 <= self.smoothing < 1:
            raise ValidationError("smoothing must lie in [0, 1)")
        if self.lam is not None and self.lam < 0:
            raise ValidationError("lam must be non-negative")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1 and self.eps > 0 and self.weight_decay >= 0):
            raise ValidationError("bad optimizer constants")


@dataclass(slots=True)
class OptimizerState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0


def init_optimizer(params: dict[str, np.ndarray]) -> OptimizerState:
    return OptimizerState(m=zero_grads(params), v=zero_grads(params))


def adamw_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: OptimizerState,
    cfg: TrainConfig,
) -> tuple[dict[str, np.ndarray], OptimizerState]:
    """One decoupled-weight-decay Adam step; returns fresh parameter arrays.

    The step is aborted (state untouched) if any gradient is non-finite.
    """
    for key, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericsError(f"non-finite gradient in {key} at step {state.step + 1}")
    state.step += 1
    t = state.step
    bc1 = 1.0 - cfg.beta1**t
    bc2 = 1.0 - cfg.beta2**t
    updated = {}
    for key, theta in params.items():
        g = grads[key]
        m = state.m[key] = cfg.beta1 * state.m[key] + (1.0 - cfg.beta1) * g
        v = state.v[key] = cfg.beta2 * state.v[key] + (1.0 - cfg.beta2) * g * g
        updated[key] = theta - cfg.learning_rate * ((m / bc1) / (np.sqrt(v / bc2) + cfg.eps) + cfg.weight_decay * theta)
    return updated, state


# -- metrics


@dataclass(frozen=True, slots=True)
class Metrics:
    classes: tuple[str, ...]
    accuracy: float
    balanced_accuracy: float
    per_class_recall: tuple[float | None, ...]  # None for classes absent from gold
    confusion: tuple[tuple[int, ...], ...]  # rows gold, columns predicted

    def to_dict(self) -> dict:
        return {
            "classes": list(self.classes),
            "accuracy": self.accuracy,
            "balanced_accuracy": self.balanced_accuracy,
            "per_class_recall": list(self.per_class_recall),
            "confusion": [list(row) for row in self.confusion],
        }


def compute_metrics(gold: Sequence[str], predicted: Sequence[str], classes: Sequence[str]) -> Metrics:
    """Accuracy and mean per-class recall, in plain Python arithmetic.

    Balanced accuracy averages recall over the classes that actually occur in
    gold, so a class the dataset lacks cannot drag the mean to zero.
    """
    if not gold:
        raise ValidationError("no gold labels")
    if len(gold) != len(predicted):
        raise ValidationError(f"{len(gold)} gold labels vs {len(predicted)} predictions")
    index = {c: i for i, c in enumerate(classes)}
    n_cls = len(index)
    confusion = [[0] * n_cls for _ in range(n_cls)]
    for g, p in zip(gold, predicted):
        if g not in index:
            raise ValidationError(f"gold label {g!r} not in classes {tuple(classes)}")
        if p not in index:
            raise ValidationError(f"predicted label {p!r} not in classes {tuple(classes)}")
        confusion[index[g]][index[p]] += 1
    correct = sum(confusion[i][i] for i in range(n_cls))
    per_class: list[float | None] = []
    recalls = []
    for i in range(n_cls):
        row_total = sum(confusion[i])
        if row_total == 0:
            per_class.append(None)
        else:
            r = confusion[i][i] / row_total
            per_class.append(r)
            recalls.append(r)
    return Metrics(
        classes=tuple(classes),
        accuracy=correct / len(gold),
        balanced_accuracy=sum(recalls) / len(recalls),
        per_class_recall=tuple(per_class),
        confusion=tuple(tuple(row) for row in confusion),
    )


# -- fold construction


@dataclass(frozen=True, slots=True)
class Fold:
    train_ids: tuple[str, ...]
    val_ids: tuple[str, ...]
    test_ids: tuple[str, ...]


@dataclass(frozen=True, slots=True)
class FoldSplit:
    folds: tuple[Fold, ...]


def kfold_split(doc_ids: Sequence[str], k: int = 5, seed: int = 0) -> FoldSplit:
    """Seeded shuffle, round-robin test folds, per-fold 80/20 train/val split.

    Test folds are disjoint and jointly cover every id.
    """
    ids = list(doc_ids)
    if k < 2:
        raise ValidationError("k must be at least 2")
    if k > len(ids):
        raise ValidationError(f"k={k} exceeds {len(ids)} documents")
    rng = np.random.default_rng(seed)
    shuffled = [ids[i] for i in rng.permutation(len(ids))]
    folds = []
    for f in range(k):
        test = tuple(shuffled[f::k])
        rest = [i for i in shuffled if i not in set(test)]
        fold_rng = np.random.default_rng([seed, f])
        order = [rest[i] for i in fold_rng.permutation(len(rest))]
        n_val = max(1, round(0.2 * len(order)))
        if n_val >= len(order):
            raise ValidationError(f"fold {f}: not enough documents for a train/val split")
        folds.append(Fold(train_ids=tuple(order[n_val:]), val_ids=tuple(order[:n_val]), test_ids=test))
    return FoldSplit(folds=tuple(folds))


# -- prediction and evaluation on routed documents


def predict_filtered(fdoc: FilteredDocument, provider, head: HeadParams, default_label: str) -> str:
    if fdoc.route is Route.CASE_A:
        return default_label
    emb = provider.embed(fdoc.entities)
    return head.classes[doc_forward(emb, head).predicted_index]


def evaluate_filtered(
    filtered: Sequence[FilteredDocument],
    corpus: DocumentSet,
    provider,
    head: HeadParams,
    default_label: str,
    classes: Sequence[str],
) -> Metrics:
    gold = [_gold_label(corpus, f.doc_id) for f in filtered]
    predicted = [predict_filtered(f, provider, head, default_label) for f in filtered]
    return compute_metrics(gold, predicted, classes)


def _gold_label(corpus: DocumentSet, doc_id: str) -> str:
    label = corpus[doc_id].label
    if label is None:
        raise ValidationError(f"document {doc_id} has no gold label")
    return label


# -- training


@dataclass(frozen=True, slots=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_accuracy: float
    val_balanced_accuracy: float

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "train_loss": self.train_loss,
            "val_accuracy": self.val_accuracy,
            "val_balanced_accuracy": self.val_balanced_accuracy,
        }


@dataclass(slots=True)
class TrainResult:
    head: HeadParams
    encoder_params: dict[str, np.ndarray] | None
    history: tuple[EpochRecord, ...]
    best_epoch: int
    best_val_balanced_accuracy: float
    lam: float
    annotated_entities: int


def effective_lambda(cfg: TrainConfig, train_docs: Sequence[FilteredDocument]) -> float:
    if cfg.lam is not None:
        return cfg.lam
    annotated = any(e.relevance is not None for f in train_docs for e in f.entities)
    return 1.0 if annotated else 0.0


def train_model(
    train_docs: Sequence[FilteredDocument],
    val_docs: Sequence[FilteredDocument],
    corpus: DocumentSet,
    classes: Sequence[str],
    provider,
    cfg: TrainConfig,
    default_label: str,
) -> TrainResult:
    """Optimize head (and encoder, when the provider is trainable) on case-B
    training documents; keep the checkpoint with the best validation balanced
    accuracy; stop after ``patience`` epochs without improvement."""
    if not train_docs or not val_docs:
        raise ValidationError("train and validation sets must be non-empty")
    classes = tuple(classes)
    trainable = [f for f in train_docs if f.route is Route.CASE_B]
    if not trainable:
        raise ValidationError("nothing trainable: every training document routed to case_a")
    lam = effective_lambda(cfg, trainable)
    gold_index = {f.doc_id: classes.index(_gold_label(corpus, f.doc_id)) for f in trainable}
    for f in val_docs:
        _gold_label(corpus, f.doc_id)

    head = init_head(provider.dim, classes, seed=cfg.seed)
    train_encoder = getattr(provider, "trainable", False)
    params: dict[str, np.ndarray] = {f"head.{k}": v for k, v in head.as_dict().items()}
    if train_encoder:
        params.update({f"enc.{k}": v for k, v in provider.params.items()})
    opt = init_optimizer(params)
    rng = np.random.default_rng(cfg.seed)

    annotated_entities = sum(1 for f in trainable for e in f.entities if e.relevance is not None)
    best_head, best_enc = head, dict(provider.params) if train_encoder else None
    best_metric, best_epoch = -math.inf, 0
    history: list[EpochRecord] = []

    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(trainable))
        epoch_loss = 0.0
        for group_start in range(0, len(order), cfg.batch_size):
            group = [trainable[j] for j in order[group_start : group_start + cfg.batch_size]]
            scale = 1.0 / len(group)
            head_grads = {k: np.zeros_like(v) for k, v in head.as_dict().items()}
            enc_grads = zero_grads(provider.params) if train_encoder else None
            for fdoc in group:
                annotations = [e.relevance for e in fdoc.entities]
                if train_encoder:
                    emb, ecache = provider.embed_with_cache(fdoc.entities)
                else:
                    emb = provider.embed(fdoc.entities)
                loss, hcache = head_forward(emb, gold_index[fdoc.doc_id], annotations, head, cfg.smoothing, lam)
                epoch_loss += loss
                hg, demb = head_backward(hcache, head)
                for k in _HEAD_KEYS:
                    head_grads[k] += scale * hg[k]
                if train_encoder:
                    provider.backward(ecache, scale * demb, enc_grads)
            grads = {f"head.{k}": v for k, v in head_grads.items()}
            if train_encoder:
                grads.update({f"enc.{k}": v for k, v in enc_grads.items()})
            params, opt = adamw_step(params, grads, opt, cfg)
            head = head.with_params({k: params[f"head.{k}"] for k in _HEAD_KEYS})
            if train_encoder:
                provider.params = {k[len("enc.") :]: v for k, v in params.items() if k.startswith("enc.")}

        val = evaluate_filtered(val_docs, corpus, provider, head, default_label, classes)
        history.append(
            EpochRecord(
                epoch=epoch,
                train_loss=epoch_loss / len(trainable),
                val_accuracy=val.accuracy,
                val_balanced_accuracy=val.balanced_accuracy,
            )
        )
        if val.balanced_accuracy > best_metric:
            best_metric, best_epoch = val.balanced_accuracy, epoch
            best_head = head
            best_enc = dict(provider.params) if train_encoder else None
        if epoch - best_epoch >= cfg.patience:
            break

    if train_encoder:
        provider.params = best_enc
    return TrainResult(
        head=best_head,
        encoder_params=dict(best_enc) if train_encoder else None,
        history=tuple(history),
        best_epoch=best_epoch,
        best_val_balanced_accuracy=best_metric,
        lam=lam,
        annotated_entities=annotated_entities,
    )


# -- cross-validation


@dataclass(slots=True)
class FoldOutcome:
    fold: int
    metrics: Metrics
    best_epoch: int
    epochs_run: int


@dataclass(slots=True)
class CrossvalResult:
    folds: tuple[FoldOutcome, ...]
    mean_accuracy: float
    mean_balanced_accuracy: float

    def to_dict(self) -> dict:
        return {
            "folds": [
                {
                    "fold": o.fold,
                    "best_epoch": o.best_epoch,
                    "epochs_run": o.epochs_run,
                    **o.metrics.to_dict(),
                }
                for o in self.folds
            ],
            "mean": {
                "accuracy": self.mean_accuracy,
                "balanced_accuracy": self.mean_balanced_accuracy,
            },
        }


def default_provider_factory(
    corpus: DocumentSet,
    *,
    dim: int = 64,
    layers: int = 2,
    heads: int = 4,
    max_len: int = 128,
    min_freq: int = 2,
) -> Callable[[Sequence[str], int], TrainableEncoderProvider]:
    """Per-fold factory: token vocabulary from the fold's training documents
    only, encoder freshly initialized from the training seed."""

    def make(train_ids: Sequence[str], seed: int) -> TrainableEncoderProvider:
        vocab = build_token_vocab(
            ([t.norm for t in tokenize(corpus[i].text)] for i in train_ids), min_freq=min_freq
        )
        config = EncoderConfig(vocab_size=vocab.size, dim=dim, layers=layers, heads=heads, max_len=max_len)
        return TrainableEncoderProvider(config, vocab, seed=seed)

    return make


def cross_validate(
    filtered: Sequence[FilteredDocument],
    corpus: DocumentSet,
    classes: Sequence[str],
    default_label: str,
    provider_factory: Callable[[Sequence[str], int], object],
    cfg: TrainConfig,
    k: int = 5,
    threads: int = 1,
) -> CrossvalResult:
    """Round-robin k-fold protocol; fold results are collected in fold order
    so reports are reproducible regardless of thread count."""
    by_id = {f.doc_id: f for f in filtered}
    split = kfold_split([f.doc_id for f in filtered], k=k, seed=cfg.seed)

    def run_fold(f: int) -> FoldOutcome:
        fold = split.folds[f]
        provider = provider_factory(fold.train_ids, cfg.seed)
        result = train_model(
            [by_id[i] for i in fold.train_ids],
            [by_id[i] for i in fold.val_ids],
            corpus,
            classes,
            provider,
            cfg,
            default_label,
        )
        metrics = evaluate_filtered(
            [by_id[i] for i in fold.test_ids], corpus, provider, result.head, default_label, classes
        )
        return FoldOutcome(fold=f, metrics=metrics, best_epoch=result.best_epoch, epochs_run=len(result.history))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(run_fold, range(k)))
    else:
        outcomes = [run_fold(f) for f in range(k)]
    return CrossvalResult(
        folds=tuple(outcomes),
        mean_accuracy=sum(o.metrics.accuracy for o in outcomes) / k,
        mean_balanced_accuracy=sum(o.metrics.balanced_accuracy for o in outcomes) / k,
    )
