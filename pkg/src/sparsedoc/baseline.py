"""Whole-document TF-IDF + multinomial logistic regression baseline.

Preprocessing lowercases, drops punctuation and stopwords, and applies a small
rule-based suffix stripper (stemming stand-in, rules documented on
``stem_token``).  The classifier is plain full-batch gradient descent on the
multinomial cross-entropy with L2 regularization, zero-initialized, so fits
are deterministic.
"""

from __future__ import annotations

from collections import Counter
from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np

from .corpus import DocumentSet, tokenize
from .errors import ValidationError
from .train import CrossvalResult, FoldOutcome, compute_metrics, kfold_split

_EN_RULES = (("ing", 6), ("ed", 5), ("es", 5), ("s", 4))
_FR_RULES = (("aux", 5), ("x", 4), ("s", 4))


def stem_token(token: str, language: str = "en") -> str:
    """Strip one inflectional suffix.

    English: -ing (word length >= 6), -ed (>= 5), -es (>= 5), -s (>= 4, but
    never -ss).  French: -aux becomes -al (>= 5), then -x (>= 4), -s (>= 4).
    First matching rule wins; at most one suffix is removed.
    """
    if language == "en":
        for suffix, min_len in _EN_RULES:
            if len(token) >= min_len and token.endswith(suffix):
                if suffix == "s" and token.endswith("ss"):
                    continue
                return token[: -len(suffix)]
        return token
    if language == "fr":
        if len(token) >= 5 and token.endswith("aux"):
            return token[:-3] + "al"
        for suffix, min_len in _FR_RULES[1:]:
            if len(token) >= min_len and token.endswith(suffix):
                return token[: -len(suffix)]
        return token
    raise ValidationError(f"unsupported language {language!r}")


def preprocess(text: str, stopwords: frozenset[str] = frozenset(), language: str = "en") -> list[str]:
    """Lowercased, punctuation-free, stopword-free, suffix-stripped tokens."""
    out = []
    for token in tokenize(text):
        norm = token.norm
        if not norm[0].isalnum():
            continue
        if norm in stopwords:
            continue
        out.append(stem_token(norm, language))
    return out


class TfidfModel:
    """tf = raw count; idf = ln((1+n)/(1+df)) + 1; vectors L2-normalized.

    The vocabulary comes from the fitting documents only; unseen words are
    ignored at transform time.
    """

    def __init__(self) -> None:
        self.vocabulary: dict[str, int] | None = None
        self.idf: np.ndarray | None = None
        self.df: np.ndarray | None = None

    def fit(self, documents: Sequence[Sequence[str]]) -> "TfidfModel":
        if not documents:
            raise ValidationError("cannot fit on zero documents")
        words = sorted({w for doc in documents for w in doc})
        self.vocabulary = {w: i for i, w in enumerate(words)}
        df = np.zeros(len(words))
        for doc in documents:
            for w in set(doc):
                df[self.vocabulary[w]] += 1
        self.df = df
        self.idf = np.log((1.0 + len(documents)) / (1.0 + df)) + 1.0
        return self

    def transform(self, document: Sequence[str]) -> np.ndarray:
        if self.vocabulary is None:
            raise ValidationError("transform called before fit")
        vec = np.zeros(len(self.vocabulary))
        for w, count in Counter(document).items():
            i = self.vocabulary.get(w)
            if i is not None:
                vec[i] = count
        vec *= self.idf
        norm = np.linalg.norm(vec)
        return vec / norm if norm > 0 else vec

    def transform_all(self, documents: Sequence[Sequence[str]]) -> np.ndarray:
        return np.array([self.transform(d) for d in documents])


@dataclass(slots=True)
class LRParams:
    classes: tuple[str, ...]
    weights: np.ndarray  # (C, V)
    bias: np.ndarray  # (C,)
    l2: float


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    e = np.exp(logits - logits.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def lr_train(
    vectors: np.ndarray,
    labels: Sequence[str],
    l2: float = 1e-4,
    learning_rate: float = 0.1,
    iterations: int = 500,
) -> LRParams:
    """Full-batch gradient descent from zero weights; deterministic."""
    classes = tuple(sorted(set(labels)))
    if len(classes) < 2:
        raise ValidationError(f"need at least 2 classes in the training labels, got {classes}")
    if vectors.shape[0] != len(labels):
        raise ValidationError(f"{vectors.shape[0]} vectors vs {len(labels)} labels")
    index = {c: i for i, c in enumerate(classes)}
    n, V = vectors.shape
    onehot = np.zeros((n, len(classes)))
    onehot[np.arange(n), [index[y] for y in labels]] = 1.0
    W = np.zeros((len(classes), V))
    b = np.zeros(len(classes))
    for _ in range(iterations):
        probs = _softmax_rows(vectors @ W.T + b)
        err = probs - onehot
        W -= learning_rate * (err.T @ vectors / n + l2 * W)
        b -= learning_rate * err.mean(axis=0)
    return LRParams(classes=classes, weights=W, bias=b, l2=l2)


def lr_predict(params: LRParams, vector: np.ndarray) -> str:
    logits = params.weights @ vector + params.bias
    return params.classes[int(np.argmax(logits))]


def lr_predict_all(params: LRParams, vectors: np.ndarray) -> list[str]:
    logits = vectors @ params.weights.T + params.bias
    return [params.classes[i] for i in np.argmax(logits, axis=1)]


def baseline_cross_validate(
    corpus: DocumentSet,
    classes: Sequence[str],
    seed: int = 0,
    k: int = 5,
    stopwords: frozenset[str] = frozenset(),
    language: str = "en",
    preprocessor: Callable[[str], list[str]] | None = None,
) -> CrossvalResult:
    """Same fold protocol as the hierarchical model (identical seed gives
    identical test folds); the baseline has no early stopping, so each fold
    fits on train+validation together."""
    prep = preprocessor or (lambda text: preprocess(text, stopwords, language))
    tokens = {doc.id: prep(doc.text) for doc in corpus}
    gold = {doc.id: doc.label for doc in corpus}
    for doc_id, label in gold.items():
        if label is None:
            raise ValidationError(f"document {doc_id} has no gold label")
    split = kfold_split(list(corpus.ids), k=k, seed=seed)
    outcomes = []
    for f, fold in enumerate(split.folds):
        fit_ids = list(fold.train_ids) + list(fold.val_ids)
        tfidf = TfidfModel().fit([tokens[i] for i in fit_ids])
        params = lr_train(tfidf.transform_all([tokens[i] for i in fit_ids]), [gold[i] for i in fit_ids])
        predicted = lr_predict_all(params, tfidf.transform_all([tokens[i] for i in fold.test_ids]))
        metrics = compute_metrics([gold[i] for i in fold.test_ids], predicted, classes)
        outcomes.append(FoldOutcome(fold=f, metrics=metrics, best_epoch=0, epochs_run=0))
    return CrossvalResult(
        folds=tuple(outcomes),
        mean_accuracy=sum(o.metrics.accuracy for o in outcomes) / k,
        mean_balanced_accuracy=sum(o.metrics.balanced_accuracy for o in outcomes) / k,
    )
