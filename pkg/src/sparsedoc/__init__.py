"""Classify long documents whose label hangs on a few sentences.

The pipeline: match target terms to pick candidate sentences, embed each
matched entity with a small contextual encoder, pool entities with learned
attention, and classify the pooled vector.  Documents with no match take a
default label.  An optional second loss trains the attention scores against
expert relevance annotations collected over HTTP.
"""

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .corpus import Document, DocumentSet, Sentence, Token, load_corpus, save_corpus, segment, tokenize
from .encoder import (
    EncoderConfig,
    PrecomputedProvider,
    TokenVocab,
    TrainableEncoderProvider,
    build_token_vocab,
    encode,
    init_encoder,
    window_truncate,
)
from .errors import NumericsError, ParseError, SparsedocError, ValidationError
from .filtering import Entity, FilteredDocument, Route, apply_annotations, filter_corpus, find_entities
from .model import HeadParams, classification_loss, doc_forward, init_head, relevance_loss, total_loss
from .train import (
    CrossvalResult,
    Metrics,
    TrainConfig,
    TrainResult,
    compute_metrics,
    cross_validate,
    kfold_split,
    train_model,
)
from .vocab import TargetTerm, VocabList, expand_from_seed, load_stopwords, load_vocab, save_vocab

__version__ = "0.1.0"

__all__ = [
    "Checkpoint",
    "CrossvalResult",
    "Document",
    "DocumentSet",
    "EncoderConfig",
    "Entity",
    "FilteredDocument",
    "HeadParams",
    "Metrics",
    "NumericsError",
    "ParseError",
    "PrecomputedProvider",
    "Route",
    "Sentence",
    "SparsedocError",
    "TargetTerm",
    "Token",
    "TokenVocab",
    "TrainConfig",
    "TrainResult",
    "TrainableEncoderProvider",
    "ValidationError",
    "VocabList",
    "apply_annotations",
    "build_token_vocab",
    "classification_loss",
    "compute_metrics",
    "cross_validate",
    "doc_forward",
    "encode",
    "expand_from_seed",
    "filter_corpus",
    "find_entities",
    "init_encoder",
    "init_head",
    "kfold_split",
    "load_checkpoint",
    "load_corpus",
    "load_stopwords",
    "load_vocab",
    "relevance_loss",
    "save_checkpoint",
    "save_corpus",
    "save_vocab",
    "segment",
    "tokenize",
    "total_loss",
    "train_model",
    "window_truncate",
]
