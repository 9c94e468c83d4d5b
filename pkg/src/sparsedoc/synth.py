"""Synthetic sparse-signal corpora with ground-truth entity relevance.

Each document is a stack of template sentences: exactly ``relevant_per_doc``
sentences tie a target term to a label-determining cue ("active" / "former" /
"no ..."); a ``distractor_rate`` fraction of the rest mention a target term in
a label-independent context; everything else is noise.  Distractor sentences
reuse the relevant frames with a uniformly random cue, differing only in
their trailing tokens ("at the kiosk" / "since orientation" instead of
"at the visit" / "since admission"), so a pooled bag of entity windows is
dominated by random cue noise and only attention on the truly relevant
window recovers the label.  Noise sentences recycle the visible cue words
and the relevant templates' content words, so document-level bags of words
carry almost no label signal either.  The "never" class is cued purely by
the stopword "no", which classical stopword-removing pipelines cannot see.

Ground truth is produced by running the real filter over the generated text,
so annotation files line up with re-filtered entity ids exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import Document, DocumentSet, segment
from .errors import ValidationError
from .filtering import find_entities
from .vocab import TargetTerm, VocabList

RELEVANT_TEMPLATES: dict[str, tuple[str, ...]] = {
    "current": (
        "Patient reported active {t} use at the visit.",
        "Notes confirmed ongoing {t} habit since admission.",
    ),
    "former": (
        "Patient reported former {t} use at the visit.",
        "Notes confirmed past {t} habit since admission.",
    ),
    "never": (
        "Patient reported no {t} use at the visit.",
        "Notes confirmed no {t} habit since admission.",
    ),
}

# cue tokens that decide the label inside a relevant sentence
CLASS_CUES: dict[str, tuple[str, ...]] = {
    "current": ("active", "ongoing"),
    "former": ("former", "past"),
    "never": ("no",),
}

# visible cues recycled into noise sentences of every class
_RECYCLED_CUES = ("active", "ongoing", "former", "past")

# content words of the relevant templates, recycled into noise as well
_RECYCLED_WORDS = ("patient", "notes", "visit", "admission", "habit", "use")

# same frames as the relevant templates up to the trailing tokens; the cue
# slot is filled uniformly at random, independent of the document label
DISTRACTOR_TEMPLATES = (
    "Patient reported {c} {t} use at the kiosk.",
    "Notes confirmed {c} {t} habit since orientation.",
)

_DISTRACTOR_CUES = ("active", "ongoing", "former", "past", "no")

DEFAULT_LEXICON = (
    "garden", "window", "coffee", "meeting", "schedule", "bicycle", "market", "library",
    "kitchen", "weather", "journal", "printer", "hallway", "elevator", "budget", "calendar",
    "picnic", "museum", "harbor", "festival", "lecture", "garage", "orchard", "bakery",
    "station", "bridge", "village", "theater", "laundry", "pantry", "stairwell", "awning",
)


@dataclass(frozen=True, slots=True)
class SynthConfig:
    n_docs: int
    sentences_per_doc: int = 40
    relevant_per_doc: int = 1
    distractor_rate: float = 0.3
    classes: tuple[str, ...] = ("current", "former", "never")
    terms: tuple[str, ...] = ("smoker", "tobacco", "cigarette")
    noise_lexicon_size: int = 30
    cue_rate: float = 0.75
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_docs < 1:
            raise ValidationError("need at least one document")
        if len(self.classes) < 2:
            raise ValidationError("need at least 2 classes")
        unknown = [c for c in self.classes if c not in RELEVANT_TEMPLATES]
        if unknown:
            raise ValidationError(f"no sentence templates for classes {unknown}")
        if not 0 <= self.distractor_rate <= 1 or not 0 <= self.cue_rate <= 1:
            raise ValidationError("rates must lie in [0, 1]")
        if not 1 <= self.relevant_per_doc <= self.sentences_per_doc:
            raise ValidationError("relevant_per_doc must fit into sentences_per_doc")
        if not 1 <= self.noise_lexicon_size <= len(DEFAULT_LEXICON):
            raise ValidationError(f"noise lexicon size must lie in 1..{len(DEFAULT_LEXICON)}")
        if not self.terms:
            raise ValidationError("need at least one target term")


@dataclass(slots=True)
class SynthResult:
    config: SynthConfig
    corpus: DocumentSet
    vocab: VocabList
    annotations: dict[str, bool]
    relevant_positions: dict[str, tuple[int, ...]] = field(default_factory=dict)


def _noise_sentence(rng: np.random.Generator, pool: tuple[str, ...], cue_rate: float) -> str:
    def pick() -> str:
        return pool[int(rng.integers(len(pool)))]

    if rng.random() < cue_rate:
        cue = _RECYCLED_CUES[int(rng.integers(len(_RECYCLED_CUES)))]
        shape = int(rng.integers(3))
        if shape == 0:
            return f"The {pick()} plan stayed {cue} through the {pick()}."
        if shape == 1:
            return f"Staff kept the {cue} {pick()} list near the {pick()}."
        return f"Everyone called the {pick()} rotation {cue} after the {pick()}."
    shape = int(rng.integers(3))
    if shape == 0:
        return f"The {pick()} sat beside the {pick()}."
    if shape == 1:
        return f"Someone moved the {pick()} toward the {pick()}."
    return f"The {pick()} stayed quiet during the {pick()}."


def _document_text(cfg: SynthConfig, label: str, rng: np.random.Generator) -> tuple[str, tuple[int, ...]]:
    S = cfg.sentences_per_doc
    relevant = sorted(int(i) for i in rng.choice(S, size=cfg.relevant_per_doc, replace=False))
    relevant_set = set(relevant)
    pool = tuple(DEFAULT_LEXICON[: cfg.noise_lexicon_size]) + _RECYCLED_WORDS
    sentences = []
    for position in range(S):
        if position in relevant_set:
            templates = RELEVANT_TEMPLATES[label]
            template = templates[int(rng.integers(len(templates)))]
            term = cfg.terms[int(rng.integers(len(cfg.terms)))]
            sentences.append(template.format(t=term))
        elif rng.random() < cfg.distractor_rate:
            template = DISTRACTOR_TEMPLATES[int(rng.integers(len(DISTRACTOR_TEMPLATES)))]
            term = cfg.terms[int(rng.integers(len(cfg.terms)))]
            cue = _DISTRACTOR_CUES[int(rng.integers(len(_DISTRACTOR_CUES)))]
            sentences.append(template.format(c=cue, t=term))
        else:
            sentences.append(_noise_sentence(rng, pool, cfg.cue_rate))
    return " ".join(sentences), tuple(relevant)


def generate(cfg: SynthConfig) -> SynthResult:
    """Deterministic labeled corpus plus per-entity relevance ground truth.

    Labels rotate round-robin over the class set, so proportions are exact up
    to rounding.  Each document draws from its own rng stream keyed by
    (seed, doc index), so generation order and parallelism cannot change the
    output.
    """
    vocab = VocabList(
        task="synthetic",
        terms=tuple(TargetTerm(tokens=(t,), rank=i + 1) for i, t in enumerate(cfg.terms)),
        source="expert_file",
    )
    documents = []
    annotations: dict[str, bool] = {}
    relevant_positions: dict[str, tuple[int, ...]] = {}
    for i in range(cfg.n_docs):
        label = cfg.classes[i % len(cfg.classes)]
        rng = np.random.default_rng((cfg.seed, i))
        text, relevant = _document_text(cfg, label, rng)
        doc = Document(id=f"doc{i:04d}", text=text, label=label)
        sentences = segment(doc)
        if len(sentences) != cfg.sentences_per_doc:
            raise ValidationError(
                f"{doc.id}: templates produced {len(sentences)} sentences, expected {cfg.sentences_per_doc}"
            )
        relevant_set = set(relevant)
        for entity in find_entities(doc, sentences, vocab):
            annotations[entity.entity_id] = entity.sentence.index in relevant_set
        documents.append(doc)
        relevant_positions[doc.id] = relevant
    return SynthResult(
        config=cfg,
        corpus=DocumentSet(documents),
        vocab=vocab,
        annotations=annotations,
        relevant_positions=relevant_positions,
    )


def template_oracle(result: SynthResult, doc_id: str) -> str:
    """Label recovered from the relevant sentences alone, via the cue rules.

    Exists to prove the generated label is decodable from the sparse signal;
    raises if no cue is found (which would mean broken templates).
    """
    doc = result.corpus[doc_id]
    sentences = segment(doc)
    positions = set(result.relevant_positions[doc_id])
    votes = set()
    for sentence in sentences:
        if sentence.index not in positions:
            continue
        tokens = {t.norm for t in sentence.tokens}
        for label, cues in CLASS_CUES.items():
            if label in result.config.classes and any(c in tokens for c in cues):
                votes.add(label)
    if len(votes) != 1:
        raise ValidationError(f"{doc_id}: cue votes {sorted(votes)} do not decide a single label")
    return votes.pop()


def noise_terms(n: int, cfg: SynthConfig | None = None) -> tuple[str, ...]:
    """The first n noise-lexicon words, for building distractor-only
    vocabulary entries in robustness experiments."""
    size = cfg.noise_lexicon_size if cfg is not None else len(DEFAULT_LEXICON)
    if n > size:
        raise ValidationError(f"only {size} noise words available")
    return DEFAULT_LEXICON[:n]
