"""Ranked target-term lists: loading, stopword removal, truncation, seeded expansion.

A term is an ordered tuple of normalized word tokens. A token may end with
'*' to act as a prefix pattern at match time ("sigmoid*" covers
"sigmoidectomy"); everything else matches case-insensitively with diacritics
intact.
"""

from __future__ import annotations

import hashlib
import warnings
from collections import Counter
from collections.abc import Collection, Iterable, Sequence
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .corpus import DocumentSet, segment, tokenize
from .errors import ValidationError

SOURCES = ("expert_file", "related_import", "seeded_expansion")


@dataclass(frozen=True, slots=True)
class TargetTerm:
    tokens: tuple[str, ...]
    rank: int

    def __post_init__(self) -> None:
        if not self.tokens:
            raise ValidationError("target term has no tokens")
        if self.rank < 1:
            raise ValidationError(f"rank must be >= 1, got {self.rank}")
        for tok in self.tokens:
            if not any(c.isalnum() for c in tok):
                raise ValidationError(f"term token {tok!r} is pure punctuation")

    @property
    def text(self) -> str:
        return " ".join(self.tokens)


@dataclass(frozen=True, slots=True)
class VocabList:
    task: str
    terms: tuple[TargetTerm, ...]
    source: str

    def __post_init__(self) -> None:
        if self.source not in SOURCES:
            raise ValidationError(f"unknown vocab source {self.source!r}")
        seen: set[tuple[str, ...]] = set()
        prev_rank = 0
        for term in self.terms:
            if term.tokens in seen:
                raise ValidationError(f"duplicate term {term.text!r}")
            seen.add(term.tokens)
            if term.rank <= prev_rank:
                raise ValidationError(f"ranks must be strictly increasing (term {term.text!r})")
            prev_rank = term.rank

    def __len__(self) -> int:
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms)


def parse_term(text: str) -> tuple[str, ...]:
    """Normalize one term string to its token tuple, keeping trailing '*' prefixes."""
    tokens: list[str] = []
    for chunk in text.split():
        prefix = chunk.endswith("*")
        words = [t.norm for t in tokenize(chunk.rstrip("*")) if any(c.isalnum() for c in t.norm)]
        if prefix and words:
            words[-1] += "*"
        tokens.extend(words)
    if not tokens:
        raise ValidationError(f"term {text!r} contains no word tokens")
    return tuple(tokens)


def _ranked(token_seqs: Sequence[tuple[str, ...]], task: str, source: str) -> VocabList:
    terms = tuple(TargetTerm(tokens=toks, rank=i) for i, toks in enumerate(token_seqs, start=1))
    return VocabList(task=task, terms=terms, source=source)


def load_vocab(path: str | Path, task: str | None = None) -> VocabList:
    """Load a plain-text vocabulary: one term per line, line number = rank."""
    seqs: list[tuple[str, ...]] = []
    seen: set[tuple[str, ...]] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            tokens = parse_term(text)
            if tokens in seen:
                raise ValidationError(f"{path}:{lineno}: duplicate term {text!r}")
            seen.add(tokens)
            seqs.append(tokens)
    if not seqs:
        raise ValidationError(f"{path}: vocabulary file is empty")
    return _ranked(seqs, task=task or Path(path).stem, source="expert_file")


def save_vocab(vocab: VocabList, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for term in vocab.terms:
            fh.write(term.text + "\n")


def load_stopwords(language_or_path: str | Path) -> frozenset[str]:
    """Load a stopword list by language code ("en", "fr") or file path."""
    if language_or_path in ("en", "fr"):
        text = resources.files("sparsedoc.data").joinpath(f"stopwords_{language_or_path}.txt").read_text("utf-8")
    else:
        text = Path(language_or_path).read_text("utf-8")
    return frozenset(w.strip().lower() for w in text.splitlines() if w.strip())


def remove_stopwords(vocab: VocabList, stoplist: Collection[str]) -> VocabList:
    """Drop single-token terms found in the stoplist; multiword terms are kept."""
    stop = frozenset(stoplist)
    kept = [t.tokens for t in vocab.terms if not (len(t.tokens) == 1 and t.tokens[0] in stop)]
    return _ranked(kept, task=vocab.task, source=vocab.source)


def truncate_top_n(vocab: VocabList, n: int) -> VocabList:
    """Keep the n most relevant terms (rank <= n)."""
    if n < 1:
        raise ValidationError(f"n must be >= 1, got {n}")
    return VocabList(task=vocab.task, terms=vocab.terms[:n], source=vocab.source)


def import_related_terms(path: str | Path, seed: str, task: str | None = None) -> VocabList:
    """Build a vocabulary from an exported related-terms list, seed first.

    The file holds one term per line, most relevant first. The seed occupies
    rank 1; re-occurrences of any term (the seed included) are dropped.
    """
    seed_tokens = parse_term(seed)
    seqs = [seed_tokens]
    seen = {seed_tokens}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            text = line.strip()
            if not text:
                continue
            tokens = parse_term(text)
            if tokens not in seen:
                seen.add(tokens)
                seqs.append(tokens)
    return _ranked(seqs, task=task or Path(path).stem, source="related_import")


class StaticTermEmbedder:
    """Corpus-only occurrence embeddings for vocabulary expansion.

    Each occurrence of a term is represented by the words within
    ``window`` token positions of it, hashed into a fixed-size bag and
    L2-normalized; a term embedding is the mean over its occurrences.
    Deterministic, no pretrained weights involved.
    """

    def __init__(
        self,
        corpus: DocumentSet,
        window: int = 5,
        dim: int = 2**14,
        abbreviations: Collection[str] | None = None,
    ):
        self.window = window
        self.dim = dim
        self._doc_norms: list[list[str]] = []
        self._doc_is_word: list[list[bool]] = []
        self.word_freq: Counter[str] = Counter()
        for doc in corpus:
            norms: list[str] = []
            is_word: list[bool] = []
            for sent in segment(doc, abbreviations):
                for tok in sent.tokens:
                    norms.append(tok.norm)
                    word = any(c.isalnum() for c in tok.norm)
                    is_word.append(word)
                    if word:
                        self.word_freq[tok.norm] += 1
            self._doc_norms.append(norms)
            self._doc_is_word.append(is_word)

    @staticmethod
    def _bucket(word: str, dim: int) -> int:
        digest = hashlib.blake2b(word.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "big") % dim

    def occurrence_count(self, tokens: Sequence[str]) -> int:
        return sum(1 for _ in self._occurrences(tokens))

    def _occurrences(self, tokens: Sequence[str]):
        n = len(tokens)
        for d, norms in enumerate(self._doc_norms):
            for i in range(len(norms) - n + 1):
                if norms[i : i + n] == list(tokens):
                    yield d, i, i + n - 1

    def _occurrence_bag(self, d: int, first: int, last: int) -> np.ndarray:
        norms = self._doc_norms[d]
        is_word = self._doc_is_word[d]
        bag = np.zeros(self.dim)
        lo = max(0, first - self.window)
        hi = min(len(norms), last + 1 + self.window)
        for j in range(lo, hi):
            if first <= j <= last or not is_word[j]:
                continue
            bag[self._bucket(norms[j], self.dim)] += 1.0
        norm = np.linalg.norm(bag)
        if norm > 0:
            bag /= norm
        return bag

    def embed(self, tokens: Sequence[str]) -> np.ndarray:
        """Mean over occurrences of the L2-normalized context-window bag."""
        total = np.zeros(self.dim)
        count = 0
        for d, first, last in self._occurrences(tokens):
            total += self._occurrence_bag(d, first, last)
            count += 1
        if count == 0:
            raise ValidationError(f"term {' '.join(tokens)!r} does not occur in the corpus")
        return total / count

    def embed_words(self, words: Sequence[str]) -> np.ndarray:
        """Embed many single words in one corpus pass; rows follow ``words`` order."""
        index = {w: i for i, w in enumerate(words)}
        sums = np.zeros((len(words), self.dim))
        counts = np.zeros(len(words))
        for d, norms in enumerate(self._doc_norms):
            for pos, norm in enumerate(norms):
                row = index.get(norm)
                if row is not None:
                    sums[row] += self._occurrence_bag(d, pos, pos)
                    counts[row] += 1
        missing = [w for w, c in zip(words, counts) if c == 0]
        if missing:
            raise ValidationError(f"words not in corpus: {missing[:5]}")
        return sums / counts[:, None]


def expand_from_seed(
    seed: str | TargetTerm,
    corpus: DocumentSet,
    embedder: StaticTermEmbedder | None = None,
    n: int = 10,
    *,
    min_freq: int = 3,
    stopwords: Collection[str] = frozenset(),
    task: str = "expanded",
) -> VocabList:
    """Grow a term list from a single seed by iterative nearest-word selection.

    Starting from the seed, repeatedly average the embeddings of everything
    selected so far and add the unselected corpus word closest to that mean
    by cosine similarity (ties: higher corpus frequency, then lexicographic),
    until n terms are selected or candidates run out.
    """
    if n < 1:
        raise ValidationError(f"n must be >= 1, got {n}")
    seed_tokens = seed.tokens if isinstance(seed, TargetTerm) else parse_term(seed)
    if embedder is None:
        embedder = StaticTermEmbedder(corpus)
    if embedder.occurrence_count(seed_tokens) == 0:
        raise ValidationError(f"seed {' '.join(seed_tokens)!r} does not occur in the corpus")

    stop = frozenset(w.lower() for w in stopwords)
    candidates = sorted(
        w
        for w, freq in embedder.word_freq.items()
        if freq >= min_freq and w not in stop and (w,) != seed_tokens
    )
    cand_matrix = embedder.embed_words(candidates) if candidates else np.zeros((0, embedder.dim))
    cand_norms = np.linalg.norm(cand_matrix, axis=1)
    cand_freqs = np.array([embedder.word_freq[w] for w in candidates])

    selected: list[tuple[str, ...]] = [seed_tokens]
    selected_embs: list[np.ndarray] = [embedder.embed(seed_tokens)]
    available = np.ones(len(candidates), dtype=bool)
    while len(selected) < n:
        if not available.any():
            warnings.warn(
                f"only {len(selected)} of {n} terms available after filtering", stacklevel=2
            )
            break
        center = np.mean(selected_embs, axis=0)
        center_norm = float(np.linalg.norm(center))
        denom = cand_norms * center_norm
        sims = np.divide(cand_matrix @ center, denom, out=np.zeros(len(candidates)), where=denom > 0)
        sims[~available] = -np.inf
        # Exact-tie resolution: higher corpus frequency wins, then the
        # lexicographically smaller word (candidates are sorted).
        tied = np.flatnonzero(sims == sims.max())
        pick = int(tied[np.argmax(cand_freqs[tied])])
        available[pick] = False
        selected.append((candidates[pick],))
        selected_embs.append(cand_matrix[pick])
    return _ranked(selected, task=task, source="seeded_expansion")


def static_term_embedding(tokens: Sequence[str], corpus: DocumentSet, **kwargs) -> np.ndarray:
    """Convenience wrapper: embed one term against a corpus."""
    return StaticTermEmbedder(corpus, **kwargs).embed(tokens)


def corpus_word_frequencies(corpus: DocumentSet) -> Counter[str]:
    freq: Counter[str] = Counter()
    for doc in corpus:
        for tok in tokenize(doc.text):
            if any(c.isalnum() for c in tok.norm):
                freq[tok.norm] += 1
    return freq
