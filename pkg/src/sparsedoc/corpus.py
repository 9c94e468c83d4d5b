"""Corpus ingestion: labeled documents, sentence segmentation, tokenization.

Character spans are plain ``str`` indices (code points, not bytes) into the
untouched document text, so ``doc.text[start:end]`` always reproduces the
surface form.
"""

from __future__ import annotations

import json
import re
from collections.abc import Collection, Iterator
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .errors import ParseError, ValidationError

# Word tokens are runs of Unicode letters/digits, optionally glued by a single
# intra-word hyphen or apostrophe ("5-FU", "l'examen"); any other non-space
# character stands alone.
_TOKEN_RE = re.compile(r"[^\W_]+(?:[-'’][^\W_]+)*|\S")

_TERMINATORS = ".!?"

DEFAULT_ABBREVIATIONS = ("dr", "mr", "mme", "m", "e.g", "i.e", "cm", "vs")


@dataclass(frozen=True, slots=True)
class Token:
    surface: str
    norm: str
    char_span: tuple[int, int]


@dataclass(frozen=True, slots=True)
class Sentence:
    doc_id: str
    index: int
    char_span: tuple[int, int]
    tokens: tuple[Token, ...]

    def text(self, document_text: str) -> str:
        return document_text[self.char_span[0] : self.char_span[1]]


@dataclass(frozen=True, slots=True)
class Document:
    id: str
    text: str
    label: str | None = None

    def __post_init__(self) -> None:
        if not self.id:
            raise ValidationError("document id must be non-empty")
        if not self.text:
            raise ValidationError(f"document {self.id!r} has empty text")


class DocumentSet:
    """Immutable, order-preserving collection of documents with unique ids."""

    def __init__(self, documents: Collection[Document]):
        docs = tuple(documents)
        by_id: dict[str, Document] = {}
        for doc in docs:
            if doc.id in by_id:
                raise ValidationError(f"duplicate document id {doc.id!r}")
            by_id[doc.id] = doc
        self._docs = docs
        self._by_id = by_id

    def __iter__(self) -> Iterator[Document]:
        return iter(self._docs)

    def __len__(self) -> int:
        return len(self._docs)

    def __getitem__(self, doc_id: str) -> Document:
        return self._by_id[doc_id]

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._by_id

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(d.id for d in self._docs)


def load_corpus(path: str | Path) -> DocumentSet:
    """Read a JSONL corpus file: one object per line with id, text, optional label."""
    docs: list[Document] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{lineno}: invalid record: {exc}") from exc
            if not isinstance(record, dict) or "id" not in record or "text" not in record:
                raise ParseError(f"{path}:{lineno}: record must have 'id' and 'text' fields")
            label = record.get("label")
            if label is not None and not isinstance(label, str):
                raise ParseError(f"{path}:{lineno}: 'label' must be a string")
            try:
                docs.append(Document(id=str(record["id"]), text=str(record["text"]), label=label))
            except ValidationError as exc:
                raise ValidationError(f"{path}:{lineno}: {exc}") from exc
    try:
        return DocumentSet(docs)
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from exc


def save_corpus(documents: Collection[Document], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc in documents:
            record: dict[str, str] = {"id": doc.id, "text": doc.text}
            if doc.label is not None:
                record["label"] = doc.label
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def load_abbreviations(path: str | Path) -> tuple[str, ...]:
    """One lowercase abbreviation per line; '#' lines and blanks ignored."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            word = line.strip().lower()
            if word and not word.startswith("#"):
                out.append(word)
    return tuple(out)


def default_abbreviations() -> tuple[str, ...]:
    text = resources.files("sparsedoc.data").joinpath("abbreviations.txt").read_text("utf-8")
    return tuple(w.strip().lower() for w in text.splitlines() if w.strip())


def tokenize(text: str) -> list[Token]:
    """Split text into word and punctuation tokens with exact char spans."""
    tokens = []
    for match in _TOKEN_RE.finditer(text):
        surface = match.group(0)
        tokens.append(Token(surface=surface, norm=surface.lower(), char_span=(match.start(), match.end())))
    return tokens


def _abbreviation_before(text: str, dot: int, abbreviations: frozenset[str]) -> bool:
    # Candidate is the run of letters/digits/periods right before the dot,
    # so "e.g" and plain "Dr" both resolve against the list.
    start = dot
    while start > 0 and (text[start - 1].isalnum() or text[start - 1] == "."):
        start -= 1
    candidate = text[start:dot].strip(".").lower()
    return bool(candidate) and candidate in abbreviations


def _split_points(text: str, abbreviations: frozenset[str]) -> list[int]:
    points: set[int] = set()
    n = len(text)
    for i, ch in enumerate(text):
        if ch in _TERMINATORS:
            if ch == "." and _abbreviation_before(text, i, abbreviations):
                continue
            j = i + 1
            while j < n and text[j].isspace():
                j += 1
            if j == n:
                points.add(i + 1)
            elif j > i + 1 and (text[j].isupper() or text[j].isdigit()):
                points.add(i + 1)
    # A blank line (two newlines with only blank space between) always splits.
    for match in re.finditer(r"\n[ \t\r]*\n", text):
        points.add(match.start())
    return sorted(points)


def segment(doc: Document, abbreviations: Collection[str] | None = None) -> list[Sentence]:
    """Split a document into sentences with document-level char spans.

    Splits after '.', '?' or '!' followed by whitespace and an uppercase
    letter or digit (or end of text); a configurable abbreviation list
    suppresses splits after "Dr.", "e.g." and friends; blank lines always
    split. Sentence and token spans are trimmed to non-whitespace text.
    """
    abbrevs = frozenset(a.lower() for a in (abbreviations if abbreviations is not None else DEFAULT_ABBREVIATIONS))
    text = doc.text
    bounds = [0, *_split_points(text, abbrevs), len(text)]
    sentences: list[Sentence] = []
    for a, b in zip(bounds, bounds[1:]):
        chunk = text[a:b]
        stripped = chunk.strip()
        if not stripped:
            continue
        start = a + (len(chunk) - len(chunk.lstrip()))
        end = a + len(chunk.rstrip())
        tokens = tuple(
            Token(surface=t.surface, norm=t.norm, char_span=(t.char_span[0] + start, t.char_span[1] + start))
            for t in tokenize(text[start:end])
        )
        sentences.append(Sentence(doc_id=doc.id, index=len(sentences), char_span=(start, end), tokens=tokens))
    return sentences
