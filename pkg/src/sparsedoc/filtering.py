"""Target-term occurrence search and document routing.

Documents with no occurrence of any vocabulary term are routed to case A and
take the task's default label without ever touching the model; documents with
at least one occurrence are routed to case B and carry their occurrences
("entities": a matched term plus its surrounding sentence) forward.
"""

from __future__ import annotations

import hashlib
import json
from collections.abc import Collection, Iterable, Mapping
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

from .corpus import Document, DocumentSet, Sentence, segment
from .errors import ParseError, ValidationError
from .vocab import TargetTerm, VocabList


class Route(str, Enum):
    CASE_A = "case_a"
    CASE_B = "case_b"


def entity_id_for(doc_id: str, sentence_index: int, first: int, last: int, term_tokens: tuple[str, ...]) -> str:
    """Stable 16-hex-char id: blake2b-64 over the identifying fields.

    The digest input is the five fields joined by unit separators, so ids
    survive re-filtering on any machine.
    """
    payload = "\x1f".join([doc_id, str(sentence_index), str(first), str(last), " ".join(term_tokens)])
    return hashlib.blake2b(payload.encode("utf-8"), digest_size=8).hexdigest()


@dataclass(frozen=True, slots=True)
class Entity:
    entity_id: str
    doc_id: str
    sentence: Sentence
    term: TargetTerm
    token_span: tuple[int, int]
    relevance: bool | None = None


@dataclass(frozen=True, slots=True)
class FilteredDocument:
    doc_id: str
    route: Route
    entities: tuple[Entity, ...]
    label: str | None

    def __post_init__(self) -> None:
        if (self.route is Route.CASE_A) != (len(self.entities) == 0):
            raise ValidationError("case_a iff entities empty")


def token_matches(norm: str, term_token: str) -> bool:
    """One token against one term token; trailing '*' makes it a prefix pattern."""
    if term_token.endswith("*"):
        return norm.startswith(term_token[:-1])
    return norm == term_token


def _match_at(tokens: tuple, start: int, term: TargetTerm) -> bool:
    if start + len(term.tokens) > len(tokens):
        return False
    return all(token_matches(tokens[start + k].norm, term.tokens[k]) for k in range(len(term.tokens)))


def find_entities(doc: Document, sentences: Iterable[Sentence], vocab: VocabList) -> list[Entity]:
    """All maximal non-overlapping term occurrences, in document order.

    Matching is leftmost-longest on normalized tokens: at each position the
    longest matching term wins (rank breaks length ties) and the scan resumes
    past it.
    """
    by_length = sorted(vocab.terms, key=lambda t: (-len(t.tokens), t.rank))
    entities: list[Entity] = []
    for sentence in sentences:
        tokens = sentence.tokens
        i = 0
        while i < len(tokens):
            hit = next((term for term in by_length if _match_at(tokens, i, term)), None)
            if hit is None:
                i += 1
                continue
            span = (i, i + len(hit.tokens) - 1)
            entities.append(
                Entity(
                    entity_id=entity_id_for(doc.id, sentence.index, span[0], span[1], hit.tokens),
                    doc_id=doc.id,
                    sentence=sentence,
                    term=hit,
                    token_span=span,
                )
            )
            i = span[1] + 1
    return entities


def route(doc: Document, entities: list[Entity], default_label: str) -> FilteredDocument:
    """Case A (no entities, default label) or case B (entities, label left to the model)."""
    if not entities:
        return FilteredDocument(doc_id=doc.id, route=Route.CASE_A, entities=(), label=default_label)
    return FilteredDocument(doc_id=doc.id, route=Route.CASE_B, entities=tuple(entities), label=None)


def filter_corpus(
    corpus: DocumentSet,
    vocab: VocabList,
    default_label: str,
    abbreviations: Collection[str] | None = None,
) -> list[FilteredDocument]:
    out = []
    for doc in corpus:
        sentences = segment(doc, abbreviations)
        out.append(route(doc, find_entities(doc, sentences, vocab), default_label))
    return out


def apply_annotations(
    filtered: Iterable[FilteredDocument], annotations: Mapping[str, bool]
) -> list[FilteredDocument]:
    """Return copies with entity relevance flags filled in from an annotation map."""
    out = []
    for fdoc in filtered:
        entities = tuple(
            replace(e, relevance=annotations[e.entity_id]) if e.entity_id in annotations else e
            for e in fdoc.entities
        )
        out.append(replace(fdoc, entities=entities))
    return out


# -- entity records: the flat exchange format consumed by the annotation service


@dataclass(frozen=True, slots=True)
class EntityRecord:
    entity_id: str
    doc_id: str
    sentence_index: int
    sentence_text: str
    highlight: tuple[int, int]
    token_span: tuple[int, int]
    term: str


def entity_record(entity: Entity, document_text: str) -> EntityRecord:
    sent = entity.sentence
    first_tok = sent.tokens[entity.token_span[0]]
    last_tok = sent.tokens[entity.token_span[1]]
    start = first_tok.char_span[0] - sent.char_span[0]
    end = last_tok.char_span[1] - sent.char_span[0]
    return EntityRecord(
        entity_id=entity.entity_id,
        doc_id=entity.doc_id,
        sentence_index=sent.index,
        sentence_text=sent.text(document_text),
        highlight=(start, end),
        token_span=entity.token_span,
        term=entity.term.text,
    )


def write_entity_records(
    filtered: Iterable[FilteredDocument], corpus: DocumentSet, path: str | Path
) -> int:
    """Export all case-B entities as JSONL; returns the record count."""
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for fdoc in filtered:
            for entity in fdoc.entities:
                rec = entity_record(entity, corpus[fdoc.doc_id].text)
                fh.write(
                    json.dumps(
                        {
                            "entity_id": rec.entity_id,
                            "doc_id": rec.doc_id,
                            "sentence_index": rec.sentence_index,
                            "sentence_text": rec.sentence_text,
                            "highlight": list(rec.highlight),
                            "token_span": list(rec.token_span),
                            "term": rec.term,
                        },
                        ensure_ascii=False,
                    )
                    + "\n"
                )
                count += 1
    return count


def load_entity_records(path: str | Path) -> list[EntityRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                records.append(
                    EntityRecord(
                        entity_id=obj["entity_id"],
                        doc_id=obj["doc_id"],
                        sentence_index=int(obj["sentence_index"]),
                        sentence_text=obj["sentence_text"],
                        highlight=(int(obj["highlight"][0]), int(obj["highlight"][1])),
                        token_span=(int(obj["token_span"][0]), int(obj["token_span"][1])),
                        term=obj["term"],
                    )
                )
            except (json.JSONDecodeError, KeyError, IndexError, TypeError) as exc:
                raise ParseError(f"{path}:{lineno}: bad entity record: {exc}") from exc
    return records
