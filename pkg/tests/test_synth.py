"""Synthetic corpus generator: determinism, ground truth, and exports."""

import collections

import pytest

from sparsedoc.annotate import load_annotation_export, write_annotation_export
from sparsedoc.corpus import segment
from sparsedoc.errors import ValidationError
from sparsedoc.filtering import filter_corpus, find_entities
from sparsedoc.synth import (
    CLASS_CUES,
    DEFAULT_LEXICON,
    SynthConfig,
    generate,
    noise_terms,
    template_oracle,
)


class TestSynthConfig:
    def test_defaults(self):
        cfg = SynthConfig(n_docs=10)
        assert cfg.sentences_per_doc == 40
        assert cfg.relevant_per_doc == 1
        assert cfg.distractor_rate == 0.3
        assert cfg.cue_rate == 0.75

    def test_validation(self):
        with pytest.raises(ValidationError):
            SynthConfig(n_docs=0)
        with pytest.raises(ValidationError):
            SynthConfig(n_docs=1, classes=("current",))
        with pytest.raises(ValidationError):
            SynthConfig(n_docs=1, classes=("current", "imaginary"))
        with pytest.raises(ValidationError):
            SynthConfig(n_docs=1, distractor_rate=1.5)
        with pytest.raises(ValidationError):
            SynthConfig(n_docs=1, relevant_per_doc=50, sentences_per_doc=40)
        with pytest.raises(ValidationError):
            SynthConfig(n_docs=1, terms=())


class TestGenerate:
    def test_same_seed_identical(self):
        cfg = SynthConfig(n_docs=9, sentences_per_doc=10, seed=5)
        a, b = generate(cfg), generate(cfg)
        assert [d.text for d in a.corpus] == [d.text for d in b.corpus]
        assert a.annotations == b.annotations
        assert a.relevant_positions == b.relevant_positions

    def test_different_seed_differs(self):
        base = SynthConfig(n_docs=6, sentences_per_doc=10, seed=0)
        other = SynthConfig(n_docs=6, sentences_per_doc=10, seed=1)
        assert [d.text for d in generate(base).corpus] != [d.text for d in generate(other).corpus]

    def test_labels_round_robin(self):
        result = generate(SynthConfig(n_docs=10, sentences_per_doc=6, seed=0))
        labels = [d.label for d in result.corpus]
        counts = collections.Counter(labels)
        assert counts == {"current": 4, "former": 3, "never": 3}
        assert labels[:3] == ["current", "former", "never"]

    def test_sentence_count_respected(self):
        result = generate(SynthConfig(n_docs=4, sentences_per_doc=17, seed=2))
        for doc in result.corpus:
            assert len(segment(doc)) == 17

    def test_relevant_positions_tracked(self):
        cfg = SynthConfig(n_docs=6, sentences_per_doc=12, relevant_per_doc=3, seed=1)
        result = generate(cfg)
        for doc in result.corpus:
            positions = result.relevant_positions[doc.id]
            assert len(positions) == 3
            assert all(0 <= p < 12 for p in positions)
            assert list(positions) == sorted(set(positions))

    def test_annotations_keyed_by_refiltered_ids(self):
        cfg = SynthConfig(n_docs=5, sentences_per_doc=10, seed=3)
        result = generate(cfg)
        seen = set()
        for doc in result.corpus:
            for entity in find_entities(doc, segment(doc), result.vocab):
                assert entity.entity_id in result.annotations
                seen.add(entity.entity_id)
        assert seen == set(result.annotations)

    def test_annotation_truth_matches_positions(self):
        cfg = SynthConfig(n_docs=6, sentences_per_doc=10, distractor_rate=0.5, seed=4)
        result = generate(cfg)
        for doc in result.corpus:
            relevant = set(result.relevant_positions[doc.id])
            for entity in find_entities(doc, segment(doc), result.vocab):
                assert result.annotations[entity.entity_id] == (entity.sentence.index in relevant)

    def test_zero_distractors_leave_only_relevant_entities(self):
        cfg = SynthConfig(n_docs=6, sentences_per_doc=10, distractor_rate=0.0, seed=0)
        result = generate(cfg)
        for doc in result.corpus:
            entities = find_entities(doc, segment(doc), result.vocab)
            assert len(entities) == 1
            assert result.annotations[entities[0].entity_id] is True

    def test_every_doc_routes_to_model(self):
        result = generate(SynthConfig(n_docs=9, sentences_per_doc=8, seed=0))
        filtered = filter_corpus(result.corpus, result.vocab, "never")
        assert all(f.route.value == "case_b" for f in filtered)

    def test_noise_mentions_cues_across_classes(self):
        # with cue_rate 1.0 the bag of words should contain recycled cue
        # tokens in documents of the wrong class too
        cfg = SynthConfig(n_docs=6, sentences_per_doc=30, cue_rate=1.0, distractor_rate=0.0, seed=0)
        result = generate(cfg)
        never_doc = next(d for d in result.corpus if d.label == "never")
        tokens = {t.norm for s in segment(never_doc) for t in s.tokens}
        assert tokens & set(CLASS_CUES["current"])
        assert tokens & set(CLASS_CUES["former"])


class TestTemplateOracle:
    def test_perfect_recovery(self):
        result = generate(SynthConfig(n_docs=15, sentences_per_doc=10, seed=7))
        for doc in result.corpus:
            assert template_oracle(result, doc.id) == doc.label

    def test_perfect_recovery_with_heavy_distractors(self):
        cfg = SynthConfig(n_docs=9, sentences_per_doc=10, distractor_rate=0.8, seed=1)
        result = generate(cfg)
        for doc in result.corpus:
            assert template_oracle(result, doc.id) == doc.label


class TestNoiseTerms:
    def test_prefix_of_lexicon(self):
        assert noise_terms(3) == DEFAULT_LEXICON[:3]

    def test_respects_config_size(self):
        cfg = SynthConfig(n_docs=1, noise_lexicon_size=5)
        with pytest.raises(ValidationError, match="5"):
            noise_terms(6, cfg)


class TestAnnotationExport:
    def test_round_trip(self, tmp_path):
        result = generate(SynthConfig(n_docs=5, sentences_per_doc=8, distractor_rate=0.5, seed=0))
        path = tmp_path / "ann.jsonl"
        count = write_annotation_export(result.annotations, path)
        assert count == len(result.annotations)
        assert load_annotation_export(path) == result.annotations

    def test_sorted_by_entity_id(self, tmp_path):
        result = generate(SynthConfig(n_docs=5, sentences_per_doc=8, distractor_rate=0.5, seed=0))
        path = tmp_path / "ann.jsonl"
        write_annotation_export(result.annotations, path)
        import json

        ids = [json.loads(line)["entity_id"] for line in path.read_text().splitlines()]
        assert ids == sorted(ids)

    def test_export_deterministic_bytes(self, tmp_path):
        result = generate(SynthConfig(n_docs=4, sentences_per_doc=8, distractor_rate=0.5, seed=2))
        p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        write_annotation_export(result.annotations, p1)
        write_annotation_export(result.annotations, p2)
        assert p1.read_bytes() == p2.read_bytes()
