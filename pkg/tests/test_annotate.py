"""Annotation log durability and the HTTP annotation service.

The HTTP tests run a real ThreadingHTTPServer on a loopback port and talk to
it with requests, covering the full wire contract the browser UI depends on.
"""

import json
import threading
from concurrent.futures import ThreadPoolExecutor

import pytest
import requests

from sparsedoc.annotate import (
    AnnotationService,
    AnnotationStore,
    export_text,
    load_annotation_export,
    make_server,
    write_annotation_export,
)
from sparsedoc.errors import ParseError, ValidationError
from sparsedoc.filtering import entity_record, filter_corpus
from sparsedoc.synth import SynthConfig, generate


def build_records(n=10):
    """Entity records from a generated corpus; enough distractors for n."""
    result = generate(SynthConfig(n_docs=8, sentences_per_doc=10, distractor_rate=0.6, seed=0))
    records = []
    for fdoc in filter_corpus(result.corpus, result.vocab, "never"):
        text = result.corpus[fdoc.doc_id].text
        for entity in fdoc.entities:
            records.append(entity_record(entity, text))
    assert len(records) >= n
    return records[:n]


@pytest.fixture()
def server(tmp_path):
    records = build_records(10)
    store = AnnotationStore(tmp_path / "log.jsonl")
    httpd = make_server(records, store, port=0)
    thread = threading.Thread(target=httpd.serve_forever, daemon=True)
    thread.start()
    base = f"http://127.0.0.1:{httpd.server_address[1]}"
    yield base, records, store, tmp_path / "log.jsonl"
    httpd.shutdown()
    httpd.server_close()
    store.close()


class TestAnnotationStore:
    def test_records_resolve_last_write_wins(self, tmp_path):
        store = AnnotationStore(tmp_path / "log.jsonl")
        store.record("e1", True, "alice")
        store.record("e2", False, "alice")
        store.record("e1", False, "bob")
        assert store.resolved() == {"e1": False, "e2": False}
        store.close()

    def test_log_survives_restart(self, tmp_path):
        path = tmp_path / "log.jsonl"
        store = AnnotationStore(path)
        for i in range(3):
            store.record(f"e{i}", i % 2 == 0, "alice")
        store.close()
        reopened = AnnotationStore(path)
        assert reopened.resolved() == {"e0": True, "e1": False, "e2": True}
        reopened.close()

    def test_append_preserves_existing_log(self, tmp_path):
        path = tmp_path / "log.jsonl"
        first = AnnotationStore(path)
        first.record("e0", True, "alice")
        first.close()
        second = AnnotationStore(path)
        second.record("e1", False, "bob")
        second.close()
        lines = path.read_text().splitlines()
        assert len(lines) == 2
        assert json.loads(lines[0])["entity_id"] == "e0"

    def test_corrupt_line_rejected_with_position(self, tmp_path):
        path = tmp_path / "log.jsonl"
        path.write_text('{"entity_id": "e0", "relevant": true}\nnot json\n')
        with pytest.raises(ParseError, match=":2"):
            AnnotationStore(path)

    def test_record_entries_carry_annotator_and_timestamp(self, tmp_path):
        store = AnnotationStore(tmp_path / "log.jsonl")
        entry = store.record("e1", True, "carol")
        assert entry["annotator"] == "carol"
        assert "timestamp" in entry
        store.close()


class TestAnnotationService:
    def test_duplicate_record_ids_rejected(self, tmp_path):
        records = build_records(2)
        store = AnnotationStore(tmp_path / "log.jsonl")
        with pytest.raises(ValidationError, match="duplicate"):
            AnnotationService(records + [records[0]], store)
        store.close()

    def test_export_ignores_unknown_ids_in_log(self, tmp_path):
        records = build_records(3)
        store = AnnotationStore(tmp_path / "log.jsonl")
        store.record("stray-id", True, "alice")
        store.record(records[0].entity_id, True, "alice")
        service = AnnotationService(records, store)
        exported = service.export()
        assert "stray-id" not in exported
        assert records[0].entity_id in exported
        assert service.progress() == {"done": 1, "total": 3}
        store.close()


class TestHttpTasks:
    def test_pending_then_done_transitions(self, server):
        base, records, _, _ = server
        tasks = requests.get(f"{base}/api/tasks").json()
        assert len(tasks) == 10
        assert all(t["status"] == "pending" for t in tasks)
        # task order follows the record (document) order
        assert [t["entity_id"] for t in tasks] == [r.entity_id for r in records]

        requests.post(
            f"{base}/api/annotations",
            json={"entity_id": records[0].entity_id, "relevant": True, "annotator": "a"},
        ).raise_for_status()
        pending = requests.get(f"{base}/api/tasks?status=pending").json()
        done = requests.get(f"{base}/api/tasks?status=done").json()
        both = requests.get(f"{base}/api/tasks?status=all").json()
        assert len(pending) == 9
        assert [t["entity_id"] for t in done] == [records[0].entity_id]
        assert len(both) == 10

    def test_limit(self, server):
        base, _, _, _ = server
        assert len(requests.get(f"{base}/api/tasks?limit=3").json()) == 3

    def test_task_payload_fields(self, server):
        base, records, _, _ = server
        task = requests.get(f"{base}/api/tasks?limit=1").json()[0]
        assert set(task) == {"entity_id", "doc_id", "sentence_text", "highlight", "term", "status"}
        lo, hi = task["highlight"]
        assert task["sentence_text"][lo:hi].lower().startswith(task["term"].split()[0])

    def test_bad_status_is_400(self, server):
        base, _, _, _ = server
        resp = requests.get(f"{base}/api/tasks?status=bogus")
        assert resp.status_code == 400
        assert "bogus" in resp.json()["error"]

    def test_bad_limit_is_400(self, server):
        base, _, _, _ = server
        assert requests.get(f"{base}/api/tasks?limit=three").status_code == 400


class TestHttpAnnotations:
    def test_post_roundtrip(self, server):
        base, records, _, _ = server
        resp = requests.post(
            f"{base}/api/annotations",
            json={"entity_id": records[2].entity_id, "relevant": False, "annotator": "bob"},
        )
        assert resp.status_code == 200
        body = resp.json()
        assert body["entity_id"] == records[2].entity_id
        assert body["relevant"] is False
        assert body["annotator"] == "bob"

    def test_unknown_id_404_store_untouched(self, server):
        base, _, store, log_path = server
        resp = requests.post(
            f"{base}/api/annotations", json={"entity_id": "nope", "relevant": True}
        )
        assert resp.status_code == 404
        assert store.resolved() == {}
        assert log_path.read_text() == ""

    def test_malformed_body_400(self, server):
        base, records, _, _ = server
        missing = requests.post(f"{base}/api/annotations", json={"relevant": True})
        assert missing.status_code == 400
        wrong_type = requests.post(
            f"{base}/api/annotations", json={"entity_id": records[0].entity_id, "relevant": "yes"}
        )
        assert wrong_type.status_code == 400
        not_json = requests.post(
            f"{base}/api/annotations", data=b"garbage", headers={"Content-Type": "application/json"}
        )
        assert not_json.status_code == 400

    def test_reannotation_last_write_wins(self, server):
        base, records, store, _ = server
        eid = records[1].entity_id
        requests.post(f"{base}/api/annotations", json={"entity_id": eid, "relevant": True})
        requests.post(f"{base}/api/annotations", json={"entity_id": eid, "relevant": False})
        assert store.resolved()[eid] is False
        export = requests.get(f"{base}/api/export").text
        assert json.loads(export.splitlines()[0]) == {"entity_id": eid, "relevant": False}

    def test_concurrent_posts_all_land(self, server):
        base, records, store, log_path = server

        def post(record):
            return requests.post(
                f"{base}/api/annotations",
                json={"entity_id": record.entity_id, "relevant": True},
            ).status_code

        with ThreadPoolExecutor(max_workers=8) as pool:
            codes = list(pool.map(post, records))
        assert codes == [200] * 10
        assert len(store.resolved()) == 10
        assert len(log_path.read_text().splitlines()) == 10


class TestHttpProgressAndExport:
    def test_progress_counts_up(self, server):
        base, records, _, _ = server
        assert requests.get(f"{base}/api/progress").json() == {"done": 0, "total": 10}
        requests.post(
            f"{base}/api/annotations", json={"entity_id": records[0].entity_id, "relevant": True}
        )
        assert requests.get(f"{base}/api/progress").json() == {"done": 1, "total": 10}

    def test_progress_survives_restart(self, tmp_path):
        records = build_records(10)
        path = tmp_path / "log.jsonl"
        store = AnnotationStore(path)
        service = AnnotationService(records, store)
        for record in records[:3]:
            service.annotate(record.entity_id, True, "a")
        store.close()

        reopened = AnnotationStore(path)
        service2 = AnnotationService(records, reopened)
        assert service2.progress() == {"done": 3, "total": 10}
        reopened.close()

    def test_export_sorted_and_parseable(self, server):
        base, records, _, _ = server
        for record in records[:4]:
            requests.post(
                f"{base}/api/annotations", json={"entity_id": record.entity_id, "relevant": True}
            )
        resp = requests.get(f"{base}/api/export")
        assert resp.status_code == 200
        assert "ndjson" in resp.headers["Content-Type"]
        lines = resp.text.splitlines()
        ids = [json.loads(line)["entity_id"] for line in lines]
        assert ids == sorted(ids)
        assert set(ids) == {r.entity_id for r in records[:4]}

    def test_store_replay_reproduces_export_bytes(self, server):
        base, records, store, log_path = server
        for i, record in enumerate(records):
            requests.post(
                f"{base}/api/annotations",
                json={"entity_id": record.entity_id, "relevant": i % 3 == 0},
            )
        export_now = requests.get(f"{base}/api/export").content

        replayed = AnnotationStore(log_path)  # separate read of the same log
        assert export_text(replayed.resolved()).encode() == export_now
        replayed.close()


class TestHttpPlumbing:
    def test_cors_headers_everywhere(self, server):
        base, _, _, _ = server
        for resp in (
            requests.get(f"{base}/api/progress"),
            requests.get(f"{base}/api/export"),
            requests.post(f"{base}/api/annotations", json={}),
        ):
            assert resp.headers["Access-Control-Allow-Origin"] == "*"

    def test_options_preflight(self, server):
        base, _, _, _ = server
        resp = requests.options(f"{base}/api/annotations")
        assert resp.status_code == 204
        assert "POST" in resp.headers["Access-Control-Allow-Methods"]

    def test_unknown_route_404(self, server):
        base, _, _, _ = server
        assert requests.get(f"{base}/api/unknown").status_code == 404
        assert requests.post(f"{base}/api/unknown", json={}).status_code == 404

    def test_static_ui_served_when_configured(self, tmp_path):
        ui = tmp_path / "ui"
        ui.mkdir()
        (ui / "index.html").write_text("<h1>annotator</h1>")
        store = AnnotationStore(tmp_path / "log.jsonl")
        httpd = make_server(build_records(2), store, port=0, ui_dir=ui)
        thread = threading.Thread(target=httpd.serve_forever, daemon=True)
        thread.start()
        base = f"http://127.0.0.1:{httpd.server_address[1]}"
        try:
            resp = requests.get(f"{base}/ui/")
            assert resp.status_code == 200
            assert "annotator" in resp.text
            assert requests.get(f"{base}/").status_code == 200
            assert requests.get(f"{base}/ui/../secret").status_code == 404
        finally:
            httpd.shutdown()
            httpd.server_close()
            store.close()


class TestExportHelpers:
    def test_write_and_load_round_trip(self, tmp_path):
        annotations = {"b": True, "a": False}
        path = tmp_path / "ann.jsonl"
        assert write_annotation_export(annotations, path) == 2
        assert load_annotation_export(path) == annotations

    def test_load_rejects_non_boolean(self, tmp_path):
        path = tmp_path / "ann.jsonl"
        path.write_text('{"entity_id": "a", "relevant": 1}\n')
        with pytest.raises(ParseError, match="true/false"):
            load_annotation_export(path)

    def test_load_rejects_missing_field(self, tmp_path):
        path = tmp_path / "ann.jsonl"
        path.write_text('{"entity_id": "a"}\n')
        with pytest.raises(ParseError, match=":1"):
            load_annotation_export(path)
