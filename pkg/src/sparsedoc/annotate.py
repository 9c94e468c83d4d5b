"""Expert relevance annotation over HTTP.

The service loads the filter's entity records, serves them as annotation
tasks, and appends every submitted judgement to a JSONL log.  The log is the
source of truth: re-annotation is allowed and the latest record per entity
wins; replaying the log always reproduces the same resolved state.  Appends
are flushed and fsynced before the HTTP response goes out, so an acknowledged
annotation survives a crash.

Endpoints (all JSON unless noted):
  GET  /api/tasks?status=pending|done|all&limit=K   annotation queue, document order
  POST /api/annotations {entity_id, relevant, annotator}
  GET  /api/progress                                {"done": D, "total": T}
  GET  /api/export                                  JSONL, one {"entity_id", "relevant"} per line
An optional static directory (the browser UI) is served under /ui/.
"""

from __future__ import annotations

import json
import os
import threading
from datetime import datetime, timezone
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Mapping
from urllib.parse import parse_qs, urlparse

from .errors import ParseError, ValidationError
from .filtering import EntityRecord


def write_annotation_export(annotations: Mapping[str, bool], path: str | Path) -> int:
    """JSONL export, sorted by entity id; the format train consumes."""
    with open(path, "w", encoding="utf-8") as fh:
        for eid in sorted(annotations):
            fh.write(json.dumps({"entity_id": eid, "relevant": bool(annotations[eid])}) + "\n")
    return len(annotations)


def export_text(annotations: Mapping[str, bool]) -> str:
    return "".join(
        json.dumps({"entity_id": eid, "relevant": bool(annotations[eid])}) + "\n" for eid in sorted(annotations)
    )


def load_annotation_export(path: str | Path) -> dict[str, bool]:
    out: dict[str, bool] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                eid, relevant = obj["entity_id"], obj["relevant"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ParseError(f"{path}:{lineno}: bad annotation line: {exc}") from exc
            if not isinstance(relevant, bool):
                raise ParseError(f"{path}:{lineno}: relevant must be true/false")
            out[str(eid)] = relevant
    return out


class AnnotationStore:
    """Append-only annotation log with last-write-wins resolution."""

    def __init__(self, path: str | Path) -> None:
        self.path = Path(path)
        self._lock = threading.Lock()
        self._resolved: dict[str, bool] = {}
        if self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for lineno, line in enumerate(fh, start=1):
                    if not line.strip():
                        continue
                    try:
                        record = json.loads(line)
                        self._resolved[str(record["entity_id"])] = bool(record["relevant"])
                    except (json.JSONDecodeError, KeyError, TypeError) as exc:
                        raise ParseError(f"{self.path}:{lineno}: bad annotation record: {exc}") from exc
        self._fh = open(self.path, "a", encoding="utf-8")

    def record(self, entity_id: str, relevant: bool, annotator: str) -> dict:
        """Durably append one judgement and return the stored record."""
        entry = {
            "entity_id": entity_id,
            "relevant": bool(relevant),
            "annotator": annotator,
            "timestamp": datetime.now(timezone.utc).isoformat(),
        }
        with self._lock:
            self._fh.write(json.dumps(entry) + "\n")
            self._fh.flush()
            os.fsync(self._fh.fileno())
            self._resolved[entity_id] = bool(relevant)
        return entry

    def resolved(self) -> dict[str, bool]:
        with self._lock:
            return dict(self._resolved)

    def close(self) -> None:
        with self._lock:
            self._fh.close()


class AnnotationService:
    """Request-handling logic, kept separate from the HTTP plumbing."""

    def __init__(self, records: list[EntityRecord], store: AnnotationStore) -> None:
        ids = [r.entity_id for r in records]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate entity ids in filtered input")
        self.records = records
        self.by_id = {r.entity_id: r for r in records}
        self.store = store

    def tasks(self, status: str = "pending", limit: int | None = None) -> list[dict]:
        if status not in ("pending", "done", "all"):
            raise ValidationError(f"unknown status filter {status!r}")
        resolved = self.store.resolved()
        out = []
        for record in self.records:
            task_status = "done" if record.entity_id in resolved else "pending"
            if status != "all" and task_status != status:
                continue
            out.append(
                {
                    "entity_id": record.entity_id,
                    "doc_id": record.doc_id,
                    "sentence_text": record.sentence_text,
                    "highlight": list(record.highlight),
                    "term": record.term,
                    "status": task_status,
                }
            )
            if limit is not None and len(out) >= limit:
                break
        return out

    def annotate(self, entity_id: str, relevant: bool, annotator: str) -> dict:
        if entity_id not in self.by_id:
            raise KeyError(entity_id)
        return self.store.record(entity_id, relevant, annotator)

    def progress(self) -> dict:
        resolved = self.store.resolved()
        done = sum(1 for r in self.records if r.entity_id in resolved)
        return {"done": done, "total": len(self.records)}

    def export(self) -> str:
        resolved = self.store.resolved()
        known = {eid: val for eid, val in resolved.items() if eid in self.by_id}
        return export_text(known)


def _make_handler(service: AnnotationService, ui_dir: Path | None):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):  # keep test output quiet
            pass

        def _send(self, code: int, body: bytes, content_type: str) -> None:
            self.send_response(code)
            self.send_header("Content-Type", content_type)
            self.send_header("Content-Length", str(len(body)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
            self.send_header("Access-Control-Allow-Headers", "Content-Type")
            self.end_headers()
            self.wfile.write(body)

        def _json(self, code: int, payload) -> None:
            self._send(code, json.dumps(payload).encode("utf-8"), "application/json; charset=utf-8")

        def do_OPTIONS(self):
            self._send(204, b"", "text/plain")

        def do_GET(self):
            url = urlparse(self.path)
            if url.path == "/api/tasks":
                query = parse_qs(url.query)
                status = query.get("status", ["pending"])[0]
                limit_values = query.get("limit")
                try:
                    limit = int(limit_values[0]) if limit_values else None
                    self._json(200, service.tasks(status=status, limit=limit))
                except (ValueError, ValidationError) as exc:
                    self._json(400, {"error": str(exc)})
            elif url.path == "/api/progress":
                self._json(200, service.progress())
            elif url.path == "/api/export":
                self._send(200, service.export().encode("utf-8"), "application/x-ndjson; charset=utf-8")
            elif ui_dir is not None and (url.path == "/" or url.path.startswith("/ui")):
                self._serve_static(url.path)
            else:
                self._json(404, {"error": f"no route for {url.path}"})

        def _serve_static(self, path: str) -> None:
            rel = path.removeprefix("/ui").lstrip("/") or "index.html"
            target = (ui_dir / rel).resolve()
            if not target.is_relative_to(ui_dir.resolve()) or not target.is_file():
                self._json(404, {"error": f"no such file {rel}"})
                return
            types = {".html": "text/html", ".js": "text/javascript", ".css": "text/css", ".svg": "image/svg+xml"}
            self._send(200, target.read_bytes(), types.get(target.suffix, "application/octet-stream") + "; charset=utf-8")

        def do_POST(self):
            url = urlparse(self.path)
            if url.path != "/api/annotations":
                self._json(404, {"error": f"no route for {url.path}"})
                return
            try:
                length = int(self.headers.get("Content-Length", "0"))
                body = json.loads(self.rfile.read(length))
                entity_id = body["entity_id"]
                relevant = body["relevant"]
                if not isinstance(entity_id, str) or not isinstance(relevant, bool):
                    raise TypeError("entity_id must be a string and relevant a boolean")
                annotator = str(body.get("annotator", "anonymous"))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                self._json(400, {"error": f"malformed annotation: {exc}"})
                return
            try:
                record = service.annotate(entity_id, relevant, annotator)
            except KeyError:
                self._json(404, {"error": f"unknown entity_id {entity_id}"})
                return
            self._json(200, record)

    return Handler


def make_server(
    records: list[EntityRecord],
    store: AnnotationStore,
    host: str = "127.0.0.1",
    port: int = 0,
    ui_dir: str | Path | None = None,
) -> ThreadingHTTPServer:
    """Bound, ready-to-run server; port 0 picks a free port.  The caller runs
    serve_forever() (or start it on a thread) and closes the store afterwards."""
    service = AnnotationService(records, store)
    handler = _make_handler(service, Path(ui_dir) if ui_dir is not None else None)
    return ThreadingHTTPServer((host, port), handler)
