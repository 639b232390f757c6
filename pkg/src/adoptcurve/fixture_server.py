"""Local HTTP stand-in for the model registry.

Serves GET /api/models from a directory containing models.json (a JSON
array of raw registry records) with the same author/id/cursor/limit query
parameters and X-Next-Cursor pagination header as the live API, so the
full ingestion path is testable offline. An optional status script makes
the server answer the next requests with canned HTTP codes (for retry
tests).
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

from .registry import NEXT_CURSOR_HEADER

__all__ = ["FixtureRegistryServer"]

MODELS_FILE = "models.json"
SCRIPT_FILE = "script.json"


class _Handler(BaseHTTPRequestHandler):
    server: "_Server"

    def log_message(self, fmt, *args):  # keep test output quiet
        pass

    def do_GET(self):
        parsed = urlparse(self.path)
        if parsed.path != "/api/models":
            self.send_response(404)
            self.end_headers()
            return

        scripted = self.server.pop_scripted_status()
        if scripted is not None and scripted != 200:
            self.send_response(scripted)
            self.end_headers()
            return

        query = parse_qs(parsed.query)
        records = self.server.records
        if "author" in query:
            author = query["author"][0]
            records = [r for r in records if str(r.get("id", "")).split("/")[0] == author]
        if "id" in query:
            wanted = set(query["id"])
            records = [r for r in records if r.get("id") in wanted]

        offset = int(query.get("cursor", ["0"])[0])
        limit = int(query.get("limit", [str(len(records) or 1)])[0])
        page = records[offset : offset + limit]
        next_cursor = offset + limit if offset + limit < len(records) else None

        body = json.dumps(page).encode("utf-8")
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        if next_cursor is not None:
            self.send_header(NEXT_CURSOR_HEADER, str(next_cursor))
        self.end_headers()
        self.wfile.write(body)


class _Server(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, records, statuses):
        super().__init__(("127.0.0.1", 0), _Handler)
        self.records = records
        self._statuses = list(statuses or [])
        self._lock = threading.Lock()

    def pop_scripted_status(self):
        with self._lock:
            if self._statuses:
                return self._statuses.pop(0)
        return None


class FixtureRegistryServer:
    """Context manager that serves fixture records on an ephemeral port."""

    def __init__(
        self,
        directory: str | Path | None = None,
        records: list[dict] | None = None,
        statuses: list[int] | None = None,
    ):
        if records is None:
            if directory is None:
                raise ValueError("need a fixture directory or explicit records")
            models_path = Path(directory) / MODELS_FILE
            records = json.loads(models_path.read_text(encoding="utf-8"))
            script_path = Path(directory) / SCRIPT_FILE
            if statuses is None and script_path.exists():
                statuses = json.loads(script_path.read_text(encoding="utf-8")).get(
                    "statuses"
                )
        self._server = _Server(records, statuses)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    @property
    def base_url(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}"

    def __enter__(self) -> "FixtureRegistryServer":
        self._thread.start()
        return self

    def __exit__(self, *exc_info):
        self._server.shutdown()
        self._server.server_close()
        self._thread.join(timeout=5)
        return False
