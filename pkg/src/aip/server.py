"""Loopback demo server: serves identity documents at their well-known
paths and one echo tool endpoint guarded by the verification middleware.

Used by the walkthrough, the HTTP overhead experiment, and manual poking
via ``aip serve-demo``. Threaded so the benchmark client can keep a
connection open while other requests arrive.
"""

from __future__ import annotations

import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Dict, Optional

from . import bindings
from .errors import VerificationError
from .identity import Resolver


class DemoToolServer:
    """Minimal MCP-style tool host.

    Routes:
      GET  /.well-known/aip/<path>.json  -> registered identity documents
      POST /tools/<name>                 -> echo tool, AIP-guarded unless
                                            require_auth is off
      GET  /health                       -> liveness
    """

    def __init__(
        self,
        resolver: Resolver,
        port: int = 0,
        require_auth: bool = True,
        documents: Optional[Dict[str, bytes]] = None,
        delay_ms: float = 0.0,
        binding_cfg: Optional[bindings.BindingConfig] = None,
    ):
        self.resolver = resolver
        self.require_auth = require_auth
        self.documents = dict(documents or {})  # url path -> raw doc bytes
        self.delay_ms = delay_ms
        self.cfg = binding_cfg or bindings.BindingConfig(require_aip=require_auth)
        self._httpd = ThreadingHTTPServer(("127.0.0.1", port), self._handler_class())
        self._thread: Optional[threading.Thread] = None

    @property
    def port(self) -> int:
        return self._httpd.server_address[1]

    @property
    def base_url(self) -> str:
        return f"http://127.0.0.1:{self.port}"

    def publish_document(self, url_path: str, raw: bytes) -> None:
        """Serve an identity document at e.g. '/.well-known/aip/agents/x.json'."""
        self.documents[url_path] = raw

    def start(self) -> None:
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def __enter__(self) -> "DemoToolServer":
        self.start()
        return self

    def __exit__(self, *exc) -> None:
        self.stop()

    def _handler_class(self):
        server = self

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"

            def log_message(self, fmt, *args):
                pass  # keep benchmark output clean

            def _send_json(self, status: int, body: dict) -> None:
                data = json.dumps(body).encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def do_GET(self):
                if self.path == "/health":
                    self._send_json(200, {"ok": True})
                    return
                doc = server.documents.get(self.path)
                if doc is not None:
                    self.send_response(200)
                    self.send_header("Content-Type", "application/json")
                    self.send_header("Content-Length", str(len(doc)))
                    self.end_headers()
                    self.wfile.write(doc)
                    return
                self._send_json(404, {"error": "not_found", "detail": self.path})

            def do_POST(self):
                if not self.path.startswith("/tools/"):
                    self._send_json(404, {"error": "not_found", "detail": self.path})
                    return
                tool_name = self.path[len("/tools/"):]
                requested = f"tool:{tool_name}"
                length = int(self.headers.get("Content-Length") or 0)
                raw = self.rfile.read(length) if length else b"{}"
                try:
                    request_body = json.loads(raw.decode("utf-8") or "{}")
                except Exception:
                    request_body = {}

                context = None
                if server.require_auth:
                    try:
                        context = bindings.verify_request(
                            dict(self.headers.items()),
                            requested,
                            server.cfg,
                            server.resolver,
                            now=int(time.time()),
                        )
                    except VerificationError as err:
                        status, body = bindings.error_response(err)
                        self._send_json(status, body)
                        return

                if server.delay_ms:
                    time.sleep(server.delay_ms / 1000.0)

                query = request_body.get("query", "")
                body = {
                    "tool": requested,
                    "results": [f"result {i} for {query!r}" for i in range(3)],
                }
                if context is not None:
                    body["verified_id"] = context.presented_id
                    body["chain_depth"] = len(context.delegation_chain)
                self._send_json(200, body)

        return Handler
