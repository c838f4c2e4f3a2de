"""Scriptable OpenAI-compatible mock server for offline runs and tests.

Script format (JSON)::

    {
      "rules": [
        {"match": "POST-001", "responses": ["Final answer: {Yes, No, No}"]},
        {"match": "flaky", "responses": [{"status": 500}, {"status": 500}, "ok"]}
      ],
      "default": "Final answer: {No, No, No}"
    }

``match`` is a regular expression searched in the user message. Responses
are served in order and the last one repeats (set ``"cycle": true`` to loop
instead). A response is a string or an object with any of ``text``,
``finish_reason``, ``status`` (HTTP error code), ``raw`` (literal body) and
``delay`` (seconds). Without a matching rule or default the server answers
HTTP 404.
"""

from __future__ import annotations

import argparse
import json
import os
import re
import sys
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

BIND_ENV = "PSEUDOLABEL_MOCK_BIND"


class _Rule:
    def __init__(self, rule: dict):
        self.pattern = re.compile(rule["match"], re.DOTALL)
        responses = rule.get("responses")
        if responses is None:
            responses = [rule["response"]]
        if not responses:
            raise ValueError(f"rule {rule['match']!r} has no responses")
        self.responses = [_normalize(r) for r in responses]
        self.cycle = bool(rule.get("cycle", False))
        self.served = 0

    def next(self) -> dict:
        n = self.served
        self.served += 1
        if self.cycle:
            return self.responses[n % len(self.responses)]
        return self.responses[min(n, len(self.responses) - 1)]


def _normalize(response) -> dict:
    if isinstance(response, str):
        return {"text": response}
    return dict(response)


class MockScript:
    def __init__(self, script: dict):
        self.rules = [_Rule(r) for r in script.get("rules", [])]
        default = script.get("default")
        self.default = _normalize(default) if default is not None else None

    @classmethod
    def load(cls, path) -> MockScript:
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))

    def respond(self, prompt: str) -> dict | None:
        for rule in self.rules:
            if rule.pattern.search(prompt):
                return rule.next()
        return self.default


class MockLLMServer:
    """Threaded HTTP server answering /v1/chat/completions from a script.

    Every request is appended to ``requests`` and ``max_in_flight`` keeps the
    high-water mark of concurrently handled requests.
    """

    def __init__(self, script: dict | MockScript, host: str = "127.0.0.1", port: int = 0):
        self.script = script if isinstance(script, MockScript) else MockScript(script)
        self.requests: list[dict] = []
        self.in_flight = 0
        self.max_in_flight = 0
        self._lock = threading.Lock()
        self._httpd = ThreadingHTTPServer((host, port), self._handler_class())
        self._httpd.daemon_threads = True
        self._thread: threading.Thread | None = None

    @property
    def url(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> MockLLMServer:
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self):
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread is not None:
            self._thread.join()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()

    def serve_forever(self):
        self._httpd.serve_forever()

    def prompts(self) -> list[str]:
        with self._lock:
            return [r["prompt"] for r in self.requests]

    def _handler_class(self):
        server = self

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"

            def log_message(self, *args):
                pass

            def _send(self, status: int, body: bytes, content_type="application/json"):
                self.send_response(status)
                self.send_header("Content-Type", content_type)
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                raw = self.rfile.read(length)
                if not self.path.rstrip("/").endswith("/chat/completions"):
                    self._send(404, b'{"error": "unknown path"}')
                    return
                try:
                    payload = json.loads(raw)
                    prompt = payload["messages"][-1]["content"]
                except (ValueError, KeyError, IndexError, TypeError):
                    self._send(400, b'{"error": "bad request"}')
                    return
                with server._lock:
                    server.in_flight += 1
                    server.max_in_flight = max(server.max_in_flight, server.in_flight)
                    entry = {
                        "prompt": prompt,
                        "model": payload.get("model"),
                        "temperature": payload.get("temperature"),
                        "max_tokens": payload.get("max_tokens"),
                        "authorization": self.headers.get("Authorization"),
                        "start": time.monotonic(),
                    }
                    server.requests.append(entry)
                    response = server.script.respond(prompt)
                try:
                    self._reply(payload, response)
                finally:
                    with server._lock:
                        server.in_flight -= 1
                        entry["end"] = time.monotonic()

            def _reply(self, payload, response):
                if response is None:
                    self._send(404, b'{"error": "no scripted response"}')
                    return
                if response.get("delay"):
                    time.sleep(float(response["delay"]))
                if "status" in response and int(response["status"]) >= 400:
                    body = json.dumps({"error": response.get("text", "scripted failure")})
                    self._send(int(response["status"]), body.encode())
                    return
                if "raw" in response:
                    self._send(200, str(response["raw"]).encode(), "text/plain")
                    return
                body = {
                    "id": "mock",
                    "object": "chat.completion",
                    "model": payload.get("model"),
                    "choices": [{
                        "index": 0,
                        "message": {"role": "assistant", "content": response.get("text", "")},
                        "finish_reason": response.get("finish_reason", "stop"),
                    }],
                }
                self._send(200, json.dumps(body).encode())

        return Handler


def _parse_bind(value: str) -> tuple[str, int]:
    host, _, port = value.rpartition(":")
    return host or "127.0.0.1", int(port)


def main(argv=None):
    parser = argparse.ArgumentParser(prog="pseudolabel-mock", description=__doc__.splitlines()[0])
    parser.add_argument("--script", required=True, help="JSON script file")
    parser.add_argument(
        "--bind",
        default=os.environ.get(BIND_ENV, "127.0.0.1:8000"),
        help=f"host:port to listen on (env {BIND_ENV})",
    )
    args = parser.parse_args(argv)
    host, port = _parse_bind(args.bind)
    server = MockLLMServer(MockScript.load(args.script), host=host, port=port)
    print(f"mock LLM listening on {server.url}", file=sys.stderr, flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    return 0


if __name__ == "__main__":
    sys.exit(main())
