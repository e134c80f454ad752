from __future__ import annotations

import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

# criterion name -> (passed, detail), filled by tests/test_acceptance.py
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, (ok, detail) in ACCEPTANCE.items():
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")


class _StubHandler(BaseHTTPRequestHandler):
    """Behaviour is chosen by the first path segment: /ok, /429, /badjson, /slow, /shape."""

    def log_message(self, *args):
        pass

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        body = json.loads(self.rfile.read(length) or b"{}")
        self.server.requests.append({"path": self.path, "headers": dict(self.headers), "body": body})
        mode = self.path.strip("/").split("/")[0]
        if mode == "429":
            return self._send(429, b'{"error": "rate limited"}')
        if mode == "badjson":
            return self._send(200, b"{not json")
        if mode == "shape":
            return self._send(200, b'{"choices": []}')
        if mode == "slow":
            time.sleep(self.server.slow_seconds)
        payload = {"choices": [{"message": {"role": "assistant", "content": self.server.canned}}]}
        self._send(200, json.dumps(payload).encode())

    def _send(self, status, data):
        try:
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)
        except (BrokenPipeError, ConnectionResetError):
            pass


@pytest.fixture(scope="session")
def stub_server():
    server = ThreadingHTTPServer(("127.0.0.1", 0), _StubHandler)
    server.daemon_threads = True
    server.requests = []
    server.canned = "I pick the open cell.\nTARGET: (4, 2)"
    server.slow_seconds = 4.0
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    server.base = f"http://127.0.0.1:{server.server_address[1]}"
    yield server
    server.shutdown()


OPEN_WORLD = "\n".join(["." * 20] * 9 + ["." * 9 + "SS" + "." * 9] + ["." * 20] * 10) + "\n"


@pytest.fixture
def open_world_text():
    """10 m x 10 m obstacle-free world with a spawn patch in the middle."""
    return OPEN_WORLD
