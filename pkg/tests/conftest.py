import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest


class StubLLMServer:
    """Minimal chat-completions server: canned replies, captured requests."""

    def __init__(self):
        self.requests = []
        self.chat_replies = ["stub reply"]
        self.embedding = [1.0, 0.0, 0.0, 0.0]
        self.raw_body = None  # when set, returned verbatim for any POST
        self._reply_index = 0
        self._server = None
        self._thread = None

    @property
    def url(self):
        host, port = self._server.server_address
        return f"http://{host}:{port}"

    def _next_reply(self):
        reply = self.chat_replies[min(self._reply_index, len(self.chat_replies) - 1)]
        self._reply_index += 1
        return reply

    def start(self):
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                body = self.rfile.read(length)
                try:
                    parsed = json.loads(body)
                except ValueError:
                    parsed = body.decode("utf-8", "replace")
                stub.requests.append({"path": self.path, "body": parsed})
                if stub.raw_body is not None:
                    payload = stub.raw_body
                elif self.path == "/v1/chat/completions":
                    payload = json.dumps({
                        "choices": [{"message": {"role": "assistant",
                                                 "content": stub._next_reply()}}],
                    }).encode()
                elif self.path == "/v1/embeddings":
                    payload = json.dumps({
                        "data": [{"embedding": stub.embedding}],
                    }).encode()
                else:
                    self.send_error(404)
                    return
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(payload)))
                self.end_headers()
                self.wfile.write(payload)

            def do_GET(self):
                self.send_response(200)
                self.send_header("Content-Length", "2")
                self.end_headers()
                self.wfile.write(b"{}")

            def log_message(self, *args):
                pass

        self._server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self):
        self._server.shutdown()
        self._server.server_close()


@pytest.fixture
def stub_server():
    server = StubLLMServer().start()
    yield server
    server.stop()


def turn_script(question, moderator_answer, action_json, observation,
                rating="7", query=None, speak_reply=None):
    """Script entries for one mediated apartment turn, in gateway call order."""
    entries = []
    if query is not None:
        entries.append(query)
    entries.extend([question, moderator_answer, action_json])
    if speak_reply is not None:
        entries.append(speak_reply)
    entries.extend([observation, rating])
    return entries


def fixture_registry():
    """Four-action registry whose descriptions separate cleanly by topic."""
    from synergos.engine import ActionSpec

    noop = lambda ctx, args: "ok"
    return [
        ActionSpec("set_thermostat",
                   "Set the apartment thermostat to a temperature in degrees "
                   "Fahrenheit.", (("value", "number"),), noop),
        ActionSpec("read_thermostat",
                   "Read the current temperature setting of the apartment "
                   "thermostat.", (), noop),
        ActionSpec("speak_to_roommate",
                   "Say something to your roommate and hear their reply.",
                   (("to", "text"), ("message", "text")), noop),
        ActionSpec("make_spreadsheet",
                   "Create a spreadsheet to track shared apartment expenses "
                   "and payments.", (), noop),
    ]
