"""Read-only network front end for the configure transition.

Line-oriented text protocol, UTF-8 with LF endings, one response frame
per request line; multi-line bodies end with a lone ``.`` line::

    PING                     -> OK pong
    RESOLVE <runtype>        -> OK <identity>
    GET <identity> <path|/>  -> OK <identity> + canonical payload + .
    MANIFEST <identity>      -> OK <count> + manifest lines + .
    RUNTYPES                 -> OK <count> + <runtype>TAB<identity> lines + .

Errors are ``ERR <status> <code> [<detail>]`` (400 for malformed
requests, 404 for lookups that fail) and never drop the connection.
The server performs no writes; activations land through the CLI or
library on the store host and become visible here immediately, while
clients already holding a resolved identity are untouched (immutability
makes every handed-out identity permanently valid).
"""

from __future__ import annotations

import socketserver
import threading

from .errors import ConfdbError, MalformedIdentityError
from .model import encode_payload, format_identity, parse_identity
from .store import Store
from .tree import active_trees, lookup_path, resolve_run_type, walk_tree

DEFAULT_ENDPOINT = "127.0.0.1:7401"

_STATUS_400 = {
    "malformed-identity",
    "malformed-payload",
    "invalid-name",
    "parse-error",
}
_STATUS_500 = {"corrupt-log"}


def parse_endpoint(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"endpoint must be host:port, got {text!r}")
    return host or "127.0.0.1", int(port)


def _err(exc: ConfdbError) -> str:
    if exc.code in _STATUS_400:
        status = 400
    elif exc.code in _STATUS_500:
        status = 500
    else:
        status = 404
    detail = f" {exc.detail}" if exc.detail else ""
    return f"ERR {status} {exc.code}{detail}\n"


def _split_identity_arg(rest: str):
    """Split '<identity> <tail>' where names may contain spaces.

    The identity's single ``]`` (the char is banned inside names) marks
    its end, so everything after ``] `` is the tail.
    """
    end = rest.find("]")
    if end < 0:
        raise MalformedIdentityError(f"missing key brackets: {rest!r}")
    identity = parse_identity(rest[: end + 1])
    tail = rest[end + 1 :]
    if tail.startswith(" "):
        return identity, tail[1:]
    if tail:
        raise MalformedIdentityError(f"trailing data after identity: {rest!r}")
    return identity, None


def handle_request(store: Store, line: str) -> str:
    """Process one request line into one complete response frame."""
    line = line.rstrip("\r\n")
    verb, _, rest = line.partition(" ")
    try:
        store.refresh()
        if verb == "PING":
            return "OK pong\n"
        if verb == "RESOLVE":
            if not rest:
                return "ERR 400 malformed-request missing run type\n"
            identity = resolve_run_type(store, rest)
            return f"OK {format_identity(identity)}\n"
        if verb == "GET":
            identity, path = _split_identity_arg(rest)
            if path is None or not path:
                return "ERR 400 malformed-request missing path\n"
            obj = lookup_path(store, identity, path)
            payload = encode_payload(obj.payload).decode("utf-8")
            return f"OK {format_identity(obj.identity)}\n{payload}.\n"
        if verb == "MANIFEST":
            identity, tail = _split_identity_arg(rest)
            if tail is not None:
                return "ERR 400 malformed-request trailing data\n"
            manifest = walk_tree(store, identity)
            body = manifest.to_text()
            return f"OK {len(manifest.entries)}\n{body}.\n"
        if verb == "RUNTYPES":
            bindings = active_trees(store)
            lines = [
                f"{run_type}\t{format_identity(target)}"
                for run_type, target in bindings.items()
            ]
            body = "".join(line + "\n" for line in lines)
            return f"OK {len(lines)}\n{body}.\n"
        return "ERR 400 unknown-verb\n"
    except ConfdbError as exc:
        return _err(exc)
    except Exception:
        return "ERR 500 internal\n"


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        while True:
            raw = self.rfile.readline()
            if not raw:
                return
            try:
                line = raw.decode("utf-8")
            except UnicodeDecodeError:
                self._reply("ERR 400 malformed-request not utf-8\n")
                continue
            self._reply(handle_request(self.server.store, line))

    def _reply(self, frame: str):
        self.wfile.write(frame.encode("utf-8"))
        self.wfile.flush()


class ConfigServer(socketserver.ThreadingTCPServer):
    """One handler thread per connection; all share the store's read side."""

    allow_reuse_address = True
    daemon_threads = True
    request_queue_size = 128

    def __init__(self, store: Store, endpoint: str = DEFAULT_ENDPOINT):
        self.store = store
        super().__init__(parse_endpoint(endpoint), _Handler)

    @property
    def endpoint(self) -> str:
        host, port = self.server_address[:2]
        return f"{host}:{port}"


def start_server(store: Store, endpoint: str = DEFAULT_ENDPOINT) -> ConfigServer:
    """Bind and serve in a background thread; caller shuts down."""
    server = ConfigServer(store, endpoint)
    thread = threading.Thread(
        target=server.serve_forever, kwargs={"poll_interval": 0.05}, daemon=True
    )
    thread.start()
    return server


def serve(store: Store, endpoint: str = DEFAULT_ENDPOINT):
    """Blocking entry point used by the CLI ``serve`` command."""
    with ConfigServer(store, endpoint) as server:
        server.serve_forever()
