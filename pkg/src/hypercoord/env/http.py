"""Minimal HTTP-shaped plumbing shared by the environment and the agents.

Every service is an :class:`App` mounted at a base URL on a network. The
in-process :class:`Network` routes requests by URL prefix and is what the
deterministic simulation uses; :func:`serve` exposes the same network over
real HTTP/1.1 with the standard library server.
"""

from __future__ import annotations

import json
import logging
import re
import threading
import urllib.error
import urllib.request
from collections import Counter
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable, Dict, List, Optional, Tuple
from urllib.parse import parse_qs, urlsplit

from hypercoord.errors import TransportError

log = logging.getLogger(__name__)

JSON = "application/json"


@dataclass
class Request:
    method: str
    url: str
    body: bytes = b""
    headers: Dict[str, str] = field(default_factory=dict)
    path: str = ""            # path relative to the app mount, filled by the router
    params: Dict[str, str] = field(default_factory=dict)

    @property
    def query(self) -> Dict[str, str]:
        return {k: v[-1] for k, v in parse_qs(urlsplit(self.url).query).items()}

    def header(self, name: str, default=None):
        for k, v in self.headers.items():
            if k.lower() == name.lower():
                return v
        return default

    def json(self):
        return json.loads(self.body.decode("utf-8") or "null")

    @property
    def text(self) -> str:
        return self.body.decode("utf-8")


@dataclass
class Response:
    status: int = 200
    body: bytes = b""
    headers: Dict[str, str] = field(default_factory=dict)

    @classmethod
    def of_json(cls, doc, status=200, headers=None):
        h = {"Content-Type": JSON}
        h.update(headers or {})
        return cls(status, json.dumps(doc, sort_keys=True).encode("utf-8"), h)

    @classmethod
    def of_text(cls, text, content_type, status=200, headers=None):
        h = {"Content-Type": content_type}
        h.update(headers or {})
        return cls(status, text.encode("utf-8"), h)

    @classmethod
    def error(cls, status, message, **extra):
        return cls.of_json({"error": message, **extra}, status)

    @property
    def ok(self):
        return 200 <= self.status < 300

    def header(self, name: str, default=None):
        for k, v in self.headers.items():
            if k.lower() == name.lower():
                return v
        return default

    def json(self):
        return json.loads(self.body.decode("utf-8") or "null")

    @property
    def text(self) -> str:
        return self.body.decode("utf-8")


Handler = Callable[[Request], Response]


class App:
    """Route table keyed by method and a path template like ``things/{id}``."""

    def __init__(self):
        self._routes: List[Tuple[str, re.Pattern, Handler]] = []

    def route(self, method: str, template: str, handler: Handler):
        regex = re.sub(r"\{(\w+)\}", r"(?P<\1>[^/]+)", template.strip("/"))
        self._routes.append((method.upper(), re.compile(f"^{regex}$"), handler))

    def handle(self, request: Request) -> Response:
        path = request.path.strip("/")
        allowed = False
        for method, regex, handler in self._routes:
            m = regex.match(path)
            if not m:
                continue
            allowed = True
            if method == request.method.upper():
                request.params = m.groupdict()
                return handler(request)
        if allowed:
            return Response.error(405, "method not allowed")
        return Response.error(404, f"no route for {request.path!r}")


class Network:
    """In-process request router with fault injection and request counters."""

    def __init__(self):
        self._mounts: Dict[str, App] = {}
        self._lock = threading.RLock()
        self.unreachable: set = set()
        self.counter: Counter = Counter()

    def mount(self, base: str, app: App):
        with self._lock:
            self._mounts[base] = app

    def unmount(self, base: str):
        with self._lock:
            self._mounts.pop(base, None)

    def _find(self, url: str):
        with self._lock:
            best = None
            for base in self._mounts:
                if url.startswith(base) and (best is None or len(base) > len(best)):
                    best = base
            return best, self._mounts.get(best)

    def request(self, method: str, url: str, body=None, headers=None,
                json_body=None) -> Response:
        headers = dict(headers or {})
        if json_body is not None:
            body = json.dumps(json_body, sort_keys=True)
            headers.setdefault("Content-Type", JSON)
        if isinstance(body, str):
            body = body.encode("utf-8")
        target = url.split("?", 1)[0]
        self.counter[(method.upper(), target)] += 1
        if any(url.startswith(prefix) for prefix in self.unreachable):
            raise TransportError(f"{url} is unreachable")
        base, app = self._find(url)
        if app is None:
            raise TransportError(f"nothing listens at {url}")
        req = Request(method.upper(), url, body or b"", headers, path=target[len(base):])
        return app.handle(req)

    def count(self, method: str, url: str) -> int:
        return self.counter[(method.upper(), url)]


class HttpClient:
    """Same request interface as Network, over real HTTP."""

    def __init__(self, timeout: float = 5.0):
        self.timeout = timeout
        self.counter: Counter = Counter()

    def request(self, method, url, body=None, headers=None, json_body=None) -> Response:
        headers = dict(headers or {})
        if json_body is not None:
            body = json.dumps(json_body, sort_keys=True)
            headers.setdefault("Content-Type", JSON)
        if isinstance(body, str):
            body = body.encode("utf-8")
        self.counter[(method.upper(), url.split("?", 1)[0])] += 1
        req = urllib.request.Request(url, data=body, headers=headers, method=method.upper())
        opener = urllib.request.build_opener(_NoRedirect)
        try:
            with opener.open(req, timeout=self.timeout) as resp:
                return Response(resp.status, resp.read(), dict(resp.headers))
        except urllib.error.HTTPError as err:
            return Response(err.code, err.read(), dict(err.headers))
        except (urllib.error.URLError, OSError) as exc:
            raise TransportError(f"{url}: {exc}") from exc


class _NoRedirect(urllib.request.HTTPRedirectHandler):
    def redirect_request(self, *args, **kwargs):
        return None


def serve(network: Network, base_uri: str, host: str = "127.0.0.1", port: int = 8080):
    """Expose a network over HTTP; returns the (not yet started) server.

    Incoming paths are resolved against ``base_uri`` before routing, so the
    base must be the address clients use.
    """

    class _Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def _dispatch(self):
            length = int(self.headers.get("Content-Length") or 0)
            body = self.rfile.read(length) if length else b""
            url = base_uri.rstrip("/") + self.path
            try:
                resp = network.request(self.command, url, body, dict(self.headers))
            except TransportError as exc:
                resp = Response.error(502, str(exc))
            except Exception as exc:  # keep the server alive
                log.exception("handler failed")
                resp = Response.error(500, str(exc))
            self.send_response(resp.status)
            for k, v in resp.headers.items():
                self.send_header(k, v)
            self.send_header("Content-Length", str(len(resp.body)))
            self.end_headers()
            if self.command != "HEAD":
                self.wfile.write(resp.body)

        do_GET = do_PUT = do_POST = do_DELETE = do_HEAD = _dispatch

        def log_message(self, fmt, *args):
            log.debug(fmt, *args)

    return ThreadingHTTPServer((host, port), _Handler)


def serve_in_thread(network: Network, base_uri: str, host="127.0.0.1", port=0):
    server = serve(network, base_uri, host, port)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server, thread
