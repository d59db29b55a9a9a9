"""Embeddable object server: a minimal S3-style store over HTTP/1.1.

Wire protocol (path-style keys, no auth):

    GET /{key}                 200 + full body
    GET /{key} + Range header  206 + requested bytes + Content-Range
    HEAD /{key}                headers only (Content-Length, Accept-Ranges)
    PUT /{key}                 200 after storing the body
    GET /?prefix=p             200 + newline-separated keys (listing helper)
    404                        unknown key
    416                        unsatisfiable range (+ Content-Range: bytes */total)

An optional ``LatencyModel`` delays each request before it is served, which
is how the remote-storage experiments dial in AWS-like or LAN-like round
trips.  Connections are handled on independent threads, so concurrent
clients each pay their own latency rather than queueing behind one another.
"""

from __future__ import annotations

import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import unquote, urlparse, parse_qs

from .storage import (
    ByteRange,
    LatencyModel,
    LocalBackend,
    NotFoundError,
    RangeError,
    StorageBackend,
)

_RANGE_RE = re.compile(r"bytes=(\d+)-(\d*)$")


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "loadbench-store/0.1"

    # set per server class in ObjectServer
    backend: StorageBackend
    latency: LatencyModel | None

    def _delay(self) -> None:
        if self.latency is not None:
            delay = self.latency.sample_seconds()
            if delay > 0:
                threading.Event().wait(delay)

    def _key(self) -> str:
        return unquote(urlparse(self.path).path.lstrip("/"))

    def _send(self, status: int, body: bytes = b"",
              headers: dict[str, str] | None = None) -> None:
        self.send_response(status)
        for name, value in (headers or {}).items():
            self.send_header(name, value)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        if body and self.command != "HEAD":
            self.wfile.write(body)

    def _serve_listing(self) -> None:
        query = parse_qs(urlparse(self.path).query)
        prefix = query.get("prefix", [""])[0]
        body = "\n".join(self.backend.list(prefix)).encode("utf-8")
        self._send(200, body, {"Content-Type": "text/plain; charset=utf-8"})

    def do_GET(self) -> None:  # noqa: N802 (http.server naming)
        self._delay()
        key = self._key()
        if not key:
            self._serve_listing()
            return
        try:
            total = self.backend.size(key)
        except NotFoundError:
            self._send(404)
            return
        except ValueError:
            self._send(400)
            return

        range_header = self.headers.get("Range")
        if range_header is None:
            try:
                body = self.backend.get(key)
            except NotFoundError:
                self._send(404)
                return
            except Exception:
                self._send(500)
                return
            self._send(200, body, {
                "Content-Type": "application/octet-stream",
                "Accept-Ranges": "bytes",
            })
            return

        match = _RANGE_RE.match(range_header.strip())
        if not match:
            self._send(416, headers={"Content-Range": f"bytes */{total}"})
            return
        start = int(match.group(1))
        end = int(match.group(2)) if match.group(2) else None
        try:
            body = self.backend.get(key, ByteRange(start, end))
        except (RangeError, ValueError):
            self._send(416, headers={"Content-Range": f"bytes */{total}"})
            return
        except NotFoundError:
            self._send(404)
            return
        except Exception:
            self._send(500)
            return
        last = start + len(body) - 1
        self._send(206, body, {
            "Content-Type": "application/octet-stream",
            "Accept-Ranges": "bytes",
            "Content-Range": f"bytes {start}-{last}/{total}",
        })

    def do_HEAD(self) -> None:  # noqa: N802
        self._delay()
        key = self._key()
        try:
            total = self.backend.size(key)
        except (NotFoundError, ValueError):
            self._send(404)
            return
        self.send_response(200)
        self.send_header("Content-Type", "application/octet-stream")
        self.send_header("Accept-Ranges", "bytes")
        self.send_header("Content-Length", str(total))
        self.end_headers()

    def do_PUT(self) -> None:  # noqa: N802
        self._delay()
        key = self._key()
        length = int(self.headers.get("Content-Length", 0))
        data = self.rfile.read(length) if length else b""
        try:
            self.backend.put(key, data)
        except ValueError:
            self._send(400)
            return
        except Exception:
            self._send(500)
            return
        self._send(200)

    def log_message(self, fmt: str, *args) -> None:  # silence request logging
        pass


class ObjectServer:
    """A running store; use as a context manager or call ``stop()`` yourself."""

    def __init__(self, backend: StorageBackend, port: int = 0,
                 host: str = "127.0.0.1",
                 latency: LatencyModel | None = None) -> None:
        handler = type("BoundHandler", (_Handler,),
                       {"backend": backend, "latency": latency})
        self._httpd = ThreadingHTTPServer((host, port), handler)
        self._httpd.daemon_threads = True
        self.backend = backend
        self.host = host
        self.port = self._httpd.server_address[1]
        self._thread = threading.Thread(
            target=self._httpd.serve_forever, name="loadbench-store", daemon=True)
        self._thread.start()

    @property
    def endpoint(self) -> str:
        return f"http://{self.host}:{self.port}"

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        self._thread.join(timeout=5)

    def __enter__(self) -> "ObjectServer":
        return self

    def __exit__(self, *exc) -> None:
        self.stop()


def serve(directory: str | Path | StorageBackend, port: int = 0,
          latency: LatencyModel | None = None,
          host: str = "127.0.0.1") -> ObjectServer:
    """Serve a directory (or any backend) on ``port`` (0 picks a free one)."""
    backend = (directory if isinstance(directory, StorageBackend)
               else LocalBackend(directory))
    return ObjectServer(backend, port=port, host=host, latency=latency)
