"""Byte stores: local directory, in-memory, and S3-compatible HTTP backends.

All backends speak the same small contract (get / put / list / size) with
inclusive byte ranges, so the loading pipeline never knows where bytes live.
Two wrappers recreate network conditions on top of any backend:

* ``with_latency`` delays every request by a sample from a ``LatencyModel``
  (constant or lognormal round-trip time, clamped to a floor).
* ``CachedBackend`` adds a byte-capacity LRU over (key, range) entries.

Ranges are strict: a range reaching past the end of the object is an error,
not a clamp, so every backend returns identical bytes for identical requests.
"""

from __future__ import annotations

import math
import random
import threading
import time
import urllib.error
import urllib.request
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path, PurePosixPath
from urllib.parse import quote


class StorageError(Exception):
    """Base error for backend failures."""


class NotFoundError(StorageError):
    """The requested key does not exist."""


class RangeError(StorageError):
    """The requested byte range is not satisfiable."""


def validate_key(key: str) -> str:
    """Object keys are non-empty relative POSIX paths without '..' segments."""
    if not key or key.startswith("/"):
        raise ValueError(f"invalid object key {key!r}")
    if ".." in PurePosixPath(key).parts:
        raise ValueError(f"object key {key!r} contains '..'")
    return key


@dataclass(frozen=True)
class ByteRange:
    """Inclusive byte range; ``end=None`` means to the end of the object."""

    start: int
    end: int | None = None

    def __post_init__(self) -> None:
        if self.start < 0:
            raise ValueError("range start must be >= 0")
        if self.end is not None and self.end < self.start:
            raise ValueError("range end must be >= start")

    def resolve(self, size: int) -> tuple[int, int]:
        """Concrete (start, end) against an object of ``size`` bytes."""
        end = size - 1 if self.end is None else self.end
        if self.start >= size or end >= size:
            raise RangeError(
                f"range [{self.start}, {end}] beyond object of {size} bytes")
        return self.start, end


class StorageBackend:
    """Contract shared by every byte store."""

    def get(self, key: str, byte_range: ByteRange | None = None) -> bytes:
        raise NotImplementedError

    def put(self, key: str, data: bytes) -> None:
        raise NotImplementedError

    def list(self, prefix: str = "") -> list[str]:
        raise NotImplementedError

    def size(self, key: str) -> int:
        return len(self.get(key))


class LocalBackend(StorageBackend):
    """Files under a root directory; ranged reads via seek."""

    def __init__(self, root: str | Path, create: bool = False) -> None:
        self.root = Path(root)
        if create:
            self.root.mkdir(parents=True, exist_ok=True)
        if not self.root.is_dir():
            raise StorageError(f"{self.root} is not a directory")

    def _path(self, key: str) -> Path:
        return self.root / validate_key(key)

    def get(self, key: str, byte_range: ByteRange | None = None) -> bytes:
        path = self._path(key)
        try:
            if byte_range is None:
                return path.read_bytes()
            start, end = byte_range.resolve(path.stat().st_size)
            with path.open("rb") as fh:
                fh.seek(start)
                return fh.read(end - start + 1)
        except FileNotFoundError:
            raise NotFoundError(key) from None

    def put(self, key: str, data: bytes) -> None:
        path = self._path(key)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_bytes(data)
        except OSError as exc:
            raise StorageError(f"cannot write {key}: {exc}") from exc

    def list(self, prefix: str = "") -> list[str]:
        keys = [p.relative_to(self.root).as_posix()
                for p in self.root.rglob("*") if p.is_file()]
        return sorted(k for k in keys if k.startswith(prefix))

    def size(self, key: str) -> int:
        try:
            return self._path(key).stat().st_size
        except FileNotFoundError:
            raise NotFoundError(key) from None


class MemoryBackend(StorageBackend):
    """Objects held in a dict; the fastest possible store."""

    def __init__(self, objects: dict[str, bytes] | None = None) -> None:
        self._objects: dict[str, bytes] = dict(objects or {})
        self._lock = threading.Lock()

    @classmethod
    def load(cls, source: StorageBackend, prefix: str = "") -> "MemoryBackend":
        """Copy every object under ``prefix`` from another backend into RAM."""
        backend = cls()
        for key in source.list(prefix):
            backend.put(key, source.get(key))
        return backend

    def get(self, key: str, byte_range: ByteRange | None = None) -> bytes:
        validate_key(key)
        with self._lock:
            if key not in self._objects:
                raise NotFoundError(key)
            data = self._objects[key]
        if byte_range is None:
            return data
        start, end = byte_range.resolve(len(data))
        return data[start:end + 1]

    def put(self, key: str, data: bytes) -> None:
        validate_key(key)
        with self._lock:
            self._objects[key] = bytes(data)

    def list(self, prefix: str = "") -> list[str]:
        with self._lock:
            return sorted(k for k in self._objects if k.startswith(prefix))

    def size(self, key: str) -> int:
        with self._lock:
            if key not in self._objects:
                raise NotFoundError(key)
            return len(self._objects[key])


class HTTPBackend(StorageBackend):
    """Client for the object server's wire protocol (path-style GET/PUT/HEAD).

    Ranged reads are sent as ``Range: bytes=a-b`` (``a-`` when open-ended);
    404 maps to NotFoundError and 416 to RangeError.
    """

    def __init__(self, endpoint: str, timeout: float = 30.0) -> None:
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout

    def _url(self, key: str, query: str = "") -> str:
        url = f"{self.endpoint}/{quote(validate_key(key))}"
        return f"{url}?{query}" if query else url

    def _request(self, req: urllib.request.Request) -> bytes:
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                return resp.read()
        except urllib.error.HTTPError as exc:
            if exc.code == 404:
                raise NotFoundError(req.full_url) from None
            if exc.code == 416:
                raise RangeError(req.full_url) from None
            raise StorageError(f"HTTP {exc.code} for {req.full_url}") from exc
        except urllib.error.URLError as exc:
            raise StorageError(f"transport failure: {exc.reason}") from exc

    def get(self, key: str, byte_range: ByteRange | None = None) -> bytes:
        headers = {}
        if byte_range is not None:
            end = "" if byte_range.end is None else byte_range.end
            headers["Range"] = f"bytes={byte_range.start}-{end}"
        return self._request(urllib.request.Request(self._url(key), headers=headers))

    def put(self, key: str, data: bytes) -> None:
        self._request(urllib.request.Request(self._url(key), data=data, method="PUT"))

    def list(self, prefix: str = "") -> list[str]:
        req = urllib.request.Request(
            f"{self.endpoint}/?prefix={quote(prefix)}")
        body = self._request(req).decode("utf-8")
        return [line for line in body.splitlines() if line]

    def size(self, key: str) -> int:
        req = urllib.request.Request(self._url(key), method="HEAD")
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                return int(resp.headers["Content-Length"])
        except urllib.error.HTTPError as exc:
            if exc.code == 404:
                raise NotFoundError(key) from None
            raise StorageError(f"HTTP {exc.code} for HEAD {key}") from exc


@dataclass
class LatencyModel:
    """Round-trip-time model applied per request.

    ``constant`` ignores std; ``lognormal`` matches the given mean/std of the
    RTT itself (the underlying normal's mu/sigma are derived from them).
    Samples never go below ``min_ms``.
    """

    mean_ms: float
    std_ms: float = 0.0
    min_ms: float = 0.0
    distribution: str = "constant"
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.distribution not in ("constant", "lognormal"):
            raise ValueError(f"unknown distribution {self.distribution!r}")
        if self.mean_ms < 0 or self.std_ms < 0 or self.min_ms < 0:
            raise ValueError("latency parameters must be >= 0")
        self._rng = random.Random(self.seed)
        self._lock = threading.Lock()

    def sample_ms(self) -> float:
        if self.distribution == "constant" or self.std_ms == 0 or self.mean_ms == 0:
            return max(self.mean_ms, self.min_ms)
        ratio = self.std_ms / self.mean_ms
        sigma2 = math.log(1.0 + ratio * ratio)
        mu = math.log(self.mean_ms) - sigma2 / 2.0
        with self._lock:
            value = self._rng.lognormvariate(mu, math.sqrt(sigma2))
        return max(value, self.min_ms)

    def sample_seconds(self) -> float:
        return self.sample_ms() / 1000.0


class LatencyBackend(StorageBackend):
    """Delays every request by one latency sample, then defers to the inner backend."""

    def __init__(self, inner: StorageBackend, model: LatencyModel) -> None:
        self.inner = inner
        self.model = model

    def _wait(self) -> None:
        delay = self.model.sample_seconds()
        if delay > 0:
            time.sleep(delay)

    def get(self, key: str, byte_range: ByteRange | None = None) -> bytes:
        self._wait()
        return self.inner.get(key, byte_range)

    def put(self, key: str, data: bytes) -> None:
        self._wait()
        self.inner.put(key, data)

    def list(self, prefix: str = "") -> list[str]:
        self._wait()
        return self.inner.list(prefix)

    def size(self, key: str) -> int:
        self._wait()
        return self.inner.size(key)


def with_latency(backend: StorageBackend, model: LatencyModel) -> LatencyBackend:
    return LatencyBackend(backend, model)


@dataclass
class CacheConfig:
    capacity_bytes: int

    def __post_init__(self) -> None:
        if self.capacity_bytes <= 0:
            raise ValueError("capacity_bytes must be > 0")


@dataclass
class StorageStats:
    hits: int = 0
    misses: int = 0
    evictions: int = 0
    requests: int = 0
    bytes_read: int = 0


class CachedBackend(StorageBackend):
    """Byte-capacity LRU over (key, range) entries.

    Objects are assumed immutable, so a hit is always byte-identical to the
    inner read.  Entries larger than the whole capacity bypass the cache.
    Ranged reads of the same object are distinct entries (no coalescing).
    A put invalidates that key's entries.
    """

    def __init__(self, inner: StorageBackend, config: CacheConfig) -> None:
        self.inner = inner
        self.config = config
        self.stats = StorageStats()
        self._entries: OrderedDict[tuple, bytes] = OrderedDict()
        self._used = 0
        self._lock = threading.Lock()

    @staticmethod
    def _cache_key(key: str, byte_range: ByteRange | None) -> tuple:
        if byte_range is None:
            return (key, None)
        return (key, (byte_range.start, byte_range.end))

    def get(self, key: str, byte_range: ByteRange | None = None) -> bytes:
        ck = self._cache_key(key, byte_range)
        with self._lock:
            self.stats.requests += 1
            if ck in self._entries:
                self.stats.hits += 1
                self._entries.move_to_end(ck)
                return self._entries[ck]
            self.stats.misses += 1
        data = self.inner.get(key, byte_range)
        with self._lock:
            self.stats.bytes_read += len(data)
            if len(data) <= self.config.capacity_bytes and ck not in self._entries:
                self._entries[ck] = data
                self._used += len(data)
                while self._used > self.config.capacity_bytes:
                    _, evicted = self._entries.popitem(last=False)
                    self._used -= len(evicted)
                    self.stats.evictions += 1
        return data

    def put(self, key: str, data: bytes) -> None:
        self.inner.put(key, data)
        with self._lock:
            stale = [ck for ck in self._entries if ck[0] == key]
            for ck in stale:
                self._used -= len(self._entries.pop(ck))

    def list(self, prefix: str = "") -> list[str]:
        return self.inner.list(prefix)

    def size(self, key: str) -> int:
        return self.inner.size(key)

    @property
    def cached_bytes(self) -> int:
        with self._lock:
            return self._used


def cached(backend: StorageBackend, capacity_bytes: int) -> CachedBackend:
    return CachedBackend(backend, CacheConfig(capacity_bytes))
