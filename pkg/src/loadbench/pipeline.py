"""The dataloader: (manifest, backend, sampler, transforms) -> batches.

Workers are threads.  Batch ``b`` is always built by worker ``b mod
num_workers``, workers may finish out of order, and delivery is strictly
in batch order, so the byte content of every batch depends only on the
seeds, never on worker count, prefetch depth, or backend latency.  The
number of batches in flight (being built or finished-but-undelivered) never
exceeds ``prefetch_depth``; with zero workers everything happens lazily in
the caller.

One consumer owns the loader.  Iterating it yields one epoch; iterating
again starts the next epoch with a fresh per-epoch shuffle.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field

import numpy as np

from .dataset import DatasetManifest, read_record
from .sampling import SamplerConfig, replica_order
from .storage import StorageBackend
from .transforms import TransformConfig, apply_stack, sample_seed

_WAIT_TICK = 0.05
_SHUTDOWN_GRACE_S = 2.0


class WorkerError(Exception):
    """A worker failed while building a batch; carries the failing sample id."""

    def __init__(self, sample_id: int, cause: BaseException) -> None:
        super().__init__(f"worker failed on sample {sample_id}: {cause!r}")
        self.sample_id = sample_id
        self.cause = cause


@dataclass(frozen=True)
class LoaderConfig:
    batch_size: int = 64
    num_workers: int = 0
    prefetch_depth: int | None = None  # None -> max(1, 2 * num_workers)
    drop_last: bool = False
    staging: bool = False
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    transform: TransformConfig = field(default_factory=TransformConfig)

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.num_workers < 0:
            raise ValueError("num_workers must be >= 0")
        if self.prefetch_depth is not None and self.prefetch_depth < 1:
            raise ValueError("prefetch_depth must be >= 1")

    @property
    def resolved_prefetch_depth(self) -> int:
        if self.prefetch_depth is not None:
            return self.prefetch_depth
        return max(1, 2 * self.num_workers)


@dataclass
class Batch:
    X: np.ndarray  # (B, C, H, W) float32
    y: np.ndarray  # (B,) int64
    batch_index: int

    def __len__(self) -> int:
        return len(self.y)


@dataclass
class LoaderStats:
    init_duration: float = 0.0
    per_batch_durations: list[float] = field(default_factory=list)
    samples_delivered: int = 0
    delivered_ids: list[int] = field(default_factory=list)
    staging_copy_seconds: float = 0.0


def collate(samples: list[tuple[np.ndarray, int]], batch_index: int = 0) -> Batch:
    """Stack transformed samples along a new leading axis."""
    if not samples:
        raise ValueError("cannot collate an empty sample list")
    images = [img for img, _ in samples]
    first = images[0].shape
    if any(img.shape != first for img in images):
        raise ValueError("heterogeneous sample shapes")
    X = np.stack(images).astype(np.float32, copy=False)
    y = np.array([label for _, label in samples], dtype=np.int64)
    return Batch(X=X, y=y, batch_index=batch_index)


class _Failure:
    __slots__ = ("error",)

    def __init__(self, error: WorkerError) -> None:
        self.error = error


class _EpochRun:
    """State of one epoch: the batch plan plus the in-flight accounting."""

    def __init__(self, epoch: int, batches: list[np.ndarray], depth: int) -> None:
        self.epoch = epoch
        self.batches = batches
        self.cond = threading.Condition()
        self.tokens = depth        # free in-flight slots
        self.next_ticket = 0       # next batch index allowed to start
        self.buf: dict[int, Batch | _Failure] = {}
        self.next_deliver = 0
        self.stop = False
        self.threads: list[threading.Thread] = []


class DataLoader:
    """Iterator of collated batches with worker-based prefetching."""

    def __init__(self, config: LoaderConfig, manifest: DatasetManifest,
                 backend: StorageBackend) -> None:
        t0 = time.perf_counter()
        self.config = config
        self.manifest = manifest
        self.backend = backend
        spec = manifest.spec
        self._batch_shape = (spec.channels, spec.height, spec.width)
        self._stats = LoaderStats()
        self._staging_buffer: np.ndarray | None = None
        self._epoch = -1
        self._run: _EpochRun | None = None
        self._closed = False
        self._stats.init_duration = time.perf_counter() - t0

    @property
    def stats(self) -> LoaderStats:
        return self._stats

    @property
    def buffered_batches(self) -> int:
        run = self._run
        if run is None:
            return 0
        with run.cond:
            return len(run.buf)

    # -- epoch lifecycle -------------------------------------------------

    def start_epoch(self, epoch: int | None = None) -> None:
        """Begin a new epoch (next in sequence by default); spawns workers."""
        if self._closed:
            raise RuntimeError("loader is shut down")
        self._abort_run()
        self._epoch = self._epoch + 1 if epoch is None else epoch
        order = replica_order(self.config.sampler, self.manifest, self._epoch,
                              backend=self.backend)
        batch_size = self.config.batch_size
        ids = order.ids
        n_full = len(ids) // batch_size
        cuts = [ids[i * batch_size:(i + 1) * batch_size] for i in range(n_full)]
        if not self.config.drop_last and len(ids) % batch_size:
            cuts.append(ids[n_full * batch_size:])
        run = _EpochRun(self._epoch, cuts, self.config.resolved_prefetch_depth)
        self._run = run
        for w in range(self.config.num_workers):
            t = threading.Thread(target=self._worker_main, args=(run, w),
                                 name=f"loadbench-worker-{w}", daemon=True)
            run.threads.append(t)
            t.start()

    def _abort_run(self) -> None:
        run = self._run
        if run is None:
            return
        with run.cond:
            run.stop = True
            run.cond.notify_all()
        for t in run.threads:
            t.join(timeout=_SHUTDOWN_GRACE_S)
        self._run = None

    def shutdown(self) -> None:
        """Stop workers and refuse further epochs; idempotent, best-effort."""
        self._abort_run()
        self._closed = True

    def __enter__(self) -> "DataLoader":
        return self

    def __exit__(self, *exc) -> None:
        self.shutdown()

    # -- batch production --------------------------------------------------

    def _build_batch(self, epoch: int, batch_index: int,
                     ids: np.ndarray) -> Batch:
        tcfg = self.config.transform
        samples = []
        for sid in ids.tolist():
            try:
                record = read_record(self.manifest, sid, self.backend)
                img = apply_stack(record, tcfg,
                                  sample_seed(tcfg.seed, epoch, sid))
            except Exception as exc:
                raise WorkerError(sid, exc) from exc
            samples.append((img, record.label))
        return collate(samples, batch_index=batch_index)

    def _worker_main(self, run: _EpochRun, worker_id: int) -> None:
        for b in range(worker_id, len(run.batches), self.config.num_workers):
            with run.cond:
                while not run.stop and not (run.next_ticket == b and run.tokens > 0):
                    run.cond.wait(_WAIT_TICK)
                if run.stop:
                    return
                run.tokens -= 1
                run.next_ticket += 1
                run.cond.notify_all()
            try:
                item: Batch | _Failure = self._build_batch(run.epoch, b,
                                                           run.batches[b])
            except WorkerError as exc:
                item = _Failure(exc)
            with run.cond:
                if run.stop:
                    return
                run.buf[b] = item
                run.cond.notify_all()
            if isinstance(item, _Failure):
                return

    def _stage(self, batch: Batch) -> None:
        if self._staging_buffer is None:
            self._staging_buffer = np.empty(
                (self.config.batch_size, *self._batch_shape), dtype=np.float32)
        t0 = time.perf_counter()
        self._staging_buffer[: len(batch)] = batch.X
        self._stats.staging_copy_seconds += time.perf_counter() - t0

    def next_batch(self) -> Batch | None:
        """The next batch in order, or None at end of epoch (and after shutdown)."""
        if self._closed:
            return None
        if self._run is None:
            self.start_epoch()
        run = self._run
        assert run is not None
        t0 = time.perf_counter()

        if run.next_deliver >= len(run.batches):
            self._abort_run()
            return None

        if self.config.num_workers == 0:
            try:
                item: Batch | _Failure = self._build_batch(
                    run.epoch, run.next_deliver, run.batches[run.next_deliver])
            except WorkerError:
                self._abort_run()
                raise
            run.next_deliver += 1
        else:
            with run.cond:
                while run.next_deliver not in run.buf and not run.stop:
                    run.cond.wait(_WAIT_TICK)
                if run.stop and run.next_deliver not in run.buf:
                    return None
                item = run.buf.pop(run.next_deliver)
                run.next_deliver += 1
                run.tokens += 1
                run.cond.notify_all()

        if isinstance(item, _Failure):
            self._abort_run()
            raise item.error

        if self.config.staging:
            self._stage(item)
        self._stats.per_batch_durations.append(time.perf_counter() - t0)
        self._stats.samples_delivered += len(item)
        self._stats.delivered_ids.extend(run.batches[item.batch_index].tolist())
        return item

    def __iter__(self):
        self._abort_run()  # restarting iteration abandons any unfinished epoch
        while True:
            batch = self.next_batch()
            if batch is None:
                return
            yield batch


def create_loader(config: LoaderConfig, manifest: DatasetManifest,
                  backend: StorageBackend) -> tuple[DataLoader, float]:
    """Construct a loader and report how long readiness took."""
    loader = DataLoader(config, manifest, backend)
    return loader, loader.stats.init_duration
