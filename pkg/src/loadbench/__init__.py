"""loadbench: a framework-independent data-loading engine and its benchmark harness.

The pieces compose in storage -> sampling -> transforms -> pipeline order:
generate a seeded synthetic dataset into any byte store, iterate it through
a prefetching dataloader, and measure samples-per-second under controlled
backend latency, filtering, and replica counts.
"""

from .bench import (
    AnalysisResult,
    BackendConfig,
    BenchConfig,
    BenchError,
    ReplicatedResult,
    RunResult,
    TimingBands,
    TuneResult,
    max_speed,
    pearson,
    run_loop,
    run_repetitions,
    run_replicated,
    slowdown_pct,
    sweep,
    timing_bands,
    tune_for_speed,
)
from .dataset import (
    DatasetError,
    DatasetManifest,
    DatasetSpec,
    ImageRecord,
    build_class_index,
    generate_random_dataset,
    load_manifest,
    read_record,
)
from .model import LinearModel, batch_checksum, flatten_batch, synthetic_consumer
from .pipeline import (
    Batch,
    DataLoader,
    LoaderConfig,
    LoaderStats,
    WorkerError,
    collate,
    create_loader,
)
from .sampling import SamplerConfig, SampleOrder, epoch_order, shard_for_replica
from .server import ObjectServer, serve
from .storage import (
    ByteRange,
    CacheConfig,
    CachedBackend,
    HTTPBackend,
    LatencyModel,
    LocalBackend,
    MemoryBackend,
    NotFoundError,
    RangeError,
    StorageBackend,
    StorageError,
    StorageStats,
    cached,
    with_latency,
)
from .transforms import (
    TransformConfig,
    apply_stack,
    cutout,
    horizontal_flip,
    normalize,
    to_tensor,
)

__version__ = "0.1.0"
