"""Streaming a dataset from the embedded object server.

Three placements of the same bytes: the local directory, a served copy with
cloud-like round trips (constant 17.3 ms), and a served copy with LAN-like
jitter (lognormal, mean 59.2 ms).  The slowdown percentages compare each
remote epoch against the local baseline.
"""

import tempfile
from pathlib import Path

from loadbench import (
    BackendConfig,
    BenchConfig,
    DatasetSpec,
    LatencyModel,
    LoaderConfig,
    SamplerConfig,
    TransformConfig,
    generate_random_dataset,
    run_loop,
    serve,
    slowdown_pct,
)

root = Path(tempfile.mkdtemp(prefix="loadbench-demo-"))
spec = DatasetSpec(n_train=0, n_val=120, n_test=0, width=32, height=32,
                   channels=3, n_classes=10, seed=4)
generate_random_dataset(spec, root)


def epoch(backend: BackendConfig) -> float:
    config = BenchConfig(
        loader=LoaderConfig(batch_size=16, num_workers=2, prefetch_depth=4,
                            sampler=SamplerConfig(kind="shuffle", seed=2),
                            transform=TransformConfig(seed=2)),
        backend=backend, split="val")
    return run_loop(config).t_f


t_local = epoch(BackendConfig(kind="local", root=str(root)))
print(f"local directory:            {t_local:5.2f}s")

cloud = LatencyModel(mean_ms=17.3, std_ms=1.3, min_ms=14.8)
with serve(root, latency=cloud) as server:
    t_cloud = epoch(BackendConfig(kind="remote", endpoint=server.endpoint))
print(f"served, 17.3 ms constant:   {t_cloud:5.2f}s  "
      f"(+{slowdown_pct(t_local, t_cloud):.0f}%)")

lan = LatencyModel(mean_ms=59.2, std_ms=58.5, min_ms=8.8,
                   distribution="lognormal", seed=1)
with serve(root, latency=lan) as server:
    t_lan = epoch(BackendConfig(kind="remote", endpoint=server.endpoint))
print(f"served, lognormal 59.2 ms:  {t_lan:5.2f}s  "
      f"(+{slowdown_pct(t_local, t_lan):.0f}%)")

print("\nHigher round-trip time, longer epoch; the server itself is the same.")
