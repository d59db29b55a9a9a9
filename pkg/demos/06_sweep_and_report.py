"""A small sweep, the speed/time correlation, and a Markdown report.

Sweeps write one row per (configuration, repetition) to CSV and JSON; the
analysis side reads those rows back, correlates early speed with total
running time, and renders a report with an SVG bar chart.
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
    sweep,
)
from loadbench.report import rows_correlation, rows_max_speed, write_report

root = Path(tempfile.mkdtemp(prefix="loadbench-demo-"))
out = Path(tempfile.mkdtemp(prefix="loadbench-results-"))
spec = DatasetSpec(n_train=600, n_val=0, n_test=0, width=32, height=32,
                   channels=3, n_classes=10, seed=12)
generate_random_dataset(spec, root)

base = BenchConfig(
    loader=LoaderConfig(batch_size=16, num_workers=0,
                        sampler=SamplerConfig(kind="shuffle", seed=5),
                        transform=TransformConfig(seed=5)),
    backend=BackendConfig(kind="local", root=str(root),
                          latency=LatencyModel(mean_ms=2.0)),
    repetitions=1)

grid = {"batch_size": [8, 16, 32], "num_workers": [0, 2]}
rows = sweep(grid, base, out_dir=out)
print(f"swept {len(rows)} runs -> {out}/results.csv\n")

print("max speed per configuration:")
for key, speed in sorted(rows_max_speed(rows).items(), key=lambda kv: -kv[1]):
    batch, workers, backend = key
    print(f"  batch={batch:>3} workers={workers} ({backend}): {speed:7.1f} samples/s")

corr = rows_correlation(rows)
print(f"\nspeed vs total time: r={corr.pearson_r:.3f} "
      f"(t={corr.t_statistic:.1f}, n={corr.n})")

written = write_report(rows, out / "report.md", svg=True,
                       title="demo sweep")
print("\nreport files:")
for path in written:
    print(f"  {path}")
