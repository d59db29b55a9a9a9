"""Command-line interface.

Subcommands mirror the workflow: ``generate`` a dataset, ``serve`` it over
HTTP, ``bench`` one configuration, ``sweep`` a grid, ``tune`` for speed,
``analyze`` result files, and ``report`` them as Markdown.  Config files are
JSON; every flag overrides its config-file counterpart.
"""

from __future__ import annotations

import argparse
import json
import statistics
import sys
import time
from dataclasses import replace
from pathlib import Path

from .bench import (
    BackendConfig,
    BenchConfig,
    run_repetitions,
    run_replicated,
    sweep,
    tune_for_speed,
)
from .dataset import DatasetSpec, generate_random_dataset
from .pipeline import LoaderConfig
from .report import (
    load_rows,
    rows_correlation,
    rows_max_speed,
    rows_slowdown,
    write_report,
)
from .sampling import SamplerConfig
from .server import serve as serve_store
from .storage import LatencyModel
from .transforms import TransformConfig


def _latency_from_dict(payload: dict | None) -> LatencyModel | None:
    if not payload:
        return None
    return LatencyModel(
        mean_ms=float(payload.get("mean_ms", 0.0)),
        std_ms=float(payload.get("std_ms", 0.0)),
        min_ms=float(payload.get("min_ms", 0.0)),
        distribution=payload.get("distribution", "constant"),
        seed=payload.get("seed"))


def _sampler_from_dict(payload: dict) -> SamplerConfig:
    classes = payload.get("classes")
    return SamplerConfig(
        kind=payload.get("kind", "shuffle"),
        seed=int(payload.get("seed", 0)),
        classes=frozenset(classes) if classes else None,
        rank=int(payload.get("rank", 0)),
        world_size=int(payload.get("world_size", 1)),
        drop_last_partial=bool(payload.get("drop_last_partial", False)),
        scan_storage=bool(payload.get("scan_storage", False)))


def _transform_from_dict(payload: dict) -> TransformConfig:
    mean = payload.get("mean", 0.5)
    std = payload.get("std", 0.5)
    return TransformConfig(
        flip_probability=float(payload.get("flip_probability", 0.5)),
        mean=tuple(mean) if isinstance(mean, list) else mean,
        std=tuple(std) if isinstance(std, list) else std,
        cutout_side=payload.get("cutout_side"),
        seed=int(payload.get("seed", 0)))


def loader_config_from_dict(payload: dict) -> LoaderConfig:
    return LoaderConfig(
        batch_size=int(payload.get("batch_size", 64)),
        num_workers=int(payload.get("num_workers", 0)),
        prefetch_depth=payload.get("prefetch_depth"),
        drop_last=bool(payload.get("drop_last", False)),
        staging=bool(payload.get("staging", False)),
        sampler=_sampler_from_dict(payload.get("sampler", {})),
        transform=_transform_from_dict(payload.get("transform", {})))


def _backend_from_dict(payload, root: str | None) -> BackendConfig:
    if isinstance(payload, str):
        payload = {"kind": payload}
    payload = payload or {}
    return BackendConfig(
        kind=payload.get("kind", "local"),
        root=payload.get("root", root),
        endpoint=payload.get("endpoint"),
        latency=_latency_from_dict(payload.get("latency")),
        cache_bytes=int(payload.get("cache_bytes", 0)))


def bench_config_from_dict(payload: dict) -> BenchConfig:
    root = payload.get("data")
    return BenchConfig(
        loader=loader_config_from_dict(payload.get("loader", {})),
        backend=_backend_from_dict(payload.get("backend"), root),
        split=payload.get("split", "train"),
        epochs=int(payload.get("epochs", 1)),
        cutoff_batches=payload.get("cutoff_batches"),
        cutoff_seconds=payload.get("cutoff_seconds"),
        run_model=bool(payload.get("run_model", False)),
        warmup_batches=int(payload.get("warmup_batches", 1)),
        speed_window=payload.get("speed_window", 10),
        repetitions=int(payload.get("repetitions", 1)),
        replicas=int(payload.get("replicas", 1)),
        consumer_delay_s=float(payload.get("consumer_delay_s", 0.0)))


def _load_json(path: str) -> dict:
    return json.loads(Path(path).read_text())


def _add_bench_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON benchmark config file")
    parser.add_argument("--data", help="dataset root directory")
    parser.add_argument("--split", choices=("train", "val", "test"))
    parser.add_argument("--batch-size", type=int)
    parser.add_argument("--workers", type=int)
    parser.add_argument("--prefetch-depth", type=int)
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--cutoff-batches", type=int)
    parser.add_argument("--cutoff-seconds", type=float)
    parser.add_argument("--run-model", action="store_true", default=None)
    parser.add_argument("--warmup", type=int, help="batches excluded from the speed metric")
    parser.add_argument("--seed", type=int, help="sampler and transform seed")
    parser.add_argument("--backend", choices=("local", "memory", "remote"))
    parser.add_argument("--endpoint", help="remote endpoint URL (or $LOADBENCH_ENDPOINT)")
    parser.add_argument("--filter-classes",
                        help="comma-separated class ids, e.g. 0,13")
    parser.add_argument("--filter-kind", choices=("indexed", "naive"),
                        default="indexed")
    parser.add_argument("--replicas", type=int)
    parser.add_argument("--repetitions", type=int)
    parser.add_argument("--staging", action="store_true", default=None)
    parser.add_argument("--consumer-delay-ms", type=float)
    parser.add_argument("--latency-mean-ms", type=float)
    parser.add_argument("--latency-std-ms", type=float)
    parser.add_argument("--latency-min-ms", type=float)
    parser.add_argument("--latency-distribution", choices=("constant", "lognormal"))


def _bench_config_from_args(args: argparse.Namespace) -> BenchConfig:
    payload = _load_json(args.config) if args.config else {}
    config = bench_config_from_dict(payload)

    loader = config.loader
    sampler = loader.sampler
    transform = loader.transform
    backend = config.backend

    if args.data is not None:
        backend = replace(backend, root=args.data)
    if args.backend is not None:
        backend = replace(backend, kind=args.backend)
    if args.endpoint is not None:
        backend = replace(backend, endpoint=args.endpoint)
    if any(getattr(args, f) is not None for f in
           ("latency_mean_ms", "latency_std_ms", "latency_min_ms",
            "latency_distribution")):
        base = backend.latency or LatencyModel(mean_ms=0.0)
        backend = replace(backend, latency=LatencyModel(
            mean_ms=args.latency_mean_ms if args.latency_mean_ms is not None else base.mean_ms,
            std_ms=args.latency_std_ms if args.latency_std_ms is not None else base.std_ms,
            min_ms=args.latency_min_ms if args.latency_min_ms is not None else base.min_ms,
            distribution=args.latency_distribution or base.distribution))

    if args.seed is not None:
        sampler = replace(sampler, seed=args.seed)
        transform = replace(transform, seed=args.seed)
    if args.filter_classes is not None:
        classes = frozenset(int(c) for c in args.filter_classes.split(",") if c)
        kind = "filter_indexed" if args.filter_kind == "indexed" else "filter_naive"
        sampler = replace(sampler, kind=kind, classes=classes)

    if args.batch_size is not None:
        loader = replace(loader, batch_size=args.batch_size)
    if args.workers is not None:
        loader = replace(loader, num_workers=args.workers)
    if args.prefetch_depth is not None:
        loader = replace(loader, prefetch_depth=args.prefetch_depth)
    if args.staging is not None:
        loader = replace(loader, staging=args.staging)
    loader = replace(loader, sampler=sampler, transform=transform)

    updates: dict = {"loader": loader, "backend": backend}
    if args.split is not None:
        updates["split"] = args.split
    if args.epochs is not None:
        updates["epochs"] = args.epochs
    if args.cutoff_batches is not None:
        updates["cutoff_batches"] = args.cutoff_batches
    if args.cutoff_seconds is not None:
        updates["cutoff_seconds"] = args.cutoff_seconds
    if args.run_model is not None:
        updates["run_model"] = args.run_model
    if args.warmup is not None:
        updates["warmup_batches"] = args.warmup
    if args.replicas is not None:
        updates["replicas"] = args.replicas
    if args.repetitions is not None:
        updates["repetitions"] = args.repetitions
    if args.consumer_delay_ms is not None:
        updates["consumer_delay_s"] = args.consumer_delay_ms / 1000.0
    return replace(config, **updates)


# -- subcommands ----------------------------------------------------------------

def _cmd_generate(args: argparse.Namespace) -> int:
    spec = DatasetSpec.from_dict(_load_json(args.spec))
    manifests = generate_random_dataset(spec, args.out,
                                        shard_capacity=args.shard_capacity)
    for split, manifest in manifests.items():
        print(f"{split}: {len(manifest)} samples, "
              f"{len(manifest.class_index)} classes populated")
    print(f"dataset written under {args.out}")
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    latency = None
    if args.latency_mean_ms or args.latency_std_ms or args.latency_min_ms:
        latency = LatencyModel(
            mean_ms=args.latency_mean_ms or 0.0,
            std_ms=args.latency_std_ms or 0.0,
            min_ms=args.latency_min_ms or 0.0,
            distribution=args.latency_distribution
            or ("lognormal" if args.latency_std_ms else "constant"))
    server = serve_store(args.dir, port=args.port, latency=latency)
    print(f"serving {args.dir} at {server.endpoint}")
    if latency:
        print(f"latency: {latency.distribution} mean={latency.mean_ms}ms "
              f"std={latency.std_ms}ms min={latency.min_ms}ms")
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        server.stop()
    return 0


def _summarize(results) -> None:
    speeds = [r.m for r in results]
    if len(speeds) > 1:
        print(f"m over {len(speeds)} repetitions: min={min(speeds):.1f} "
              f"median={statistics.median(speeds):.1f} max={max(speeds):.1f} samples/s")
    for r in results:
        init = "/".join(f"{r.init_times.get(s, 0.0) * 1000:.1f}ms"
                        for s in ("train", "val", "test"))
        print(f"rep {r.repetition}: m={r.m:.1f} samples/s N={r.N} "
              f"t_f={r.t_f:.3f}s init({init}) first_batch={r.first_batch_s * 1000:.1f}ms")


def _cmd_bench(args: argparse.Namespace) -> int:
    config = _bench_config_from_args(args)
    if args.repetitions is None and not args.config:
        config = replace(config, repetitions=3)  # harness default: 3 reps
    if config.replicas > 1:
        rep = run_replicated(config, config.replicas)
        _summarize(rep.replicas)
        print(f"aggregate speed over {config.replicas} replicas: "
              f"{rep.aggregate_speed:.1f} samples/s")
        rows = [r.to_row() for r in rep.replicas]
    else:
        results = run_repetitions(config)
        _summarize(results)
        rows = [r.to_row() for r in results]
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(json.dumps(rows, indent=2, default=str))
        print(f"wrote {out}")
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    grid = _load_json(args.grid)
    base = _bench_config_from_args(args)
    rows = sweep(grid, base, out_dir=args.out)
    failed = sum(1 for r in rows if r.get("error"))
    print(f"{len(rows)} runs ({failed} failed) -> {args.out}/results.csv")
    return 0


def _cmd_tune(args: argparse.Namespace) -> int:
    base = _bench_config_from_args(args)
    payload = _load_json(args.space)
    if isinstance(payload, list):
        space = [loader_config_from_dict(p) for p in payload]
    else:
        import itertools
        axes = {k: v for k, v in payload.items()
                if k in ("batch_size", "num_workers", "prefetch_depth", "staging")}
        names = sorted(axes)
        space = []
        for values in itertools.product(*(axes[n] for n in names)):
            overrides = dict(zip(names, values))
            space.append(replace(base.loader, **overrides))
    tuned = tune_for_speed(space, base, budget=args.budget, seed=args.tune_seed)
    print(f"evaluated {len(tuned.trials)} candidates")
    best = tuned.best
    print(f"best: batch_size={best.batch_size} num_workers={best.num_workers} "
          f"prefetch_depth={best.resolved_prefetch_depth} "
          f"-> {tuned.best_result.m:.1f} samples/s")
    if args.out:
        Path(args.out).write_text(json.dumps({
            "best": {"batch_size": best.batch_size,
                     "num_workers": best.num_workers,
                     "prefetch_depth": best.resolved_prefetch_depth,
                     "staging": best.staging},
            "speed": tuned.best_result.m,
            "trials": [{"batch_size": c.batch_size, "num_workers": c.num_workers,
                        "m": (r.m if r else None), "error": e}
                       for c, r, e in tuned.trials],
        }, indent=2))
        print(f"wrote {args.out}")
    return 0


def _cmd_analyze(args: argparse.Namespace) -> int:
    rows = load_rows(args.results)
    print(f"{len(rows)} result rows")
    payload: dict = {}

    table = rows_max_speed(rows, tuple(args.group_by.split(",")))
    print("\nmax speed per group:")
    for key, value in sorted(table.items(), key=lambda kv: str(kv[0])):
        print(f"  {key}: {value:.1f} samples/s")
    payload["max_speed"] = [{"group": list(k), "m": v} for k, v in table.items()]

    slowdowns = rows_slowdown(rows)
    if slowdowns:
        print("\nslowdown vs local baseline:")
        for s in slowdowns:
            print(f"  {s['backend']} (batch={s['batch_size']}, "
                  f"workers={s['num_workers']}): {s['slowdown_pct']:.1f}%")
        payload["slowdown"] = slowdowns

    try:
        corr = rows_correlation(rows)
        print(f"\nspeed vs total time: r={corr.pearson_r:.3f} "
              f"t={corr.t_statistic:.2f} n={corr.n}")
        payload["correlation"] = {"pearson_r": corr.pearson_r,
                                  "t_statistic": corr.t_statistic, "n": corr.n}
    except ValueError as exc:
        print(f"\ncorrelation unavailable: {exc}")

    if args.out:
        Path(args.out).write_text(json.dumps(payload, indent=2))
        print(f"wrote {args.out}")
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    rows = load_rows(args.results)
    written = write_report(rows, args.out, svg=args.svg, title=args.title)
    for path in written:
        print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="loadbench",
        description="data-loading engine benchmark harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a synthetic dataset")
    p.add_argument("--spec", required=True, help="JSON dataset spec file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--shard-capacity", type=int, default=1000)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("serve", help="serve a directory as an object store")
    p.add_argument("--dir", required=True)
    p.add_argument("--port", type=int, default=0)
    p.add_argument("--latency-mean-ms", type=float, default=0.0)
    p.add_argument("--latency-std-ms", type=float, default=0.0)
    p.add_argument("--latency-min-ms", type=float, default=0.0)
    p.add_argument("--latency-distribution", choices=("constant", "lognormal"))
    p.set_defaults(func=_cmd_serve)

    p = sub.add_parser("bench", help="run one benchmark configuration")
    _add_bench_flags(p)
    p.add_argument("--out", help="write result rows as JSON")
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("sweep", help="run a configuration grid")
    _add_bench_flags(p)
    p.add_argument("--grid", required=True, help="JSON grid file")
    p.add_argument("--out", required=True, help="output directory for CSV/JSON")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("tune", help="search loader configs for speed")
    _add_bench_flags(p)
    p.add_argument("--space", required=True,
                   help="JSON loader-config list or axis grid")
    p.add_argument("--budget", type=int, required=True)
    p.add_argument("--tune-seed", type=int, default=0)
    p.add_argument("--out", help="write tuning outcome as JSON")
    p.set_defaults(func=_cmd_tune)

    p = sub.add_parser("analyze", help="tables from result files")
    p.add_argument("--results", nargs="+", required=True)
    p.add_argument("--group-by", default="batch_size,num_workers,backend")
    p.add_argument("--out", help="write analysis as JSON")
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("report", help="Markdown report from result files")
    p.add_argument("--results", nargs="+", required=True)
    p.add_argument("--out", required=True, help="report .md path")
    p.add_argument("--svg", action="store_true")
    p.add_argument("--title", default="loadbench results")
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
