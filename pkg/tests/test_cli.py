import json

import pytest

from loadbench.cli import bench_config_from_dict, loader_config_from_dict, main
from loadbench.dataset import DatasetSpec, generate_random_dataset
from loadbench.report import render_bar_chart_svg, render_markdown, rows_slowdown


@pytest.fixture(scope="module")
def cli_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli-data")
    spec = DatasetSpec(n_train=96, n_val=8, n_test=8, width=4, height=4,
                       channels=3, n_classes=20, seed=21)
    generate_random_dataset(spec, root, shard_capacity=32)
    return root


def test_generate_command(tmp_path, capsys):
    spec_file = tmp_path / "spec.json"
    spec_file.write_text(json.dumps({
        "n_train": 10, "n_val": 2, "n_test": 2, "width": 4, "height": 4,
        "channels": 1, "n_classes": 3, "seed": 5}))
    out_dir = tmp_path / "data"
    assert main(["generate", "--spec", str(spec_file), "--out", str(out_dir),
                 "--shard-capacity", "4"]) == 0
    captured = capsys.readouterr().out
    assert "train: 10 samples" in captured
    assert (out_dir / "train" / "manifest.json").exists()
    assert (out_dir / "train" / "shard-00002.dlbs").exists()  # 10 / 4 -> 3 shards


def test_bench_command(cli_dataset, tmp_path, capsys):
    out = tmp_path / "run.json"
    code = main(["bench", "--data", str(cli_dataset), "--batch-size", "8",
                 "--workers", "0", "--cutoff-batches", "6", "--seed", "3",
                 "--repetitions", "1", "--out", str(out)])
    assert code == 0
    stdout = capsys.readouterr().out
    assert "samples/s" in stdout
    rows = json.loads(out.read_text())
    assert len(rows) == 1
    assert rows[0]["N"] == 5 * 8  # warm-up excludes the first batch


def test_bench_command_repetition_summary(cli_dataset, capsys):
    code = main(["bench", "--data", str(cli_dataset), "--batch-size", "8",
                 "--cutoff-batches", "4", "--repetitions", "3"])
    assert code == 0
    stdout = capsys.readouterr().out
    assert "min=" in stdout and "median=" in stdout and "max=" in stdout


def test_bench_command_filter_and_replicas(cli_dataset, capsys):
    code = main(["bench", "--data", str(cli_dataset), "--batch-size", "4",
                 "--filter-classes", "0,13", "--replicas", "2",
                 "--repetitions", "1"])
    assert code == 0
    assert "aggregate speed" in capsys.readouterr().out


def test_bench_command_config_file(cli_dataset, tmp_path, capsys):
    config = {
        "data": str(cli_dataset),
        "split": "train",
        "backend": {"kind": "memory",
                    "latency": {"mean_ms": 1.0, "distribution": "constant"}},
        "loader": {"batch_size": 8, "num_workers": 1,
                   "sampler": {"kind": "shuffle", "seed": 9},
                   "transform": {"seed": 9}},
        "cutoff_batches": 4,
        "repetitions": 1,
    }
    config_file = tmp_path / "bench.json"
    config_file.write_text(json.dumps(config))
    assert main(["bench", "--config", str(config_file)]) == 0
    assert "rep 0" in capsys.readouterr().out


def test_sweep_and_analyze_and_report(cli_dataset, tmp_path, capsys):
    grid_file = tmp_path / "grid.json"
    grid_file.write_text(json.dumps({
        "batch_size": [4, 8], "num_workers": [0, 1]}))
    out_dir = tmp_path / "sweep-out"
    code = main(["sweep", "--data", str(cli_dataset), "--grid", str(grid_file),
                 "--out", str(out_dir), "--cutoff-batches", "4",
                 "--repetitions", "1", "--seed", "2"])
    assert code == 0
    assert (out_dir / "results.csv").exists()
    capsys.readouterr()

    analysis_out = tmp_path / "analysis.json"
    code = main(["analyze", "--results", str(out_dir / "results.json"),
                 "--out", str(analysis_out)])
    assert code == 0
    stdout = capsys.readouterr().out
    assert "max speed per group" in stdout
    payload = json.loads(analysis_out.read_text())
    assert "max_speed" in payload

    report_out = tmp_path / "report.md"
    code = main(["report", "--results", str(out_dir / "results.csv"),
                 "--out", str(report_out), "--svg"])
    assert code == 0
    text = report_out.read_text()
    assert text.startswith("# loadbench results")
    assert "Max speed per configuration" in text
    assert report_out.with_suffix(".svg").read_text().startswith("<svg")


def test_tune_command(cli_dataset, tmp_path, capsys):
    space_file = tmp_path / "space.json"
    space_file.write_text(json.dumps({"num_workers": [0, 1]}))
    out = tmp_path / "tuned.json"
    code = main(["tune", "--data", str(cli_dataset), "--space", str(space_file),
                 "--budget", "2", "--cutoff-batches", "4", "--batch-size", "8",
                 "--out", str(out)])
    assert code == 0
    assert "best:" in capsys.readouterr().out
    payload = json.loads(out.read_text())
    assert payload["best"]["num_workers"] in (0, 1)
    assert len(payload["trials"]) == 2


def test_config_dict_roundtrip():
    payload = {
        "data": "/tmp/x",
        "backend": "memory",
        "loader": {"batch_size": 32, "num_workers": 2, "prefetch_depth": 5,
                   "sampler": {"kind": "filter_indexed", "classes": [0, 13],
                               "seed": 4},
                   "transform": {"mean": [0.5, 0.5, 0.5], "std": [0.5, 0.5, 0.5],
                                 "seed": 4}},
        "cutoff_seconds": 2.5,
        "run_model": True,
    }
    config = bench_config_from_dict(payload)
    assert config.backend.kind == "memory"
    assert config.backend.root == "/tmp/x"
    assert config.loader.batch_size == 32
    assert config.loader.sampler.classes == frozenset({0, 13})
    assert config.loader.transform.mean == (0.5, 0.5, 0.5)
    assert config.cutoff_seconds == 2.5
    assert config.run_model is True

    loader = loader_config_from_dict({})
    assert loader.batch_size == 64 and loader.num_workers == 0


def test_report_rendering_handles_failures():
    rows = [
        {"split": "train", "batch_size": 16, "num_workers": 0, "backend": "local",
         "run_model": False, "filter_classes": "", "repetition": 0,
         "m": 100.0, "N": 160, "t_f": 2.0, "first_batch_s": 0.1,
         "latency_mean_ms": 0.0, "error": ""},
        {"split": "train", "batch_size": 16, "num_workers": 0, "backend": "remote",
         "run_model": False, "filter_classes": "", "repetition": 0,
         "m": 50.0, "N": 160, "t_f": 4.0, "first_batch_s": 0.3,
         "latency_mean_ms": 17.3, "error": ""},
        {"split": "train", "batch_size": 64, "num_workers": 2, "backend": "local",
         "error": "boom"},
    ]
    text = render_markdown(rows)
    assert "Failures" in text and "boom" in text
    assert "Slowdown vs local baseline" in text
    slow = rows_slowdown(rows)
    assert len(slow) == 1
    assert slow[0]["slowdown_pct"] == pytest.approx(100.0)


def test_svg_chart_shape():
    svg = render_bar_chart_svg([("a", 10.0), ("b", 5.0)], title="t")
    assert svg.count("<rect") == 2
    assert 'width="640"' in svg
