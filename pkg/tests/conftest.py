"""Shared fixtures: generated datasets reused across the suite."""

from __future__ import annotations

import pytest

from loadbench.dataset import DatasetSpec, generate_random_dataset

# small grid used by most unit tests: 3 shards in train, multi-class
TINY_SPEC = DatasetSpec(n_train=48, n_val=12, n_test=8, width=8, height=6,
                        channels=3, n_classes=4, seed=11)

# the desk-scale acceptance dataset
SMALL_SPEC = DatasetSpec(n_train=2000, n_val=200, n_test=100, width=64,
                         height=64, channels=3, n_classes=20, seed=7)


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("tiny-data")
    manifests = generate_random_dataset(TINY_SPEC, root, shard_capacity=16)
    return root, manifests


@pytest.fixture(scope="session")
def random_small(tmp_path_factory):
    root = tmp_path_factory.mktemp("random-small")
    manifests = generate_random_dataset(SMALL_SPEC, root, shard_capacity=500)
    return root, manifests
