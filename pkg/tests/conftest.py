from __future__ import annotations

import numpy as np
import pytest

from bevcast import synthetic, tracks, windows


@pytest.fixture(scope="session")
def default_meta() -> tracks.RecordingMeta:
    return tracks.RecordingMeta()


@pytest.fixture(scope="session")
def small_scene() -> synthetic.SyntheticScene:
    spec = synthetic.SceneSpec(seed=3, n_vehicles=6, duration=12.0)
    return synthetic.generate_scene(spec)


@pytest.fixture(scope="session")
def small_corpus(small_scene) -> list[windows.Window]:
    targets = tracks.select_target_vehicles(small_scene.tracks, small_scene.meta)
    corpus = windows.extract_corpus(small_scene.tracks, small_scene.meta, targets, stride=50)
    return windows.split_dataset(corpus, seed=0)


@pytest.fixture(scope="session")
def one_window(small_corpus) -> windows.Window:
    return small_corpus[0]


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
