from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from helpers import make_dataset, make_problem  # noqa: E402


@pytest.fixture
def problem():
    return make_problem()


@pytest.fixture
def dataset10():
    return make_dataset(n_conv=10, seed=7)


@pytest.fixture
def dataset_file(tmp_path, dataset10):
    from socratic_tutor.dataset import save_dataset

    path = tmp_path / "fixture.json"
    save_dataset(dataset10, path)
    return path
