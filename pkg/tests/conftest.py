import os
import sys
import tempfile
import shutil
from pathlib import Path

import numpy as np
import pytest

# Add the package directory to Python path
sys.path.insert(0, str(Path(__file__).parent.parent))

# Set test environment
os.environ["LOG_LEVEL"] = "DEBUG"
os.environ.pop("BEATSSL_DATA_ROOT", None)

from beatssl.dataset import save_dataset  # noqa: E402
from beatssl.synthetic import synth_record  # noqa: E402

RHYTHMS = ("regular", "irregular")


def make_records(n, duration_s=10.0, seed=0, rhythms=RHYTHMS):
    """n records alternating through rhythms, folds 1..10 round-robin."""
    children = np.random.SeedSequence(seed).spawn(n)
    return [
        synth_record(np.random.default_rng(child), f"rec{i:03d}", rhythms[i % len(rhythms)],
                     duration_s=duration_s, fold=i % 10 + 1)
        for i, child in enumerate(children)
    ]


@pytest.fixture(scope="session")
def synthetic_records():
    """Twenty 10 s records, regular and irregular alternating."""
    return make_records(20, seed=7)


@pytest.fixture
def short_records():
    """Eight 4 s records for fast pretraining steps."""
    return make_records(8, duration_s=4.0, seed=3)


@pytest.fixture
def temp_dir():
    """Create a temporary directory for testing."""
    path = tempfile.mkdtemp()
    yield Path(path)
    shutil.rmtree(path)


@pytest.fixture
def dataset_dir(temp_dir, synthetic_records):
    """A manifest-format dataset written from the synthetic records."""
    save_dataset(synthetic_records, temp_dir / "data")
    return temp_dir / "data"


@pytest.fixture(scope="session")
def record_factory():
    return make_records
