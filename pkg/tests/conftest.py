import sys
from pathlib import Path

import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

DATA_DIR = Path(__file__).resolve().parents[1] / "data"


@pytest.fixture
def data_dir() -> Path:
    return DATA_DIR


def dataset_path(name: str) -> Path:
    return DATA_DIR / f"{name}.csv"


def reduct_fixture(seed: int):
    """Small labeled table on a quarter grid; duplicates make coverage drop."""
    import numpy as np

    rng = np.random.default_rng(seed)
    n = int(rng.integers(8, 31))
    d = int(rng.integers(2, 7))
    n_classes = int(rng.integers(2, 4))
    y = rng.integers(0, n_classes, n)
    x = rng.integers(0, 5, (n, d)) / 4.0
    # make the first column informative so reductions are non-trivial
    x[:, 0] = np.clip(y / max(1, n_classes - 1) + rng.integers(-1, 2, n) / 4.0, 0, 1)
    return x, y


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
