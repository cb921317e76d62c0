import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(autouse=True)
def _isolated_cache(tmp_path, monkeypatch):
    # never touch the user's feature/dataset cache from tests
    monkeypatch.setenv("VESSEL_BENCH_CACHE", str(tmp_path / "cache"))


@pytest.fixture(scope="session")
def small_dataset_path(tmp_path_factory):
    from vessel_bench.synthgen import generate_dataset

    out = tmp_path_factory.mktemp("small")
    return generate_dataset(42, 25, 64, out_dir=out)


@pytest.fixture(scope="session")
def small_dataset(small_dataset_path):
    from vessel_bench.harness import load_dataset

    return load_dataset(small_dataset_path)


def blobs(n_per_class, dim=5, sep=10.0, seed=0, classes=4):
    """Gaussian blobs with unit spread whose centers sit ``sep`` apart along distinct axes."""
    rng = np.random.default_rng(seed)
    centers = np.zeros((classes, dim))
    for k in range(classes):
        centers[k, k % dim] = sep
    X = np.vstack([centers[k] + rng.standard_normal((n_per_class, dim)) for k in range(classes)])
    y = np.repeat(np.arange(classes), n_per_class)
    return X, y


ACCEPTANCE_LINES = []


@pytest.fixture
def report_criterion():
    """Record one acceptance line; returns ``passed`` so tests can assert on it."""
    def report(number, name, passed, detail):
        line = f"criterion {number} [{name}]: {'PASS' if passed else 'FAIL'} - {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed
    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
