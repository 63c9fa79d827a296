import numpy as np
import pytest

from clusterdiff import FeatureCovariance


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_spd(rng, q, jitter=0.5):
    A = rng.normal(size=(q, q))
    return FeatureCovariance(A @ A.T / q + jitter * np.eye(q))


def blobs(rng, sizes, q, spread=4.0):
    centers = rng.normal(scale=spread, size=(len(sizes), q))
    return np.vstack([c + rng.normal(size=(s, q)) for c, s in zip(centers, sizes)])


# one line per acceptance criterion, printed after the run
ACCEPTANCE: list[str] = []


def record(criterion: int, ok: bool, detail: str) -> None:
    ACCEPTANCE.append(f"criterion {criterion}: {'PASS' if ok else 'FAIL'} - {detail}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
