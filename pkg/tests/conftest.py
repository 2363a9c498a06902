import numpy as np
import pytest

from asad.harness.windows import WindowSet
from asad.topology import default_topology


@pytest.fixture(scope="session")
def topo():
    return default_topology()


def blob_windows(n, samples=8, seed=0, subject="S1", spread=0.3):
    """Two Gaussian blobs on two grid cells (C3 and C4), constant over time; label picks the blob."""
    topo = default_topology()
    r = np.random.default_rng(seed)
    labels = np.tile([0, 1], n // 2 + 1)[:n]
    centres = np.array([[1.0, -1.0], [-1.0, 1.0]])
    pts = centres[labels] + spread * r.standard_normal((n, 2))
    grids = np.zeros((n, 10, 11, samples), np.float32)
    (r3, c3), (r4, c4) = topo.entries["C3"], topo.entries["C4"]
    grids[:, r3, c3, :] = pts[:, :1]
    grids[:, r4, c4, :] = pts[:, 1:]
    return WindowSet(grids, labels.astype(np.int64), np.array([subject] * n, dtype=object),
                     np.arange(n) // 10, samples / 128, list(topo.labels)), pts


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
