import numpy as np
import pytest

from coopcache import ContentCatalog, NetworkConfig

_ACCEPTANCE = []


@pytest.fixture
def record_criterion():
    def record(number, passed, detail=""):
        _ACCEPTANCE.append((number, bool(passed), detail))
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(_ACCEPTANCE, key=lambda r: r[0]):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] criterion {number}: {detail}")


# standard scenario: tau1 = 5 Mbit / 100 Mbit/s
TAU1 = 0.05
LAM = 0.5
K2 = 4.0
K3 = 20.0


def make_catalog(popularity, sizes=None, mean_size=1.0):
    """Catalog from a K x F normalized popularity matrix (rows scaled by 1/K)."""
    P = np.atleast_2d(np.asarray(popularity, dtype=np.float64))
    K, F = P.shape
    cell = P / K
    glob = cell.sum(axis=0)
    if sizes is None:
        sizes = np.full(F, mean_size)
    return ContentCatalog(sizes, mean_size, glob / glob.sum(), cell / glob.sum())


@pytest.fixture
def table2_network():
    def build(num_cells, capacity=1e9):
        return NetworkConfig.uniform(num_cells, capacity, LAM, TAU1, K2, K3)

    return build
