import sys
from pathlib import Path

import pytest

from coreppr.graph import Graph

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def triangle():
    return Graph.from_edges([0, 1, 2], [1, 2, 0])


@pytest.fixture
def path3():
    return Graph.from_edges([0, 1], [1, 2])


@pytest.fixture
def k4_pendant():
    # K4 on {0,1,2,3}, pendant 4 attached to 0
    return Graph.from_edges([0, 0, 0, 1, 1, 2, 0], [1, 2, 3, 2, 3, 3, 4])


@pytest.fixture
def edge():
    return Graph.from_edges([0], [1])


@pytest.fixture
def star3():
    return Graph.from_edges([0, 0, 0], [1, 2, 3])



ROW_AUDIT = {"checked": 0}
ACCEPTANCE = []


@pytest.fixture(autouse=True, scope="session")
def audit_propagation_rows():
    """Re-check C-row normalization and shared support on every row built anywhere in the suite."""
    import math

    from coreppr import diffusion

    original = diffusion.PropagationRow.__post_init__

    def checked(self):
        original(self)
        if self.core_weights is not None:
            assert len(self.core_weights) == len(self.indices) == len(self.ppr_weights)
            assert abs(math.fsum(self.core_weights.tolist()) - 1.0) <= 1e-9
            ROW_AUDIT["checked"] += 1

    diffusion.PropagationRow.__post_init__ = checked
    yield ROW_AUDIT
    diffusion.PropagationRow.__post_init__ = original


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda l: int(l.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
    terminalreporter.write_line(f"C-row audit: {ROW_AUDIT['checked']} propagation rows checked")
