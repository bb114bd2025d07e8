import numpy as np
import pytest

from learnadapt.network import StateSample, Topology

RESULTS = []


def record(name: str, passed: bool, detail: str = "") -> None:
    line = f"{'PASS' if passed else 'FAIL'} {name}: {detail}"
    RESULTS.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)


def scalar_topology(alpha_e=1.2, c=0.5, B=10.0, D=100.0):
    """One MN, one DC, one link."""
    return Topology(1, 1, [[B]], [D], [[c]], [alpha_e])


@pytest.fixture
def small_topo():
    from learnadapt.scenario import default_config_small, draw_topology

    return draw_topology(default_config_small(), np.random.default_rng(7))


@pytest.fixture
def sparse_topo():
    # 3 MNs, 2 DCs, MN 2 connected only to DC 1
    bw = np.array([[20.0, 40.0], [0.0, 30.0], [50.0, 10.0]])
    cost = np.where(bw > 0, 40.0 / np.where(bw > 0, bw, 1.0), 0.0)
    return Topology(2, 3, bw, [120.0, 90.0], cost, [1.2, 1.5])


def random_state(rng, topo, price=(10.0, 30.0), ren=(10.0, 50.0), arr=(10.0, 150.0)):
    I, J = topo.num_dc, topo.num_mn
    return StateSample(rng.uniform(*price, I), rng.uniform(*ren, I), rng.uniform(*arr, J))
