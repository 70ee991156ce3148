import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mobnet.network import MobilityNetwork  # noqa: E402

COUNTY = "99001"


def gid(i: int) -> str:
    return f"{COUNTY}{i:06d}"


def make_net(n, edges, coords=None, date="2020-02-01") -> MobilityNetwork:
    """Network over nodes ``0..n-1`` (zero-padded so sort order is numeric)."""
    nodes = tuple(gid(i) for i in range(n))
    e = {}
    for key, w in (edges.items() if isinstance(edges, dict) else ((k, 1) for k in edges)):
        i, j = sorted(key)
        e[(gid(i), gid(j))] = int(w)
    cents = {gid(i): tuple(coords[i]) for i in range(n)} if coords is not None else {}
    return MobilityNetwork(COUNTY, date, nodes, e, cents)


def random_coords(n, rng):
    return [(42.0 + rng.uniform(0, 0.3), -83.0 + rng.uniform(0, 0.3)) for _ in range(n)]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.RESULTS, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
