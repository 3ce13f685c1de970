import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from helpers import Grid  # noqa: E402

from trajclusivat.road_network import all_pairs_segment_distances, load_toy4  # noqa: E402


@pytest.fixture(scope="session")
def toy4():
    return load_toy4()


@pytest.fixture(scope="session")
def toy4_dist(toy4):
    return all_pairs_segment_distances(toy4)


@pytest.fixture(scope="session")
def grid():
    return Grid()


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            if "test_acceptance.py::test_c" not in rep.nodeid or rep.when != "call":
                continue
            name = rep.nodeid.split("::")[-1]
            detail = dict(rep.user_properties).get("detail", "no measurement recorded")
            lines.append((name, "PASS" if rep.passed else "FAIL", detail))
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for name, verdict, detail in sorted(lines):
        num = int(name[len("test_c"):].split("_")[0])
        terminalreporter.write_line(f"criterion {num:2d} {verdict}  {name[len('test_c00_'):]}: {detail}")
