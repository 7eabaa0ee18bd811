import re
import sys
import warnings
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from setattract import scenario_path  # noqa: E402
from setattract.cli import load_scenario  # noqa: E402
from setattract.geom import NotNestedWarning  # noqa: E402
from setattract.reach import algorithm1  # noqa: E402


@pytest.fixture(scope="session")
def ex1():
    return load_scenario(scenario_path("example1"))


@pytest.fixture(scope="session")
def ex2():
    return load_scenario(scenario_path("example2"))


@pytest.fixture(scope="session")
def ex1_run(ex1):
    """(certificate, ladder, seconds) for Example 1 with k_stop=6."""
    import time
    t = time.perf_counter()
    cert, ladder = algorithm1(ex1.system, ex1.omega0, ex1.k_stop, ex1.eps)
    return cert, ladder, time.perf_counter() - t


@pytest.fixture(scope="session")
def ex2_run(ex2):
    """(certificate, ladder, seconds) for Example 2 with k_stop=6 (about a minute)."""
    import time
    t = time.perf_counter()
    cert, ladder = algorithm1(ex2.system, ex2.omega0, ex2.k_stop, ex2.eps)
    return cert, ladder, time.perf_counter() - t


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(autouse=True)
def _quiet_nesting():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NotNestedWarning)
        yield


ACCEPTANCE_LINES: dict = {}


def record_acceptance(key: str, ok: bool, detail: str) -> None:
    """Store one pass/fail line; printed in the terminal summary."""
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {key}: {detail}"
    ACCEPTANCE_LINES[key] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    keys = sorted(ACCEPTANCE_LINES, key=lambda k: (int(re.match(r"\d+", k).group()), k))
    for key in keys:
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
    out = Path(__file__).resolve().parent.parent / "acceptance_report.txt"
    out.write_text("\n".join(ACCEPTANCE_LINES[k] for k in keys) + "\n")
