from pathlib import Path

import numpy as np
import pytest

from scpldpch.protograph import load_split

FIXTURES = Path(__file__).resolve().parents[1] / "src" / "scpldpch" / "fixtures"


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run tests marked slow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip = pytest.mark.skip(reason="slow: pass --runslow to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


def fixture_split(name):
    return load_split(FIXTURES / f"{name}.txt")


@pytest.fixture(scope="session")
def toy():
    """The 3x4 worked example split, W=1."""
    return fixture_split("toy_w1")[0]


@pytest.fixture(scope="session")
def r4_code():
    from scpldpch.codec import build_code

    split, r = fixture_split("r4_opt")
    return build_code(split, r, 4, 16, seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# -- acceptance reporting -------------------------------------------------------------

ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}
ACCEPTANCE_COUNT = 11


@pytest.fixture
def accept():
    """Record one acceptance criterion and fail the test when it is not met."""

    def record(num: int, ok: bool, detail: str):
        ACCEPTANCE_RESULTS[num] = (bool(ok), detail)
        assert ok, f"acceptance #{num}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    ran_acceptance = any("test_acceptance" in str(getattr(r, "nodeid", ""))
                         for reps in terminalreporter.stats.values() for r in reps)
    if not ran_acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for num in range(1, ACCEPTANCE_COUNT + 1):
        if num in ACCEPTANCE_RESULTS:
            ok, detail = ACCEPTANCE_RESULTS[num]
            terminalreporter.write_line(f"#{num:<2d} {'PASS' if ok else 'FAIL'}  {detail}")
        else:
            terminalreporter.write_line(f"#{num:<2d} NOT RUN  (skipped, e.g. slow without --runslow, or errored before a verdict)")
