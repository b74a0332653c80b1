import numpy as np
import pytest

from branchsim.cli import resolve_config

# criterion number -> (passed, one-line description); filled by test_acceptance
ACCEPTANCE_LINES = {}


@pytest.fixture(scope="session")
def bundled():
    """Loader for the bundled experiment configs, cached per name."""
    cache = {}

    def load(name):
        if name not in cache:
            cache[name] = resolve_config(name)
        return cache[name]

    return load


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE_LINES):
        ok, text = ACCEPTANCE_LINES[num]
        terminalreporter.write_line(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {text}")
