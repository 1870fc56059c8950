from __future__ import annotations

import numpy as np
import pytest

from irrevvi import presets

# criterion number -> (passed, line); filled by test_acceptance, printed at the end
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def scenarios():
    return presets.reference_scenarios()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k][1])
    n_pass = sum(ok for ok, _ in ACCEPTANCE.values())
    terminalreporter.write_line(f"{n_pass}/{len(ACCEPTANCE)} criteria pass")
