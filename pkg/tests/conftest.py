import numpy as np
import pytest

from arnet.data import synth_glyphs


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def glyphs():
    return synth_glyphs(20, 16, seed=3)


def pytest_terminal_summary(terminalreporter):
    from _acceptance import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(RESULTS):
        status, detail = RESULTS[num]
        terminalreporter.write_line(f"criterion {num}: {status}  {detail}")
