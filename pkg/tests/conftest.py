import numpy as np
import pytest

from jacobimax.ensemble import EnsembleSpec, SeedSpec, sample


@pytest.fixture(scope="session")
def gue_small():
    return [sample(EnsembleSpec.gbe(2.0), n, SeedSpec(11, n)) for n in (5, 17, 64)]


def pytest_terminal_summary(terminalreporter):
    from tests import acceptance_log

    lines = acceptance_log.summary_lines()
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
