import sys

import numpy as np
import pytest

from oupm.core import ModelParams


def random_params(rng, d, lam_range=(0.3, 20.0)):
    lam = rng.uniform(*lam_range)
    return ModelParams(
        a=rng.normal(0, 0.8, d),
        b=rng.normal(0, 1.0),
        c=rng.normal(0, 0.4, d),
        d_off=rng.normal(-0.5, 0.5),
        lambda_raw=np.log(np.expm1(lam)),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    lines = getattr(acceptance, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines.values(), key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
