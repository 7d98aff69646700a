import numpy as np
import pytest

from vgan.networks import NetConfig, init_params


def micro_config(bands=5):
    # two discriminator layers so a 4 x 4 input still leaves a 1 x 1 logit map
    return NetConfig(bands=bands, gen_width=3, disc_widths=(3, 2), res_blocks=2)


def micro_params(config, seed=0):
    params = init_params(config, seed=seed, dtype=np.float64)
    rng = np.random.default_rng(seed + 100)
    # larger weights than the training init so every path carries signal
    for name, p in params.items():
        p.data += rng.normal(0, 0.3, size=p.shape)
    return params


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one summary line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
