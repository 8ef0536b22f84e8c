import math

import pytest

from chameleon import protocol

PI = math.pi


@pytest.fixture
def run_dir(tmp_path):
    return tmp_path / "run"


def make_config(out, *, seed=42, n=1000, mode=None, transport=None):
    return protocol.RunConfig(
        seed=seed,
        n=n,
        mode=mode or protocol.SingleMode(0.0, PI / 4),
        transport=transport or protocol.InProcessTransport(timeout=30.0),
        output_dir=out,
    )


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
