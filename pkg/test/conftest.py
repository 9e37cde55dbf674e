from __future__ import annotations
import logging
import pytest
from netscatter.css import ChirpConfig


@pytest.fixture(autouse=True)
def capture_all_logs(caplog: pytest.LogCaptureFixture) -> None:
    caplog.set_level(logging.DEBUG, logger="netscatter")


@pytest.fixture
def cfg() -> ChirpConfig:
    return ChirpConfig(sf=9, bw=500_000.0)


@pytest.fixture
def small_cfg() -> ChirpConfig:
    # Short symbols and a coarse FFT keep Monte-Carlo tests fast.
    return ChirpConfig(sf=7, bw=125_000.0, pad_factor=4)
