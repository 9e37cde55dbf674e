from __future__ import annotations
import numpy as np
import pytest
from pytest_mock import MockerFixture
from netscatter.channel import ChannelConfig, DeviceImpairments, JitterSpec
from netscatter.css import ChirpConfig
import netscatter.link
from netscatter.link import DeviceProfile, render_uplink
from netscatter.phy import N_PREAMBLE_UP, PacketFrame


def test_render_single_device(small_cfg: ChirpConfig) -> None:
    dev = DeviceProfile(device_id=1, cyclic_shift=8)
    bits = (1, 0, 1, 1)
    up = render_uplink([dev], [bits], small_cfg, ChannelConfig(seed=1), noise=False)
    n = small_cfg.symbol_len
    frame = PacketFrame(8, bits)
    assert up.start == n
    assert len(up.capture) == 2 * n + frame.n_samples(small_cfg)
    assert up.noise_power == 0
    samples = up.capture.samples
    assert np.allclose(samples[:n], 0)
    assert np.allclose(np.abs(samples[n : 2 * n]), 1)
    # The second payload bit is a zero: a silent symbol
    silent = n + (frame.n_preamble + 1) * n
    assert np.allclose(samples[silent : silent + n], 0)
    assert up.offsets[1].timing == 0
    assert up.offsets[1].frequency == 0


def test_render_applies_power_level_and_path_gain(small_cfg: ChirpConfig) -> None:
    dev = DeviceProfile(
        device_id=3,
        cyclic_shift=0,
        power_level_db=-4.0,
        impairments=DeviceImpairments(power_gain_db=-3.0),
    )
    assert dev.rx_gain_db == -7.0
    up = render_uplink(
        [dev], [(1,)], small_cfg, ChannelConfig(), lead_in=0, tail=0, noise=False
    )
    n = small_cfg.symbol_len
    preamble = up.capture.samples[: N_PREAMBLE_UP * n]
    assert np.mean(np.abs(preamble) ** 2) == pytest.approx(10 ** (-0.7))


def test_render_adds_noise(small_cfg: ChirpConfig) -> None:
    up = render_uplink(
        [], [], small_cfg, ChannelConfig(snr_db=0.0), lead_in=4096, tail=0
    )
    assert up.noise_power == pytest.approx(1.0)
    assert up.capture.power == pytest.approx(1.0, rel=0.1)


def test_render_uses_channel_mixing(
    small_cfg: ChirpConfig, mocker: MockerFixture
) -> None:
    m_superpose = mocker.spy(netscatter.link, "superpose")
    m_awgn = mocker.spy(netscatter.link, "add_awgn")
    devs = [DeviceProfile(device_id=i, cyclic_shift=4 * i) for i in (1, 2)]
    up = render_uplink(devs, [(1, 0), (0, 1)], small_cfg, ChannelConfig(snr_db=5.0))
    (parts,) = m_superpose.call_args.args
    assert len(parts) == 2
    m_awgn.assert_called_once()
    assert m_awgn.call_args.args[1] == 5.0
    assert up.capture is m_awgn.spy_return


def test_render_is_reproducible(small_cfg: ChirpConfig) -> None:
    dev = DeviceProfile(
        device_id=1,
        cyclic_shift=4,
        impairments=DeviceImpairments(timing_jitter=JitterSpec.uniform(0, 3e-6)),
    )
    a = render_uplink([dev], [(1, 0)], small_cfg, ChannelConfig(seed=9))
    b = render_uplink([dev], [(1, 0)], small_cfg, ChannelConfig(seed=9))
    c = render_uplink([dev], [(1, 0)], small_cfg, ChannelConfig(seed=10))
    assert np.array_equal(a.capture.samples, b.capture.samples)
    assert a.offsets == b.offsets
    assert not np.array_equal(a.capture.samples, c.capture.samples)
    assert 0 <= a.offsets[1].timing <= 3e-6


def test_render_invalid(small_cfg: ChirpConfig) -> None:
    dev = DeviceProfile(device_id=1, cyclic_shift=0)
    other = DeviceProfile(device_id=2, cyclic_shift=2)
    with pytest.raises(ValueError):
        render_uplink([dev], [], small_cfg, ChannelConfig())
    with pytest.raises(ValueError):
        render_uplink([dev, other], [(1,), (1, 0)], small_cfg, ChannelConfig())


def test_device_profile_invalid_level() -> None:
    with pytest.raises(ValueError):
        DeviceProfile(device_id=1, cyclic_shift=0, power_level_db=-5.0)
