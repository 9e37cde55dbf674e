from __future__ import annotations
import numpy as np
import pytest
from pytest_mock import MockerFixture
import scipy.fft
from netscatter.channel import (
    apply_freq_offset,
    apply_timing_offset,
    awgn,
    noise_power_for,
)
from netscatter.css import (
    ChirpConfig,
    IqBuffer,
    bin_displacement,
    bin_from_freq_offset,
    bin_from_timing_offset,
    cyclic_shift,
    dechirp,
    demod_block,
    demodulate,
    fractional_advance,
    make_aggregate_upchirp,
    make_chirp,
    make_downchirp,
    make_upchirp,
    peak_search,
    zero_pad_fft,
)


def test_chirp_config_derived() -> None:
    cfg = ChirpConfig(sf=9, bw=500_000.0, pad_factor=10)
    assert cfg.n_bins == 512
    assert cfg.symbol_len == 512
    assert cfg.sample_rate == 500_000.0
    assert cfg.symbol_duration == pytest.approx(1.024e-3)
    assert cfg.fft_size == 5120
    assert cfg.bin_resolution == pytest.approx(500_000 / 5120)


def test_chirp_config_aggregate() -> None:
    cfg = ChirpConfig(sf=9, bw=500_000.0, pad_factor=10, agg_factor=2)
    assert cfg.n_slots == 1024
    assert cfg.symbol_len == 1024
    assert cfg.sample_rate == 1_000_000.0
    assert cfg.symbol_duration == pytest.approx(1.024e-3)
    assert cfg.fft_size == 10240


@pytest.mark.parametrize(
    "kwargs",
    [
        {"sf": 5},
        {"sf": 13},
        {"bw": 0.0},
        {"pad_factor": 0},
        {"agg_factor": 0},
    ],
)
def test_chirp_config_invalid(kwargs: dict) -> None:
    with pytest.raises(ValueError):
        ChirpConfig(**kwargs)


def test_upchirp_length_and_duration(cfg: ChirpConfig) -> None:
    up = make_upchirp(cfg)
    assert len(up) == 512
    assert up.duration == pytest.approx(1.024e-3)


@pytest.mark.parametrize("sf", [6, 9, 12])
def test_upchirp_unit_amplitude(sf: int) -> None:
    up = make_upchirp(ChirpConfig(sf=sf))
    assert np.allclose(np.abs(up.samples), 1.0)


def test_upchirp_closed_form() -> None:
    cfg = ChirpConfig(sf=6, bw=125_000.0)
    n = np.arange(64)
    expected = np.exp(2j * np.pi * (n**2 / 128 - n / 2))
    assert np.allclose(make_upchirp(cfg).samples, expected)


def test_upchirp_sweeps_band() -> None:
    cfg = ChirpConfig(sf=8, bw=250_000.0)
    phase = np.unwrap(np.angle(make_upchirp(cfg).samples))
    freq = np.diff(phase) / (2 * np.pi) * cfg.sample_rate
    assert freq[0] == pytest.approx(-cfg.bw / 2, rel=0.02)
    assert freq[-1] == pytest.approx(cfg.bw / 2, rel=0.02)
    assert np.all(np.diff(freq) > 0)


@pytest.mark.parametrize("k", [0, 1, 100, 511])
def test_shifted_chirp_is_rotation(cfg: ChirpConfig, k: int) -> None:
    rotated = cyclic_shift(make_upchirp(cfg), k)
    assert np.allclose(rotated.samples, make_chirp(cfg, k).samples)


@pytest.mark.parametrize("k", [-1, 512])
def test_shift_out_of_range(cfg: ChirpConfig, k: int) -> None:
    with pytest.raises(ValueError):
        make_chirp(cfg, k)
    with pytest.raises(ValueError):
        cyclic_shift(make_upchirp(cfg), k)


@pytest.mark.parametrize("k", [0, 2, 37, 258, 510])
def test_demodulate_finds_shift(cfg: ChirpConfig, k: int) -> None:
    peak = demodulate(make_chirp(cfg, k), cfg)
    assert peak.bin_index == k * cfg.pad_factor
    assert peak.fractional_bin == pytest.approx(k)
    assert peak.power == pytest.approx(cfg.symbol_len**2)


@pytest.mark.parametrize("k", [0, 5, 300])
def test_downchirp_dechirps_to_shift(cfg: ChirpConfig, k: int) -> None:
    spec = zero_pad_fft(dechirp(make_chirp(cfg, k, down=True), cfg, down=True), cfg)
    assert peak_search(spec).bin_index == k * cfg.pad_factor


def test_downchirp_is_conjugate_of_upchirp(cfg: ChirpConfig) -> None:
    assert np.allclose(make_downchirp(cfg).samples, np.conj(make_upchirp(cfg).samples))


def test_spectrum_parseval(cfg: ChirpConfig) -> None:
    rng = np.random.default_rng(0)
    x = rng.standard_normal(512) + 1j * rng.standard_normal(512)
    rx = IqBuffer(x, cfg.sample_rate)
    spec = zero_pad_fft(dechirp(rx, cfg), cfg)
    assert spec.bin_resolution == pytest.approx(cfg.bw / cfg.fft_size)
    assert np.sum(spec.power()) / cfg.fft_size == pytest.approx(rx.energy(), rel=1e-9)


def test_pad_factor_resolves_fraction() -> None:
    cfg = ChirpConfig(sf=8, bw=250_000.0, pad_factor=10)
    sym = make_chirp(cfg, 20)
    moved = apply_freq_offset(sym, 0.3 * cfg.bw / cfg.n_bins)
    assert demodulate(moved, cfg).fractional_bin == pytest.approx(20.3)
    coarse = cfg.with_pad_factor(1)
    assert demodulate(moved, coarse).fractional_bin == 20


def test_timing_and_frequency_move_peaks(cfg: ChirpConfig) -> None:
    k = 100
    up = make_chirp(cfg, k)
    down = make_chirp(cfg, k, down=True)
    dt = 1 / cfg.bw
    late_up = apply_timing_offset(up, dt, cfg, circular=True)
    late_down = apply_timing_offset(down, dt, cfg, circular=True)
    assert demodulate(late_up, cfg).fractional_bin == pytest.approx(k + 1)
    (down_power,) = demod_block(late_down.samples, cfg, down=True)
    assert np.argmax(down_power) == (k - 1) * cfg.pad_factor
    df = cfg.bw / cfg.n_bins
    assert demodulate(apply_freq_offset(up, df), cfg).fractional_bin == pytest.approx(
        k + 1
    )
    (down_power,) = demod_block(apply_freq_offset(down, df).samples, cfg, down=True)
    assert np.argmax(down_power) == (k + 1) * cfg.pad_factor


def test_offset_bin_conversions(cfg: ChirpConfig) -> None:
    assert bin_from_timing_offset(2e-6, cfg) == pytest.approx(1.0)
    slower = ChirpConfig(sf=8, bw=250_000.0)
    assert bin_from_timing_offset(2e-6, slower) == pytest.approx(0.5)
    assert bin_from_freq_offset(500_000 / 512, cfg) == pytest.approx(1.0)


@pytest.mark.parametrize(
    "measured,expected,disp",
    [(10.5, 10.0, 0.5), (511.5, 0.0, -0.5), (0.25, 511.0, 1.25), (3.0, 3.0, 0.0)],
)
def test_bin_displacement(measured: float, expected: float, disp: float) -> None:
    assert bin_displacement(measured, expected, 512) == pytest.approx(disp)


def test_demod_block_one_fft_call(cfg: ChirpConfig, mocker: MockerFixture) -> None:
    spy = mocker.spy(scipy.fft, "fft")
    # Many transmitters superposed in each of several symbols
    mixed = sum(make_chirp(cfg, k).samples for k in range(0, 512, 2))
    block = np.stack([mixed] * 8)
    power = demod_block(block, cfg)
    assert spy.call_count == 1
    assert power.shape == (8, cfg.fft_size)
    # Tones on whole bins do not leak into other whole bins.
    on_grid = power[0, :: cfg.pad_factor]
    assert np.allclose(on_grid[::2], cfg.symbol_len**2)
    assert np.allclose(on_grid[1::2], 0.0, atol=1e-6 * cfg.symbol_len**2)


def test_demod_block_wrong_length(cfg: ChirpConfig) -> None:
    with pytest.raises(ValueError):
        demod_block(np.zeros((2, 100), dtype=complex), cfg)


@pytest.mark.parametrize("k", [0, 511, 512, 1000])
def test_aggregate_chirp_demodulates(k: int) -> None:
    cfg = ChirpConfig(sf=9, bw=500_000.0, pad_factor=4, agg_factor=2)
    sym = make_aggregate_upchirp(cfg, k)
    assert len(sym) == 1024
    assert demodulate(sym, cfg).fractional_bin == pytest.approx(k)


def test_empty_buffer_rejected(cfg: ChirpConfig) -> None:
    empty = IqBuffer.zeros(0, cfg.sample_rate)
    assert empty.power() == 0.0
    with pytest.raises(ValueError):
        zero_pad_fft(empty, cfg)
    with pytest.raises(ValueError):
        dechirp(empty, cfg)


@pytest.mark.parametrize(
    "samples",
    [[1.0, np.nan], [np.inf, 0.0], [[1.0, 2.0], [3.0, 4.0]]],
)
def test_iq_buffer_invalid(samples: list) -> None:
    with pytest.raises(ValueError):
        IqBuffer(np.array(samples, dtype=complex), 1.0)


def test_iq_buffer_read_only() -> None:
    src = np.ones(4, dtype=complex)
    buf = IqBuffer(src, 1.0)
    src[0] = 5
    assert buf.samples[0] == 1
    with pytest.raises(ValueError):
        buf.samples[0] = 2


def test_iq_buffer_symbol(cfg: ChirpConfig) -> None:
    buf = IqBuffer(np.arange(3 * 512, dtype=complex), cfg.sample_rate)
    assert buf.symbol(1, cfg).samples[0] == 512
    with pytest.raises(ValueError):
        buf.symbol(3, cfg)


def test_fractional_advance_integer_matches_roll() -> None:
    rng = np.random.default_rng(1)
    x = rng.standard_normal(64) + 1j * rng.standard_normal(64)
    assert np.allclose(fractional_advance(x, 3, circular=True), np.roll(x, -3))


def test_fractional_advance_pads_instead_of_wrapping() -> None:
    x = np.zeros(64, dtype=complex)
    x[2] = 1
    out = fractional_advance(x, -5)
    assert np.argmax(np.abs(out)) == 7
    assert np.abs(out[:2]).max() < 1e-9


@pytest.mark.parametrize("sf", range(6, 13))
def test_every_shift_demodulates(sf: int) -> None:
    cfg = ChirpConfig(sf=sf, bw=125_000.0, pad_factor=2)
    if sf <= 9:
        shifts = np.arange(cfg.n_bins)
    else:
        shifts = np.random.default_rng(sf).choice(cfg.n_bins, 256, replace=False)
    block = np.stack([make_chirp(cfg, int(k)).samples for k in shifts])
    found = np.argmax(demod_block(block, cfg), axis=1)
    assert np.array_equal(found, shifts * cfg.pad_factor)


@pytest.mark.parametrize("dt", [0.5e-6, 1e-6, 2e-6, 3.5e-6])
def test_timing_offset_displaces_peak(cfg: ChirpConfig, dt: float) -> None:
    fine = cfg.with_pad_factor(40)
    k = 200
    sym = make_chirp(fine, k)
    train = IqBuffer(np.tile(sym.samples, 3), fine.sample_rate)
    late = apply_timing_offset(train, dt, fine)
    peak = demodulate(late.symbol(1, fine), fine)
    assert bin_displacement(peak.fractional_bin, k, fine.n_slots) == pytest.approx(
        bin_from_timing_offset(dt, fine), abs=0.05
    )


@pytest.mark.parametrize("df", [150.0, 976.0])
def test_freq_offset_displaces_peak(cfg: ChirpConfig, df: float) -> None:
    fine = cfg.with_pad_factor(40)
    k = 200
    peak = demodulate(apply_freq_offset(make_chirp(fine, k), df), fine)
    assert bin_displacement(peak.fractional_bin, k, fine.n_slots) == pytest.approx(
        bin_from_freq_offset(df, fine), abs=0.05
    )


def test_half_bin_tone_needs_padding() -> None:
    cfg = ChirpConfig(sf=6, bw=125_000.0, pad_factor=1)
    sym = apply_freq_offset(make_chirp(cfg, 3), 0.5 * cfg.bw / cfg.n_bins)
    power = zero_pad_fft(dechirp(sym, cfg), cfg).power()
    # Without padding the energy splits evenly over the two neighbouring bins
    pair = power[3] + power[4]
    assert max(power[3], power[4]) / pair <= 0.6
    assert np.argmax(power) in (3, 4)
    for pad in (2, 4):
        padded = cfg.with_pad_factor(pad)
        assert demodulate(sym, padded).fractional_bin == pytest.approx(3.5, abs=0.05)


@pytest.mark.slow
def test_symbols_decode_below_noise_floor() -> None:
    cfg = ChirpConfig(sf=9, bw=500_000.0, pad_factor=1)
    rng = np.random.default_rng(4)
    table = np.stack([make_chirp(cfg, k).samples for k in range(cfg.n_bins)])
    n_batches, batch = 10, 1000
    errors = 0
    for _ in range(n_batches):
        shifts = rng.integers(0, cfg.n_bins, batch)
        noise = awgn(batch * cfg.symbol_len, noise_power_for(-10.0), rng)
        rx = table[shifts] + noise.reshape(batch, cfg.symbol_len)
        found = np.argmax(demod_block(rx, cfg), axis=1)
        errors += int(np.count_nonzero(found != shifts))
    assert errors / (n_batches * batch) < 0.01
