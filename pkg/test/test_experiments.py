from __future__ import annotations
import math
import pytest
from netscatter.channel import JitterSpec
from netscatter.css import ChirpConfig
from netscatter.experiments import (
    bit_errors,
    default_separations,
    run_ber_snr,
    run_dynamic_range_sweep,
    run_fft_variation,
    run_near_far,
    run_trials,
)


def test_bit_errors() -> None:
    assert bit_errors((1, 0, 1, 1), (1, 0, 1, 1)) == 0
    assert bit_errors((1, 0, 1, 1), (0, 0, 1, 0)) == 2
    # An undetected packet reads as silence
    assert bit_errors((1, 0, 1, 1), None) == 3


def test_run_trials_keeps_order() -> None:
    assert run_trials(abs, [-3, 1, -2]) == [3, 1, 2]


def test_default_separations() -> None:
    assert default_separations(ChirpConfig(sf=7, bw=125_000), 2) == [
        2,
        4,
        8,
        16,
        32,
        64,
        96,
        112,
        120,
        124,
        126,
    ]
    seps = default_separations(ChirpConfig(sf=9), 2)
    assert seps[0] == 2
    assert 256 in seps
    assert seps[-1] == 510


def test_near_far(small_cfg: ChirpConfig) -> None:
    records = run_near_far(
        small_cfg,
        bin_a=2,
        bin_b=66,
        power_diffs_db=(0.0, 30.0),
        freq_mismatch_sigma_hz=0.0,
        n_symbols=400,
        snr_db=10.0,
        seed=4,
    )
    assert [r.config["power_diff_db"] for r in records] == [0.0, 30.0]
    for r in records:
        assert r.experiment == "nearfar"
        assert r.seed == 4
        assert r.config["n_symbols"] == 400
        assert r.config["n_devices"] == 2
        assert r.metrics == {"ber": 0.0, "ber_strong": 0.0, "per": 0.0}


def test_near_far_is_reproducible(small_cfg: ChirpConfig) -> None:
    kwargs = {
        "bin_a": 10,
        "bin_b": 20,
        "power_diffs_db": (10.0,),
        "n_symbols": 80,
        "snr_db": -12.0,
        "seed": 7,
    }
    serial = run_near_far(small_cfg, **kwargs)
    assert run_near_far(small_cfg, **kwargs) == serial
    assert run_near_far(small_cfg, jobs=2, **kwargs) == serial


@pytest.mark.slow
def test_near_far_weak_device_unaffected_at_40db(cfg: ChirpConfig) -> None:
    zero, forty = run_near_far(
        cfg,
        bin_a=2,
        bin_b=258,
        power_diffs_db=(0.0, 40.0),
        freq_mismatch_sigma_hz=300.0,
        n_symbols=10_000,
        seed=11,
    )
    assert forty.config["n_symbols"] == 10_000
    assert forty.metrics["ber"] == pytest.approx(zero.metrics["ber"], abs=0.005)


@pytest.mark.parametrize("bin_a,bin_b", [(4, 4), (4, 128), (-2, 4)])
def test_near_far_invalid_bins(small_cfg: ChirpConfig, bin_a: int, bin_b: int) -> None:
    with pytest.raises(ValueError):
        run_near_far(small_cfg, bin_a=bin_a, bin_b=bin_b, n_symbols=40)


def test_dynamic_range_sweep(small_cfg: ChirpConfig) -> None:
    (rec,) = run_dynamic_range_sweep(
        small_cfg,
        separations=[32],
        max_diff_db=4.0,
        step_db=2.0,
        n_packets=3,
        snr_db=10.0,
        freq_mismatch_sigma_hz=0.0,
    )
    assert rec.experiment == "dynrange"
    assert rec.config["bin_separation"] == 32
    assert rec.metrics == {"max_power_diff_db": 4.0}


def test_dynamic_range_fails_at_equal_power(small_cfg: ChirpConfig) -> None:
    (rec,) = run_dynamic_range_sweep(
        small_cfg,
        separations=[32],
        max_diff_db=2.0,
        step_db=2.0,
        n_packets=2,
        snr_db=-40.0,
    )
    assert math.isnan(rec.metrics["max_power_diff_db"])


@pytest.mark.parametrize("sep", [0, 128])
def test_dynamic_range_invalid_separation(small_cfg: ChirpConfig, sep: int) -> None:
    with pytest.raises(ValueError):
        run_dynamic_range_sweep(small_cfg, separations=[sep], n_packets=1)


def test_fft_variation_fixed_delay() -> None:
    (rec,) = run_fft_variation(
        bw_list=(125_000.0,), jitter=JitterSpec.fixed(2e-6), n_packets=3
    )
    assert rec.experiment == "fftvar"
    assert rec.config["sf"] == 7
    assert rec.config["jitter"] == "fixed:2e-06"
    m = rec.metrics
    assert m["expected_bin_shift"] == pytest.approx(0.25)
    assert m["fft_bin_shift"] == pytest.approx(0.25, abs=0.06)
    assert m["fft_bin_shift_std"] == pytest.approx(0.0, abs=1e-9)
    assert m["within_one_bin"] == 1.0
    assert m["tolerated_timing_s"] == pytest.approx(8e-6)
    assert m["tolerated_freq_hz"] == pytest.approx(976.5625)
    assert m["device_bitrate_bps"] == pytest.approx(976.5625)


def test_fft_variation_grows_with_bandwidth() -> None:
    records = run_fft_variation(n_packets=20, seed=2)
    by_bw = {r.config["bw"]: r.metrics for r in records}
    assert set(by_bw) == {500_000.0, 250_000.0, 125_000.0}
    for bw, m in by_bw.items():
        assert m["expected_bin_shift"] == pytest.approx(1e-6 * bw)
        assert m["fft_bin_shift_min"] >= -0.05
        assert m["fft_bin_shift_max"] <= 2e-6 * bw + 0.05
    assert by_bw[500_000.0]["fft_bin_shift"] > by_bw[125_000.0]["fft_bin_shift"]
    assert by_bw[125_000.0]["within_one_bin"] == 1.0


def test_fft_variation_unknown_bandwidth() -> None:
    with pytest.raises(ValueError):
        run_fft_variation(bw_list=(200_000.0,), n_packets=1)


def test_ber_snr(small_cfg: ChirpConfig) -> None:
    records = run_ber_snr(
        small_cfg,
        snr_list=(-30.0, 10.0),
        n_devices=2,
        n_packets=2,
        jitter=JitterSpec.none(),
    )
    low, high = records
    assert low.config["snr_db"] == -30.0
    assert low.metrics["ber"] > 0.2
    assert low.metrics["per"] == 1.0
    assert low.metrics["phy_rate_bps"] == 0.0
    assert high.metrics["ber"] == 0.0
    assert high.metrics["ser"] == 0.0
    assert high.metrics["per"] == 0.0
    assert high.metrics["phy_rate_bps"] == pytest.approx(1953.125)
