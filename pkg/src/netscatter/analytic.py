"""Closed-form models of CSS rates, collisions and capacity"""

from __future__ import annotations
from dataclasses import dataclass
import math
import numpy as np
from .css import ChirpConfig
from .util import JSONable

#: Peak-position fractions distinguishable with one-tenth-bin resolution
CHOIR_FRACTIONS = 10


@dataclass(frozen=True)
class RateModel(JSONable):
    #: Bit rate of one LoRa transmitter carrying ``sf`` bits per symbol
    lora_bitrate: float
    #: Bit rate of one ON-OFF-keyed device, one bit per symbol
    device_bitrate: float
    #: Combined bit rate with every shift occupied
    aggregate_rate: float
    #: ``aggregate_rate / lora_bitrate``
    gain: float


@dataclass(frozen=True)
class Capacity(JSONable):
    exact: float
    low_snr_approx: float


def rate_model(cfg: ChirpConfig) -> RateModel:
    symbol_rate = 1 / cfg.symbol_duration
    return RateModel(
        lora_bitrate=cfg.sf * symbol_rate,
        device_bitrate=symbol_rate,
        aggregate_rate=cfg.n_slots * symbol_rate,
        gain=cfg.n_slots / cfg.sf,
    )


def network_phy_rate(n_devices: int, cfg: ChirpConfig) -> float:
    """Aggregate bit rate of ``n_devices`` concurrent devices"""
    return n_devices / cfg.symbol_duration


def processing_gain_db(sf: int) -> float:
    return 10 * math.log10(1 << sf)


def tolerated_timing_mismatch(cfg: ChirpConfig, bins: float = 1.0) -> float:
    """Timing offset, in seconds, that moves a peak by ``bins``"""
    return bins / cfg.bw


def tolerated_freq_mismatch(cfg: ChirpConfig, bins: float = 1.0) -> float:
    """Frequency offset, in Hz, that moves a peak by ``bins``"""
    return bins * cfg.bw / cfg.n_bins


def collision_probability(n: int, sf: int) -> float:
    """
    Probability that at least two of ``n`` transmitters picking cyclic shifts
    uniformly at random pick the same one
    """
    n_shifts = 1 << sf
    if not 1 <= n <= n_shifts:
        raise ValueError(f"Number of transmitters must be in [1, {n_shifts}], got {n}")
    distinct = math.prod(1 - i / n_shifts for i in range(n))
    return 1 - distinct


def collision_probability_approx(n: int, sf: int) -> float:
    return n * (n - 1) / (1 << (sf + 1))


def simulate_collision_frequency(
    n: int, sf: int, trials: int, rng: np.random.Generator
) -> float:
    """Fraction of ``trials`` in which random shifts of ``n`` transmitters collide"""
    if trials < 1:
        raise ValueError("At least one trial is required")
    picks = np.sort(rng.integers(0, 1 << sf, size=(trials, n)), axis=1)
    collided = np.any(picks[:, 1:] == picks[:, :-1], axis=1)
    return float(collided.mean())


def choir_fraction_probability(n: int) -> float:
    """
    Probability that ``n`` transmitters all land on different tenth-of-a-bin
    peak fractions, which is what a fraction-based decoder needs
    """
    if n < 1:
        raise ValueError(f"Number of transmitters must be >= 1, got {n}")
    if n > CHOIR_FRACTIONS:
        return 0.0
    return math.perm(CHOIR_FRACTIONS, n) / CHOIR_FRACTIONS**n


def multiuser_capacity(n: int, snr_linear: float, bw: float) -> Capacity:
    """Shannon capacity of ``n`` equal-power users sharing ``bw`` Hz"""
    if not snr_linear > 0:
        raise ValueError(f"SNR must be positive, got {snr_linear}")
    if n < 1:
        raise ValueError(f"Number of users must be >= 1, got {n}")
    return Capacity(
        exact=bw * math.log2(1 + n * snr_linear),
        low_snr_approx=bw / math.log(2) * n * snr_linear,
    )
