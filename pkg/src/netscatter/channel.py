"""
Per-device channel impairments and their superposition at the access point

Timing offsets follow the receiver's point of view: an offset ``dt`` means the
access point's symbol grid lags the device's symbols by ``dt``, which moves an
upchirp's peak up by ``dt * bw`` bins and a downchirp's peak down by as much.
"""

from __future__ import annotations
from collections.abc import Sequence
from dataclasses import dataclass, field
import logging
import numpy as np
from .css import ChirpConfig, IqBuffer, fractional_advance
from .util import SPEED_OF_LIGHT, Choice, db_to_amplitude, db_to_power

log = logging.getLogger(__name__)

#: Carrier frequency assumed for Doppler arithmetic, in Hz
DEFAULT_CARRIER_HZ = 900e6

#: Upper end of the default per-packet hardware delay, in seconds
DEFAULT_MAX_JITTER = 2e-6

#: Largest indoor delay spread modelled as an extra timing term, in seconds
MAX_MULTIPATH_DELAY = 300e-9


class JitterKind(Choice):
    FIXED = "fixed"
    UNIFORM = "uniform"
    GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class JitterSpec:
    """Distribution of a per-packet offset.  Parameters are in seconds or Hz."""

    kind: JitterKind = JitterKind.UNIFORM
    low: float = 0.0
    high: float = DEFAULT_MAX_JITTER
    sigma: float = 0.0

    def __post_init__(self) -> None:
        if self.low < 0 or self.high < 0 or self.sigma < 0:
            raise ValueError("Jitter parameters must be non-negative")
        if self.kind is JitterKind.UNIFORM and self.high < self.low:
            raise ValueError(
                f"Uniform jitter needs low <= high, got [{self.low}, {self.high}]"
            )

    @classmethod
    def none(cls) -> JitterSpec:
        return cls(kind=JitterKind.FIXED, low=0.0, high=0.0)

    @classmethod
    def fixed(cls, value: float) -> JitterSpec:
        return cls(kind=JitterKind.FIXED, low=value, high=value)

    @classmethod
    def uniform(cls, low: float, high: float) -> JitterSpec:
        return cls(kind=JitterKind.UNIFORM, low=low, high=high)

    @classmethod
    def gaussian(cls, sigma: float) -> JitterSpec:
        return cls(kind=JitterKind.GAUSSIAN, low=0.0, high=0.0, sigma=sigma)

    @classmethod
    def parse(cls, s: str) -> JitterSpec:
        """
        Parse ``fixed:VALUE``, ``uniform:LOW:HIGH`` or ``gaussian:SIGMA``; a
        bare number is a fixed value
        """
        kind, _, rest = s.strip().partition(":")
        try:
            if not rest:
                return cls.fixed(float(kind))
            args = [float(a) for a in rest.split(":")]
        except ValueError:
            raise ValueError(f"Invalid jitter specification: {s!r}") from None
        match (kind.lower(), args):
            case ("fixed", [value]):
                return cls.fixed(value)
            case ("uniform", [low, high]):
                return cls.uniform(low, high)
            case ("gaussian", [sigma]):
                return cls.gaussian(sigma)
            case _:
                raise ValueError(f"Invalid jitter specification: {s!r}")

    def __str__(self) -> str:
        if self.kind is JitterKind.FIXED:
            return f"fixed:{self.low!r}"
        elif self.kind is JitterKind.UNIFORM:
            return f"uniform:{self.low!r}:{self.high!r}"
        else:
            return f"gaussian:{self.sigma!r}"

    @property
    def bound(self) -> float:
        """Largest magnitude the distribution produces (3σ for a Gaussian)"""
        if self.kind is JitterKind.GAUSSIAN:
            return 3 * self.sigma
        return self.high

    def sample(self, rng: np.random.Generator) -> float:
        if self.kind is JitterKind.UNIFORM:
            return float(rng.uniform(self.low, self.high))
        elif self.kind is JitterKind.GAUSSIAN:
            return float(rng.normal(0.0, self.sigma))
        else:
            return self.low


@dataclass(frozen=True)
class DeviceImpairments:
    #: Path gain from the device to the access point, relative to the unit
    #: power reference
    power_gain_db: float = 0.0
    timing_jitter: JitterSpec = field(default_factory=JitterSpec)
    #: Crystal offset in Hz, fixed for a packet
    freq_offset: float = 0.0
    distance_m: float = 0.0
    velocity_mps: float = 0.0
    #: Extra delay from indoor multipath, in seconds
    multipath_delay: float = 0.0

    def __post_init__(self) -> None:
        if self.power_gain_db > 0:
            raise ValueError(
                f"Path gain must not exceed the 0 dB reference, got"
                f" {self.power_gain_db}"
            )
        if self.distance_m < 0:
            raise ValueError(f"Distance must be non-negative, got {self.distance_m}")
        if not 0 <= self.multipath_delay <= MAX_MULTIPATH_DELAY:
            raise ValueError(
                f"Multipath delay must be between 0 and {MAX_MULTIPATH_DELAY} s,"
                f" got {self.multipath_delay}"
            )

    def sample_timing_offset(self, rng: np.random.Generator) -> float:
        return (
            self.timing_jitter.sample(rng)
            + tof_delay(self.distance_m)
            + self.multipath_delay
        )

    def total_freq_offset(self, carrier_hz: float = DEFAULT_CARRIER_HZ) -> float:
        return self.freq_offset + doppler_shift(self.velocity_mps, carrier_hz)


@dataclass(frozen=True)
class ChannelConfig:
    #: SNR of a device received at the 0 dB reference, in dB
    snr_db: float = 10.0
    seed: int = 0
    carrier_hz: float = DEFAULT_CARRIER_HZ

    @property
    def noise_power(self) -> float:
        return noise_power_for(self.snr_db)


@dataclass(frozen=True)
class RealizedOffsets:
    timing: float
    frequency: float


def noise_power_for(snr_db: float, ref_power: float = 1.0) -> float:
    """Noise power per sample giving ``snr_db`` for a signal of ``ref_power``"""
    return ref_power / db_to_power(snr_db)


def apply_timing_offset(
    sig: IqBuffer, dt: float, cfg: ChirpConfig, circular: bool = False
) -> IqBuffer:
    """
    Offset ``sig`` by ``dt`` seconds with an exact fractional delay.  Pass
    ``circular=True`` to rotate a single periodic symbol instead of shifting
    a packet.
    """
    if abs(dt) >= cfg.symbol_duration:
        raise ValueError(
            f"Timing offset {dt} s is not shorter than a symbol"
            f" ({cfg.symbol_duration} s)"
        )
    if dt == 0:
        return sig
    return sig.replace(
        fractional_advance(sig.samples, dt * sig.sample_rate, circular=circular)
    )


def apply_freq_offset(sig: IqBuffer, df: float) -> IqBuffer:
    if abs(df) >= sig.sample_rate / 2:
        raise ValueError(
            f"Frequency offset {df} Hz lies outside the {sig.sample_rate} Hz band"
        )
    if df == 0:
        return sig
    n = np.arange(len(sig))
    return sig.replace(sig.samples * np.exp(2j * np.pi * df * n / sig.sample_rate))


def apply_power_gain(sig: IqBuffer, gain_db: float) -> IqBuffer:
    if gain_db == 0:
        return sig
    return sig.replace(sig.samples * db_to_amplitude(gain_db))


def tof_delay(distance_m: float) -> float:
    """Round-trip time of flight between the access point and a device"""
    if distance_m < 0:
        raise ValueError(f"Distance must be non-negative, got {distance_m}")
    return 2 * distance_m / SPEED_OF_LIGHT


def doppler_shift(velocity_mps: float, carrier_hz: float = DEFAULT_CARRIER_HZ) -> float:
    # One-way shift
    return carrier_hz * velocity_mps / SPEED_OF_LIGHT


def superpose(parts: Sequence[tuple[IqBuffer, int]]) -> IqBuffer:
    """Sum buffers placed at the given start samples"""
    if not parts:
        raise ValueError("Nothing to superpose")
    rates = {buf.sample_rate for buf, _ in parts}
    if len(rates) > 1:
        raise ValueError(f"Cannot superpose buffers with sample rates {sorted(rates)}")
    if any(start < 0 for _, start in parts):
        raise ValueError("Start samples must be non-negative")
    length = max(start + len(buf) for buf, start in parts)
    out = np.zeros(length, dtype=np.complex128)
    for buf, start in parts:
        out[start : start + len(buf)] += buf.samples
    return IqBuffer(out, rates.pop())


def awgn(length: int, noise_power: float, rng: np.random.Generator) -> np.ndarray:
    """Circularly-symmetric complex Gaussian noise of the given power"""
    scale = np.sqrt(noise_power / 2)
    noise: np.ndarray = scale * (
        rng.standard_normal(length) + 1j * rng.standard_normal(length)
    )
    return noise


def add_awgn(
    sig: IqBuffer, snr_db: float, seed: int, ref_power: float = 1.0
) -> IqBuffer:
    """
    Add noise so that a device received at ``ref_power`` (the 0 dB reference)
    sees ``snr_db``.  The noise depends only on ``seed`` and the buffer
    length.
    """
    if not ref_power > 0:
        raise ValueError(f"Reference power must be positive, got {ref_power}")
    rng = np.random.default_rng(seed)
    noise = awgn(len(sig), noise_power_for(snr_db, ref_power), rng)
    return sig.replace(sig.samples + noise)


def impair(
    sig: IqBuffer,
    impairments: DeviceImpairments,
    cfg: ChirpConfig,
    rng: np.random.Generator,
    carrier_hz: float = DEFAULT_CARRIER_HZ,
) -> tuple[IqBuffer, RealizedOffsets]:
    """
    Apply path gain, a per-packet timing offset (hardware jitter, time of
    flight and multipath) and the frequency offset (crystal error and Doppler)
    """
    dt = impairments.sample_timing_offset(rng)
    df = impairments.total_freq_offset(carrier_hz)
    out = apply_power_gain(sig, impairments.power_gain_db)
    out = apply_timing_offset(out, dt, cfg)
    out = apply_freq_offset(out, df)
    return out, RealizedOffsets(timing=dt, frequency=df)
