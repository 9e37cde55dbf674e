"""
Chirp generation and demodulation

Symbols are critically sampled: one chirp band of ``bw`` Hz is sampled at
``bw`` samples per second (``agg_factor`` times that when several bands are
aggregated), so a symbol is ``agg_factor * 2**sf`` samples long.  The discrete
baseline upchirp is

    s[n] = exp(j2π(n² / (2·2^sf·m²) − n/2))

which sweeps −bw/2 … +bw/2 over the symbol and maps a cyclic shift of ``k``
samples onto FFT bin ``k`` exactly.
"""

from __future__ import annotations
from dataclasses import dataclass
import logging
import math
import numpy as np
import numpy.typing as npt
from scipy import fft as sfft

log = logging.getLogger(__name__)

MIN_SF = 6
MAX_SF = 12

#: Zero-padding multiple giving one-tenth-bin peak resolution
DEFAULT_PAD_FACTOR = 10

ComplexArray = npt.NDArray[np.complex128]
RealArray = npt.NDArray[np.float64]


@dataclass(frozen=True)
class ChirpConfig:
    #: Spreading factor; a chirp band holds ``2**sf`` bins
    sf: int = 9

    #: Chirp bandwidth in Hz
    bw: float = 500_000.0

    #: Zero-padding multiple α applied before the FFT
    pad_factor: int = DEFAULT_PAD_FACTOR

    #: Number of chirp bands aggregated into one receive band
    agg_factor: int = 1

    def __post_init__(self) -> None:
        if not MIN_SF <= self.sf <= MAX_SF:
            raise ValueError(
                f"Spreading factor must be between {MIN_SF} and {MAX_SF}, got {self.sf}"
            )
        if not self.bw > 0:
            raise ValueError(f"Bandwidth must be positive, got {self.bw}")
        if self.pad_factor < 1:
            raise ValueError(f"Zero-padding factor must be >= 1, got {self.pad_factor}")
        if self.agg_factor < 1:
            raise ValueError(
                f"Aggregation factor must be >= 1, got {self.agg_factor}"
            )

    @property
    def n_bins(self) -> int:
        """Number of FFT bins in one chirp band, ``2**sf``"""
        return 1 << self.sf

    @property
    def n_slots(self) -> int:
        """Number of distinct cyclic shifts across the aggregate band"""
        return self.agg_factor * self.n_bins

    @property
    def symbol_len(self) -> int:
        return self.n_slots

    @property
    def sample_rate(self) -> float:
        return self.agg_factor * self.bw

    @property
    def symbol_duration(self) -> float:
        return self.n_bins / self.bw

    @property
    def fft_size(self) -> int:
        return self.pad_factor * self.n_slots

    @property
    def bin_resolution(self) -> float:
        """Spacing of the zero-padded FFT grid in Hz"""
        return self.bw / (self.pad_factor * self.n_bins)

    def with_pad_factor(self, pad_factor: int) -> ChirpConfig:
        return ChirpConfig(
            sf=self.sf, bw=self.bw, pad_factor=pad_factor, agg_factor=self.agg_factor
        )


@dataclass(frozen=True, eq=False)
class IqBuffer:
    """Immutable complex baseband samples at a known sample rate"""

    samples: ComplexArray
    sample_rate: float

    def __post_init__(self) -> None:
        arr = np.array(self.samples, dtype=np.complex128)
        if arr.ndim != 1:
            raise ValueError(
                f"IQ samples must be one-dimensional, got shape {arr.shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise ValueError("IQ samples contain NaN or infinite values")
        if not self.sample_rate > 0:
            raise ValueError(f"Sample rate must be positive, got {self.sample_rate}")
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)

    def __len__(self) -> int:
        return len(self.samples)

    @classmethod
    def zeros(cls, length: int, sample_rate: float) -> IqBuffer:
        return cls(np.zeros(length, dtype=np.complex128), sample_rate)

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate

    def energy(self) -> float:
        return float(np.sum(np.abs(self.samples) ** 2))

    def power(self) -> float:
        if not len(self):
            return 0.0
        return self.energy() / len(self)

    def replace(self, samples: npt.ArrayLike) -> IqBuffer:
        return IqBuffer(np.asarray(samples), self.sample_rate)

    def symbol(self, index: int, cfg: ChirpConfig) -> IqBuffer:
        """Return the ``index``-th symbol-length window of the buffer"""
        start = index * cfg.symbol_len
        if index < 0 or start + cfg.symbol_len > len(self):
            raise ValueError(f"Buffer holds no symbol at index {index}")
        return self.replace(self.samples[start : start + cfg.symbol_len])


@dataclass(frozen=True, eq=False)
class SymbolSpectrum:
    bins: ComplexArray
    #: Spacing of the bins in Hz
    bin_resolution: float
    pad_factor: int
    #: Number of native (unpadded) bins
    n_slots: int

    def power(self) -> RealArray:
        return np.abs(self.bins) ** 2


@dataclass(frozen=True)
class PeakEstimate:
    #: Index of the strongest bin on the zero-padded grid
    bin_index: int
    #: Peak position in native-bin units, modulo the number of native bins
    fractional_bin: float
    power: float


def _chirp_phase(n: npt.NDArray[np.int64], cfg: ChirpConfig) -> RealArray:
    # Phase in cycles, reduced modulo 1 with integer arithmetic so that long
    # symbols keep full precision.
    m = cfg.agg_factor
    denom = 2 * cfg.n_bins * m * m
    num = (n * n - n * cfg.n_bins * m * m) % denom
    return num.astype(np.float64) / denom


def _check_shift(k: int, cfg: ChirpConfig) -> None:
    if not 0 <= k < cfg.n_slots:
        raise ValueError(f"Cyclic shift must be in [0, {cfg.n_slots}), got {k}")


def make_chirp(cfg: ChirpConfig, k: int = 0, down: bool = False) -> IqBuffer:
    """
    Return the upchirp with cyclic shift ``k``, or (with ``down=True``) the
    downchirp mirroring it.

    Dechirping either one with its own reference gives a peak at bin ``k``.
    A timing offset moves the upchirp and downchirp peaks in opposite
    directions while a frequency offset moves both the same way.
    """
    _check_shift(k, cfg)
    n = np.arange(cfg.symbol_len, dtype=np.int64)
    if down:
        phase = -_chirp_phase(n - k * cfg.agg_factor, cfg)
    else:
        phase = _chirp_phase(n + k * cfg.agg_factor, cfg)
    return IqBuffer(np.exp(2j * np.pi * phase), cfg.sample_rate)


def make_upchirp(cfg: ChirpConfig) -> IqBuffer:
    return make_chirp(cfg)


def make_downchirp(cfg: ChirpConfig) -> IqBuffer:
    return make_chirp(cfg, down=True)


def make_aggregate_upchirp(cfg: ChirpConfig, k: int) -> IqBuffer:
    """
    Upchirp with shift ``k`` inside an aggregate band of ``agg_factor`` chirp
    bands.  The chirp keeps its own bandwidth and slope and aliases back to
    the bottom of the aggregate band when it reaches the top, so the whole
    band is demodulated with a single ``agg_factor * 2**sf``-point FFT.
    """
    return make_chirp(cfg, k)


def cyclic_shift(symbol: IqBuffer, k: int) -> IqBuffer:
    if not 0 <= k < len(symbol):
        raise ValueError(f"Cyclic shift must be in [0, {len(symbol)}), got {k}")
    return symbol.replace(np.roll(symbol.samples, -k))


def _reference(cfg: ChirpConfig, down: bool) -> ComplexArray:
    # Dechirping an upchirp multiplies by the downchirp and vice versa.
    return make_chirp(cfg, down=not down).samples


def dechirp(rx: IqBuffer, cfg: ChirpConfig, down: bool = False) -> IqBuffer:
    """
    Multiply one received symbol by the reference chirp of opposite slope.
    Upchirp symbols are dechirped by default; pass ``down=True`` to dechirp
    preamble downchirps instead.
    """
    if len(rx) != cfg.symbol_len:
        raise ValueError(
            f"Expected a symbol of {cfg.symbol_len} samples, got {len(rx)}"
        )
    return rx.replace(rx.samples * _reference(cfg, down))


def zero_pad_fft(dechirped: IqBuffer, cfg: ChirpConfig) -> SymbolSpectrum:
    if not len(dechirped):
        raise ValueError("Cannot transform an empty buffer")
    if len(dechirped) > cfg.fft_size:
        raise ValueError(
            f"Symbol of {len(dechirped)} samples exceeds FFT size {cfg.fft_size}"
        )
    return SymbolSpectrum(
        bins=sfft.fft(dechirped.samples, n=cfg.fft_size),
        bin_resolution=cfg.bin_resolution,
        pad_factor=cfg.pad_factor,
        n_slots=cfg.n_slots,
    )


def peak_search(spec: SymbolSpectrum) -> PeakEstimate:
    power = spec.power()
    if not len(power):
        raise ValueError("Cannot search an empty spectrum")
    # np.argmax returns the first maximum, i.e. the lowest index on ties
    idx = int(np.argmax(power))
    return PeakEstimate(
        bin_index=idx,
        fractional_bin=(idx / spec.pad_factor) % spec.n_slots,
        power=float(power[idx]),
    )


def demodulate(rx: IqBuffer, cfg: ChirpConfig) -> PeakEstimate:
    """Dechirp, zero-pad, transform and locate the peak of one upchirp symbol"""
    return peak_search(zero_pad_fft(dechirp(rx, cfg), cfg))


def demod_block(
    symbols: npt.NDArray[np.complex128], cfg: ChirpConfig, down: bool = False
) -> RealArray:
    """
    Power spectra of a stack of symbols (one row each) on the zero-padded grid.
    All rows are dechirped in one pass and transformed by a single FFT call,
    whatever the number of transmitters superposed in them.
    """
    block = np.atleast_2d(symbols)
    if block.shape[-1] != cfg.symbol_len:
        raise ValueError(
            f"Expected symbols of {cfg.symbol_len} samples, got {block.shape[-1]}"
        )
    spectra = sfft.fft(block * _reference(cfg, down), n=cfg.fft_size, axis=-1)
    power: RealArray = np.abs(spectra) ** 2
    return power


def bin_from_timing_offset(dt: float, cfg: ChirpConfig) -> float:
    return dt * cfg.bw


def bin_from_freq_offset(df: float, cfg: ChirpConfig) -> float:
    return df * cfg.n_bins / cfg.bw


def bin_displacement(measured: float, expected: float, n_slots: int) -> float:
    """Signed distance from ``expected`` to ``measured`` on the circular bin axis"""
    d = (measured - expected) % n_slots
    if d > n_slots / 2:
        d -= n_slots
    return d


def fractional_advance(
    samples: npt.NDArray[np.complex128], shift: float, circular: bool = False
) -> ComplexArray:
    """
    Band-limited resampling ``out[n] = x(n + shift)`` applied as a linear phase
    ramp in the frequency domain.  Unless ``circular`` is set the signal is
    padded with zeros first, so nothing wraps around.
    """
    x = np.asarray(samples, dtype=np.complex128)
    if shift == 0 or not len(x):
        return x.copy()
    if circular:
        ramp = np.exp(2j * np.pi * sfft.fftfreq(len(x)) * shift)
        out: ComplexArray = sfft.ifft(sfft.fft(x) * ramp)
        return out
    margin = math.ceil(abs(shift)) + 8
    size = sfft.next_fast_len(len(x) + 2 * margin)
    padded = np.zeros(size, dtype=np.complex128)
    padded[margin : margin + len(x)] = x
    ramp = np.exp(2j * np.pi * sfft.fftfreq(size) * shift)
    moved = sfft.ifft(sfft.fft(padded) * ramp)
    out = moved[margin : margin + len(x)]
    return out
