"""
Distributed chirp-spread-spectrum packets: framing, packet-start estimation,
device detection and ON-OFF-keyed payload decoding

Every device owns one cyclic shift.  A packet is six upchirps and two
downchirps carrying that shift, followed by one symbol per payload bit: the
shifted upchirp for a 1, silence for a 0.  The receiver demodulates the whole
band with one FFT per symbol and reads every device off its own bin.
"""

from __future__ import annotations
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
import logging
import math
from typing import TYPE_CHECKING
import numpy as np
import numpy.typing as npt
from scipy import fft as sfft
from .crc import append_crc, check_crc
from .css import (
    ChirpConfig,
    ComplexArray,
    IqBuffer,
    RealArray,
    demod_block,
    fractional_advance,
    make_chirp,
)

if TYPE_CHECKING:
    from .mac import AssignmentTable

log = logging.getLogger(__name__)

N_PREAMBLE_UP = 6
N_PREAMBLE_DOWN = 2
PAYLOAD_BITS = 40
DATA_BITS = 32

#: Step sizes, in samples, of the coarse-to-fine packet-start sweep
START_SEARCH_STEPS = (64, 8, 1)

#: Candidate starts whose preamble-length energy falls below this fraction of
#: the best candidate's are not examined
ENERGY_GATE = 0.1

#: A bin is occupied when its power exceeds this multiple of the mean noise
#: power per bin
NOISE_FLOOR_FACTOR = 10.0

#: Detection floor relative to the strongest peak when the noise power is not
#: known
RELATIVE_FLOOR = 1e-6

#: A peak this far below the strongest peak within two guard spacings is taken
#: for a side lobe
SIDELOBE_REJECT_DB = -12.0

_CANDIDATE_BATCH = 32

IntArray = npt.NDArray[np.intp]


class TruncatedCaptureError(ValueError):
    """Raised when a capture ends before the symbols being demodulated"""


@dataclass(frozen=True)
class PacketFrame:
    cyclic_shift: int
    payload_bits: tuple[int, ...] = (0,) * PAYLOAD_BITS
    n_preamble_up: int = N_PREAMBLE_UP
    n_preamble_down: int = N_PREAMBLE_DOWN

    def __post_init__(self) -> None:
        if any(b not in (0, 1) for b in self.payload_bits):
            raise ValueError("Payload bits must be 0 or 1")
        if self.n_preamble_up < 1 or self.n_preamble_down < 1:
            raise ValueError("Preamble needs at least one upchirp and one downchirp")

    @classmethod
    def from_data(cls, cyclic_shift: int, data: Sequence[int]) -> PacketFrame:
        """Build a frame whose payload is ``data`` followed by its CRC-8"""
        if len(data) != DATA_BITS:
            raise ValueError(f"Expected {DATA_BITS} data bits, got {len(data)}")
        return cls(cyclic_shift=cyclic_shift, payload_bits=tuple(append_crc(data)))

    @property
    def n_preamble(self) -> int:
        return self.n_preamble_up + self.n_preamble_down

    @property
    def n_symbols(self) -> int:
        return self.n_preamble + len(self.payload_bits)

    def n_samples(self, cfg: ChirpConfig) -> int:
        return self.n_symbols * cfg.symbol_len

    def airtime(self, cfg: ChirpConfig) -> float:
        return self.n_symbols * cfg.symbol_duration


@dataclass(frozen=True)
class DetectionResult:
    #: Estimated first sample of the packets; may be fractional
    packet_start: float
    active_shifts: frozenset[int] = frozenset()
    #: Average preamble peak power per active shift
    thresholds: Mapping[int, float] = field(default_factory=dict)
    #: Zero-padded FFT index tracked for each active shift
    peak_bins: Mapping[int, int] = field(default_factory=dict)
    #: Shifts whose energy peaks outside their own guard window
    guard_violations: frozenset[int] = frozenset()
    #: Guard spacing of the assignment, setting each shift's window
    skip: int = 1


@dataclass(frozen=True)
class DecodedPacket:
    cyclic_shift: int
    bits: tuple[int, ...]
    crc_ok: bool

    @property
    def data(self) -> tuple[int, ...]:
        return self.bits[:DATA_BITS]


def build_packet(frame: PacketFrame, cfg: ChirpConfig) -> IqBuffer:
    up = make_chirp(cfg, frame.cyclic_shift).samples
    down = make_chirp(cfg, frame.cyclic_shift, down=True).samples
    silence = np.zeros(cfg.symbol_len, dtype=np.complex128)
    parts = [up] * frame.n_preamble_up + [down] * frame.n_preamble_down
    parts.extend(up if b else silence for b in frame.payload_bits)
    return IqBuffer(np.concatenate(parts), cfg.sample_rate)


def _aligned(rx: IqBuffer, start: float) -> tuple[ComplexArray, int]:
    # Moves the fractional part of ``start`` into the samples so that symbol
    # boundaries fall on whole sample indices.
    whole = math.floor(start)
    frac = start - whole
    if frac:
        return fractional_advance(rx.samples, frac), whole
    return rx.samples, whole


def _symbols(
    x: ComplexArray, origin: int, first: int, count: int, cfg: ChirpConfig
) -> ComplexArray:
    """Symbols ``first`` through ``first + count - 1`` counted from ``origin``"""
    L = cfg.symbol_len
    lo = origin + first * L
    hi = lo + count * L
    if hi > len(x):
        raise TruncatedCaptureError(
            f"Capture of {len(x)} samples ends before sample {hi}"
        )
    block = np.zeros(count * L, dtype=np.complex128)
    src = max(lo, 0)
    if src < hi:
        block[src - lo :] = x[src:hi]
    return block.reshape(count, L)


def _window(shift: int, skip: int, cfg: ChirpConfig) -> IntArray:
    """Zero-padded FFT indices belonging to ``shift``: ±skip/2 native bins"""
    half = max(1, skip * cfg.pad_factor // 2)
    centre = shift * cfg.pad_factor
    return np.arange(centre - half, centre + half) % cfg.fft_size


def _neighbourhood(shift: int, bins: int, cfg: ChirpConfig) -> IntArray:
    """Zero-padded FFT indices within ``bins`` native bins of ``shift``, inclusive"""
    centre = shift * cfg.pad_factor
    reach = bins * cfg.pad_factor
    return np.arange(centre - reach, centre + reach + 1) % cfg.fft_size


def _floor(
    spectra: RealArray, cfg: ChirpConfig, noise_power: float | None
) -> float:
    # Per-symbol power above which a bin counts as occupied
    if noise_power:
        return NOISE_FLOOR_FACTOR * cfg.symbol_len * noise_power
    return RELATIVE_FLOOR * float(spectra.max(initial=0.0))


def _preamble_spectra(
    rx: IqBuffer, start: float, cfg: ChirpConfig
) -> tuple[RealArray, RealArray]:
    x, origin = _aligned(rx, start)
    up = demod_block(_symbols(x, origin, 0, N_PREAMBLE_UP, cfg), cfg)
    down = demod_block(
        _symbols(x, origin, N_PREAMBLE_UP, N_PREAMBLE_DOWN, cfg), cfg, down=True
    )
    return up, down


def _lag_offset(up: RealArray, down: RealArray, cfg: ChirpConfig) -> float:
    """
    Timing error, in samples, of a symbol grid given the summed upchirp and
    downchirp preamble spectra read on it.  A grid that runs ``e`` samples
    late moves upchirp peaks up and downchirp peaks down by ``e / agg_factor``
    bins, so the lag maximising their cross-correlation is ``2e`` bins; a
    shift or frequency offset common to both cancels out.
    """
    xcorr = sfft.ifft(sfft.fft(up) * np.conj(sfft.fft(down))).real
    lag = int(np.argmax(xcorr))
    if lag > cfg.fft_size // 2:
        lag -= cfg.fft_size
    return lag * cfg.agg_factor / (2 * cfg.pad_factor)


def _start_metrics(
    x: ComplexArray, candidates: IntArray, cfg: ChirpConfig
) -> RealArray:
    # Peak of the up/down cross-correlation for each candidate start
    L = cfg.symbol_len
    n_pre = N_PREAMBLE_UP + N_PREAMBLE_DOWN
    offsets = np.arange(n_pre * L).reshape(n_pre, L)
    metrics = []
    for i in range(0, len(candidates), _CANDIDATE_BATCH):
        batch = candidates[i : i + _CANDIDATE_BATCH]
        blocks = x[batch[:, None, None] + offsets]
        up = demod_block(
            blocks[:, :N_PREAMBLE_UP].reshape(-1, L), cfg
        ).reshape(len(batch), N_PREAMBLE_UP, -1).sum(axis=1)
        down = demod_block(
            blocks[:, N_PREAMBLE_UP:].reshape(-1, L), cfg, down=True
        ).reshape(len(batch), N_PREAMBLE_DOWN, -1).sum(axis=1)
        xcorr = sfft.ifft(
            sfft.fft(up, axis=-1) * np.conj(sfft.fft(down, axis=-1)), axis=-1
        ).real
        metrics.append(xcorr.max(axis=-1))
    return np.concatenate(metrics)


def detect_packet_start(
    rx: IqBuffer, cfg: ChirpConfig, noise_power: float | None = None
) -> float | None:
    """
    Estimate the first sample of the packets in ``rx`` without knowing which
    shifts are present.  Returns `None` when no preamble rises above the
    detection floor.  Without ``noise_power`` the floor is set from the
    quietest symbol-long stretch of the capture.

    Candidate starts are screened by energy, then swept with steps of 64, 8
    and 1 samples for the start at which the upchirp and downchirp preamble
    spectra correlate best.  The remaining sub-sample error is read off the
    lag between the two spectra, i.e., the midpoint of the symmetric
    preamble.
    """
    L = cfg.symbol_len
    span = (N_PREAMBLE_UP + N_PREAMBLE_DOWN) * L
    x = rx.samples
    if len(x) < span:
        log.debug("Capture of %d samples is shorter than a preamble", len(x))
        return None
    last = len(x) - span
    csum = np.concatenate([[0.0], np.cumsum(np.abs(x) ** 2)])
    candidates = np.arange(0, last + 1, START_SEARCH_STEPS[0])
    energy = csum[candidates + span] - csum[candidates]
    if energy.max(initial=0.0) <= 0:
        return None
    candidates = candidates[energy >= ENERGY_GATE * energy.max()]
    best = int(candidates[np.argmax(_start_metrics(x, candidates, cfg))])
    for prev, step in zip(START_SEARCH_STEPS, START_SEARCH_STEPS[1:]):
        lo = max(best - prev + step, 0)
        hi = min(best + prev - step, last)
        candidates = np.arange(lo, hi + 1, step)
        best = int(candidates[np.argmax(_start_metrics(x, candidates, cfg))])
    if noise_power is None:
        # Mean power of the quietest symbol-long stretch of the capture
        noise_power = max(float(np.min(csum[L:] - csum[:-L])), 0.0) / L
    up, down = _preamble_spectra(rx, best, cfg)
    up_sum = up.sum(axis=0)
    floor = N_PREAMBLE_UP * NOISE_FLOOR_FACTOR * L * noise_power
    if up_sum.max() <= floor:
        log.debug("Best preamble candidate at sample %d is below the floor", best)
        return None
    start = best - _lag_offset(up_sum, down.sum(axis=0), cfg)
    log.debug("Packet start estimated at sample %.2f", start)
    return start


def _monitored(assignment: AssignmentTable) -> list[int]:
    shifts = sorted(assignment.monitored_shifts())
    if not shifts:
        raise ValueError("Assignment table has no shifts to monitor")
    return shifts


def refine_packet_start(
    rx: IqBuffer,
    start: float,
    assignment: AssignmentTable,
    cfg: ChirpConfig,
    noise_power: float | None = None,
) -> float:
    """
    Re-centre the symbol grid on the devices actually present.  Each device's
    own preamble gives its timing error as half the distance between its
    upchirp and downchirp peaks; the grid moves by the mean of these.
    """
    up, down = _preamble_spectra(rx, start, cfg)
    floor = N_PREAMBLE_UP * _floor(up, cfg, noise_power)
    up_sum = up.sum(axis=0)
    down_sum = down.sum(axis=0)
    residuals = []
    for shift in _monitored(assignment):
        idx = _window(shift, assignment.skip, cfg)
        if up_sum[idx].max() <= floor:
            continue
        u = int(np.argmax(up_sum[idx]))
        d = int(np.argmax(down_sum[idx]))
        residuals.append((u - d) / 2)
    if not residuals:
        return start
    offset = float(np.mean(residuals)) * cfg.agg_factor / cfg.pad_factor
    log.debug(
        "Refined packet start by %.3f samples using %d devices",
        -offset,
        len(residuals),
    )
    return start - offset


def detect_active_devices(
    rx: IqBuffer,
    start: float,
    assignment: AssignmentTable,
    cfg: ChirpConfig,
    noise_power: float | None = None,
) -> DetectionResult:
    """
    Report which monitored shifts transmit a packet starting at ``start``.  A
    shift is active when its window holds a peak in every preamble upchirp
    that is neither below the detection floor, nor a side lobe of a much
    stronger neighbour, nor pushed against the edge of the window.
    """
    shifts = _monitored(assignment)
    up, _ = _preamble_spectra(rx, start, cfg)
    summed = up.sum(axis=0)
    floor = _floor(up, cfg, noise_power)
    reject = 10 ** (SIDELOBE_REJECT_DB / 10)
    active: set[int] = set()
    thresholds: dict[int, float] = {}
    peak_bins: dict[int, int] = {}
    violations: set[int] = set()
    for shift in shifts:
        idx = _window(shift, assignment.skip, cfg)
        j = int(np.argmax(summed[idx]))
        peak = float(summed[idx[j]])
        if peak <= N_PREAMBLE_UP * floor:
            continue
        neighbourhood = _neighbourhood(shift, 2 * assignment.skip, cfg)
        if peak < reject * float(summed[neighbourhood].max()):
            continue
        if j == 0 or j == len(idx) - 1:
            log.warning(
                "Shift %d peaks at the edge of its guard window; offset exceeds"
                " the guard budget",
                shift,
            )
            violations.add(shift)
            continue
        t = int(idx[j])
        if np.any(up[:, t] <= floor):
            log.debug("Shift %d is not present in every preamble symbol", shift)
            continue
        active.add(shift)
        thresholds[shift] = float(np.mean(up[:, t]))
        peak_bins[shift] = t
    log.debug("Detected %d active shifts out of %d", len(active), len(shifts))
    return DetectionResult(
        packet_start=start,
        active_shifts=frozenset(active),
        thresholds=thresholds,
        peak_bins=peak_bins,
        guard_violations=frozenset(violations),
        skip=assignment.skip,
    )


def decode_payloads(
    rx: IqBuffer,
    det: DetectionResult,
    cfg: ChirpConfig,
    n_bits: int = PAYLOAD_BITS,
) -> dict[int, tuple[int, ...]]:
    """
    A payload bit is 1 when the strongest power within the device's guard
    window exceeds half the average preamble peak power
    """
    x, origin = _aligned(rx, det.packet_start)
    payload = _symbols(x, origin, N_PREAMBLE_UP + N_PREAMBLE_DOWN, n_bits, cfg)
    if not det.active_shifts:
        return {}
    power = demod_block(payload, cfg)
    decoded = {}
    for shift in sorted(det.active_shifts):
        peak = power[:, _window(shift, det.skip, cfg)].max(axis=1)
        bits = peak > det.thresholds[shift] / 2
        decoded[shift] = tuple(int(b) for b in bits)
    return decoded


def demod_symbol_multi(rx_symbol: IqBuffer, cfg: ChirpConfig) -> RealArray:
    """
    Strongest zero-padded bin within each native bin, from a single dechirp
    and FFT of the symbol
    """
    if len(rx_symbol) != cfg.symbol_len:
        raise ValueError(
            f"Expected a symbol of {cfg.symbol_len} samples, got {len(rx_symbol)}"
        )
    (power,) = demod_block(rx_symbol.samples, cfg)
    # Native bin k covers padded indices k·α − α/2 through k·α + α/2.
    centred = np.roll(power, cfg.pad_factor // 2)
    per_bin: RealArray = centred.reshape(cfg.n_slots, cfg.pad_factor).max(axis=1)
    return per_bin


def decode_capture(
    rx: IqBuffer,
    assignment: AssignmentTable,
    cfg: ChirpConfig,
    start: float | None = None,
    noise_power: float | None = None,
    n_bits: int = PAYLOAD_BITS,
    refine: bool = True,
) -> dict[int, DecodedPacket]:
    """
    Run the whole receiver over one capture.  ``start`` is the nominal packet
    start when the access point knows it from its query timing; otherwise it
    is estimated blindly.
    """
    if start is None:
        start = detect_packet_start(rx, cfg, noise_power=noise_power)
        if start is None:
            log.warning("No packet detected in capture of %d samples", len(rx))
            return {}
    if refine:
        start = refine_packet_start(rx, start, assignment, cfg, noise_power)
    det = detect_active_devices(rx, start, assignment, cfg, noise_power)
    payloads = decode_payloads(rx, det, cfg, n_bits=n_bits)
    return {
        shift: DecodedPacket(cyclic_shift=shift, bits=bits, crc_ok=check_crc(bits))
        for shift, bits in payloads.items()
    }


def payload_errors(sent: Iterable[int], received: Iterable[int]) -> int:
    return sum(a != b for a, b in zip(sent, received, strict=True))
