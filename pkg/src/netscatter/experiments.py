"""
Monte-Carlo experiments: near-far resilience, dynamic range, FFT-bin
variation and BER against SNR

Every trial draws from its own generator, seeded from the master seed and the
trial's coordinates, so results do not depend on trial order or on how many
worker processes run them.
"""

from __future__ import annotations
from collections.abc import Callable, Iterable, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
import logging
import math
from typing import TypeVar
import numpy as np
from .analytic import (
    network_phy_rate,
    tolerated_freq_mismatch,
    tolerated_timing_mismatch,
)
from .channel import (
    ChannelConfig,
    DeviceImpairments,
    JitterKind,
    JitterSpec,
    apply_freq_offset,
    apply_timing_offset,
)
from .css import ChirpConfig, bin_displacement, demodulate
from .link import DeviceProfile, render_uplink
from .mac import AssignmentTable, assign_cyclic_shift
from .phy import (
    N_PREAMBLE_UP,
    PAYLOAD_BITS,
    PacketFrame,
    build_packet,
    decode_capture,
    payload_errors,
)
from .records import ExperimentRecord
from .util import random_bits, trial_seed

log = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

DEFAULT_SKIP = 2

#: Packet error rate below which a device counts as decoded
PER_TARGET = 0.01

#: Spreading factor per bandwidth keeping the device bit rate at 976 bps
DEFAULT_SF_FOR_BW = {500_000.0: 9, 250_000.0: 8, 125_000.0: 7}


def run_trials(fn: Callable[[T], R], tasks: Sequence[T], jobs: int = 1) -> list[R]:
    """Apply ``fn`` to every task, in worker processes when ``jobs > 1``"""
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        chunksize = max(1, len(tasks) // (4 * jobs))
        return list(pool.map(fn, tasks, chunksize=chunksize))


def bit_errors(sent: Sequence[int], received: Sequence[int] | None) -> int:
    """Bit errors in a payload; a packet that was not decoded reads as silence"""
    if received is None:
        return sum(sent)
    return payload_errors(sent, received)


def base_config(cfg: ChirpConfig, skip: int) -> dict[str, int | float | str]:
    return {"sf": cfg.sf, "bw": cfg.bw, "pad_factor": cfg.pad_factor, "skip": skip}


@dataclass(frozen=True)
class PairTrial:
    """One packet from a weak and a strong device transmitting together"""

    cfg: ChirpConfig
    skip: int
    weak_shift: int
    strong_shift: int
    deficit_db: float
    weak_snr_db: float
    freq_sigma_hz: float
    seed: int


@dataclass(frozen=True)
class PairOutcome:
    weak_errors: int
    strong_errors: int


def pair_trial(t: PairTrial) -> PairOutcome:
    rng = np.random.default_rng(t.seed)
    payloads = [random_bits(rng, PAYLOAD_BITS) for _ in range(2)]
    limit = 0.45 * t.cfg.sample_rate
    offsets = np.clip(rng.normal(0.0, t.freq_sigma_hz, size=2), -limit, limit)
    devices = [
        DeviceProfile(
            device_id=0,
            cyclic_shift=t.weak_shift,
            impairments=DeviceImpairments(
                power_gain_db=-t.deficit_db,
                timing_jitter=JitterSpec.none(),
                freq_offset=float(offsets[0]),
            ),
        ),
        DeviceProfile(
            device_id=1,
            cyclic_shift=t.strong_shift,
            impairments=DeviceImpairments(
                timing_jitter=JitterSpec.none(), freq_offset=float(offsets[1])
            ),
        ),
    ]
    channel = ChannelConfig(
        snr_db=t.weak_snr_db + t.deficit_db, seed=int(rng.integers(2**63))
    )
    uplink = render_uplink(devices, payloads, t.cfg, channel)
    table = AssignmentTable(
        skip=t.skip,
        n_slots=t.cfg.n_slots,
        shift_of_device={0: t.weak_shift, 1: t.strong_shift},
    )
    decoded = decode_capture(
        uplink.capture,
        table,
        t.cfg,
        start=uplink.start,
        noise_power=uplink.noise_power,
    )
    weak = decoded.get(t.weak_shift)
    strong = decoded.get(t.strong_shift)
    return PairOutcome(
        weak_errors=bit_errors(payloads[0], weak.bits if weak else None),
        strong_errors=bit_errors(payloads[1], strong.bits if strong else None),
    )


def run_near_far(
    cfg: ChirpConfig,
    bin_a: int = 2,
    bin_b: int = 258,
    power_diffs_db: Iterable[float] = (0.0, 10.0, 20.0, 30.0, 40.0),
    freq_mismatch_sigma_hz: float = 300.0,
    n_symbols: int = 10_000,
    snr_db: float = -5.0,
    skip: int = DEFAULT_SKIP,
    seed: int = 0,
    jobs: int = 1,
) -> list[ExperimentRecord]:
    """
    BER of a device on ``bin_a`` while a device on ``bin_b`` is received
    stronger by each power difference.  ``snr_db`` is the SNR of the weak
    device; its payload carries ``n_symbols`` bits in total.
    """
    if bin_a == bin_b:
        raise ValueError("The two devices need distinct bins")
    for b in (bin_a, bin_b):
        if not 0 <= b < cfg.n_slots:
            raise ValueError(f"Bin {b} outside [0, {cfg.n_slots})")
    n_packets = math.ceil(n_symbols / PAYLOAD_BITS)
    records = []
    for i, diff in enumerate(power_diffs_db):
        log.info("Near-far: strong device %.1f dB above weak device", diff)
        tasks = [
            PairTrial(
                cfg=cfg,
                skip=skip,
                weak_shift=bin_a,
                strong_shift=bin_b,
                deficit_db=diff,
                weak_snr_db=snr_db,
                freq_sigma_hz=freq_mismatch_sigma_hz,
                seed=trial_seed(seed, i, p),
            )
            for p in range(n_packets)
        ]
        outcomes = run_trials(pair_trial, tasks, jobs)
        n_bits = n_packets * PAYLOAD_BITS
        records.append(
            ExperimentRecord(
                experiment="nearfar",
                seed=seed,
                config={
                    **base_config(cfg, skip),
                    "n_devices": 2,
                    "snr_db": snr_db,
                    "bin_a": bin_a,
                    "bin_b": bin_b,
                    "power_diff_db": float(diff),
                    "freq_sigma_hz": freq_mismatch_sigma_hz,
                    "n_symbols": n_bits,
                },
                metrics={
                    "ber": sum(o.weak_errors for o in outcomes) / n_bits,
                    "ber_strong": sum(o.strong_errors for o in outcomes) / n_bits,
                    "per": sum(o.weak_errors > 0 for o in outcomes) / n_packets,
                },
            )
        )
    return records


def _passes(
    template: PairTrial,
    weak_shift: int,
    deficit: float,
    grid_index: int,
    n_packets: int,
    seed: int,
    jobs: int,
) -> bool:
    tasks = [
        PairTrial(
            cfg=template.cfg,
            skip=template.skip,
            weak_shift=weak_shift,
            strong_shift=template.strong_shift,
            deficit_db=deficit,
            weak_snr_db=template.weak_snr_db,
            freq_sigma_hz=template.freq_sigma_hz,
            seed=trial_seed(seed, grid_index, p),
        )
        for p in range(n_packets)
    ]
    failures = sum(o.weak_errors > 0 for o in run_trials(pair_trial, tasks, jobs))
    return failures / n_packets < PER_TARGET


def default_separations(cfg: ChirpConfig, skip: int) -> list[int]:
    """Separations from one guard spacing up to half the band and back"""
    half = cfg.n_slots // 2
    ups = []
    d = skip
    while d < half:
        ups.append(d)
        d *= 2
    return [*ups, half, *(cfg.n_slots - u for u in reversed(ups))]


def run_dynamic_range_sweep(
    cfg: ChirpConfig,
    fixed_bin: int = 0,
    separations: Sequence[int] | None = None,
    max_diff_db: float = 50.0,
    step_db: float = 1.0,
    n_packets: int = 100,
    snr_db: float = 0.0,
    freq_mismatch_sigma_hz: float = 300.0,
    skip: int = DEFAULT_SKIP,
    seed: int = 0,
    jobs: int = 1,
) -> list[ExperimentRecord]:
    """
    For each bin of a second device, the largest power deficit relative to
    the device on ``fixed_bin`` at which the second device's packet error
    rate stays below 1%.  Deficits are searched by bisection over a grid of
    ``step_db``; `nan` marks a bin that fails even at equal power.
    """
    if separations is None:
        separations = default_separations(cfg, skip)
    grid = np.arange(0.0, max_diff_db + step_db / 2, step_db)
    template = PairTrial(
        cfg=cfg,
        skip=skip,
        weak_shift=fixed_bin,
        strong_shift=fixed_bin,
        deficit_db=0.0,
        weak_snr_db=snr_db,
        freq_sigma_hz=freq_mismatch_sigma_hz,
        seed=seed,
    )
    records = []
    for sep in separations:
        if not 0 < sep < cfg.n_slots:
            raise ValueError(f"Separation {sep} outside (0, {cfg.n_slots})")
        weak_shift = (fixed_bin + sep) % cfg.n_slots
        lo, hi = -1, len(grid)
        # Invariant: grid[lo] passes (or lo == -1); grid[hi] fails (or hi == len)
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if _passes(
                template, weak_shift, float(grid[mid]), mid, n_packets, seed, jobs
            ):
                lo = mid
            else:
                hi = mid
        tolerated = float(grid[lo]) if lo >= 0 else math.nan
        log.info("Dynamic range at separation %d: %.1f dB", sep, tolerated)
        records.append(
            ExperimentRecord(
                experiment="dynrange",
                seed=seed,
                config={
                    **base_config(cfg, skip),
                    "n_devices": 2,
                    "snr_db": snr_db,
                    "fixed_bin": fixed_bin,
                    "bin_separation": sep,
                    "freq_sigma_hz": freq_mismatch_sigma_hz,
                    "n_packets": n_packets,
                },
                metrics={"max_power_diff_db": tolerated},
            )
        )
    return records


@dataclass(frozen=True)
class VariationTrial:
    cfg: ChirpConfig
    timing: JitterSpec
    freq: JitterSpec
    shift: int
    seed: int


def variation_trial(t: VariationTrial) -> float:
    """Displacement in bins of one packet's preamble peak"""
    rng = np.random.default_rng(t.seed)
    dt = t.timing.sample(rng)
    df = t.freq.sample(rng)
    packet = build_packet(PacketFrame(t.shift, ()), t.cfg)
    packet = apply_freq_offset(apply_timing_offset(packet, dt, t.cfg), df)
    # A middle upchirp has identical neighbours on both sides.
    peak = demodulate(packet.symbol(N_PREAMBLE_UP // 2, t.cfg), t.cfg)
    return bin_displacement(peak.fractional_bin, t.shift, t.cfg.n_slots)


def run_fft_variation(
    bw_list: Sequence[float] = tuple(DEFAULT_SF_FOR_BW),
    jitter: JitterSpec | None = None,
    sf_for_bw: dict[float, int] | None = None,
    freq_jitter: JitterSpec | None = None,
    n_packets: int = 1000,
    pad_factor: int = 10,
    seed: int = 0,
    jobs: int = 1,
) -> list[ExperimentRecord]:
    """
    Distribution of the measured FFT-bin displacement caused by per-packet
    hardware delays (and optionally frequency offsets) at each bandwidth,
    alongside the offsets a one-bin budget tolerates
    """
    if jitter is None:
        jitter = JitterSpec()
    if freq_jitter is None:
        freq_jitter = JitterSpec.none()
    if sf_for_bw is None:
        sf_for_bw = DEFAULT_SF_FOR_BW
    records = []
    for i, bw in enumerate(bw_list):
        try:
            sf = sf_for_bw[bw]
        except KeyError:
            raise ValueError(f"No spreading factor configured for {bw} Hz") from None
        cfg = ChirpConfig(sf=sf, bw=bw, pad_factor=pad_factor)
        log.info("FFT variation: bw=%g Hz, sf=%d", bw, sf)
        tasks = [
            VariationTrial(
                cfg=cfg,
                timing=jitter,
                freq=freq_jitter,
                shift=cfg.n_slots // 2,
                seed=trial_seed(seed, i, p),
            )
            for p in range(n_packets)
        ]
        shifts = np.array(run_trials(variation_trial, tasks, jobs))
        if jitter.kind is JitterKind.UNIFORM:
            mean_dt = (jitter.low + jitter.high) / 2
        elif jitter.kind is JitterKind.FIXED:
            mean_dt = jitter.low
        else:
            mean_dt = 0.0
        records.append(
            ExperimentRecord(
                experiment="fftvar",
                seed=seed,
                config={
                    "sf": sf,
                    "bw": bw,
                    "pad_factor": pad_factor,
                    "jitter": str(jitter),
                    "freq_jitter": str(freq_jitter),
                    "n_packets": n_packets,
                },
                metrics={
                    "fft_bin_shift": float(shifts.mean()),
                    "fft_bin_shift_std": float(shifts.std()),
                    "fft_bin_shift_min": float(shifts.min()),
                    "fft_bin_shift_max": float(shifts.max()),
                    "expected_bin_shift": mean_dt * bw,
                    "within_one_bin": float(np.mean(np.abs(shifts) <= 1.0)),
                    "tolerated_timing_s": tolerated_timing_mismatch(cfg),
                    "tolerated_freq_hz": tolerated_freq_mismatch(cfg),
                    "device_bitrate_bps": bw / cfg.n_bins,
                },
            )
        )
    return records


@dataclass(frozen=True)
class NetworkTrial:
    cfg: ChirpConfig
    table: AssignmentTable
    gains_db: dict[int, float]
    levels_db: dict[int, float]
    snr_db: float
    jitter: JitterSpec
    seed: int
    #: Estimate the packet start from the capture instead of the query timing
    blind_start: bool = False


@dataclass(frozen=True)
class NetworkOutcome:
    bit_errors: int
    packets_ok: int
    #: Packets whose payload passed its CRC
    crc_ok: int


def network_trial(t: NetworkTrial) -> NetworkOutcome:
    """One round of every device in ``t.table`` transmitting concurrently"""
    rng = np.random.default_rng(t.seed)
    devices = [
        DeviceProfile(
            device_id=device,
            cyclic_shift=shift,
            power_level_db=t.levels_db.get(device, 0.0),
            impairments=DeviceImpairments(
                power_gain_db=t.gains_db.get(device, 0.0), timing_jitter=t.jitter
            ),
        )
        for device, shift in sorted(t.table.shift_of_device.items())
    ]
    payloads = [
        PacketFrame.from_data(d.cyclic_shift, random_bits(rng, 32)).payload_bits
        for d in devices
    ]
    channel = ChannelConfig(snr_db=t.snr_db, seed=int(rng.integers(2**63)))
    uplink = render_uplink(devices, payloads, t.cfg, channel)
    decoded = decode_capture(
        uplink.capture,
        t.table,
        t.cfg,
        start=None if t.blind_start else uplink.start,
        noise_power=uplink.noise_power,
    )
    errors = 0
    ok = 0
    crc_ok = 0
    for dev, bits in zip(devices, payloads):
        got = decoded.get(dev.cyclic_shift)
        e = bit_errors(bits, got.bits if got else None)
        errors += e
        ok += e == 0
        crc_ok += bool(got and got.crc_ok)
    log.debug(
        "Round with %d devices: %d bit errors, %d packets intact",
        len(devices),
        errors,
        ok,
    )
    return NetworkOutcome(bit_errors=errors, packets_ok=ok, crc_ok=crc_ok)


def run_ber_snr(
    cfg: ChirpConfig,
    snr_list: Iterable[float] = (-10.0, -5.0, 0.0, 5.0, 10.0),
    n_devices: int = 1,
    n_packets: int = 250,
    jitter: JitterSpec | None = None,
    skip: int = DEFAULT_SKIP,
    seed: int = 0,
    jobs: int = 1,
) -> list[ExperimentRecord]:
    """
    Per-device BER of ``n_devices`` equal-power devices at each SNR, each
    device sending ``n_packets`` packets
    """
    if jitter is None:
        jitter = JitterSpec()
    table = assign_cyclic_shift(
        dict.fromkeys(range(n_devices), 0.0),
        skip=skip,
        sf=cfg.sf,
        n_assoc=0,
        agg_factor=cfg.agg_factor,
    )
    records = []
    for i, snr in enumerate(snr_list):
        log.info("BER vs SNR: %d devices at %.1f dB", n_devices, snr)
        tasks = [
            NetworkTrial(
                cfg=cfg,
                table=table,
                gains_db={},
                levels_db={},
                snr_db=snr,
                jitter=jitter,
                seed=trial_seed(seed, i, p),
            )
            for p in range(n_packets)
        ]
        outcomes = run_trials(network_trial, tasks, jobs)
        n_bits = n_devices * n_packets * PAYLOAD_BITS
        ber = sum(o.bit_errors for o in outcomes) / n_bits
        ok = sum(o.packets_ok for o in outcomes)
        records.append(
            ExperimentRecord(
                experiment="bersnr",
                seed=seed,
                config={
                    **base_config(cfg, skip),
                    "n_devices": n_devices,
                    "snr_db": float(snr),
                    "jitter": str(jitter),
                    "n_packets": n_packets,
                },
                metrics={
                    "ber": ber,
                    # One OOK bit per symbol
                    "ser": ber,
                    "per": 1 - ok / (n_devices * n_packets),
                    "phy_rate_bps": network_phy_rate(n_devices, cfg)
                    * ok
                    / (n_devices * n_packets),
                },
            )
        )
    return records
