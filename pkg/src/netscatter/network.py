"""
Network-level throughput and latency of NetScatter against sequential LoRa

A round is one access-point query followed by the uplink it triggers.
NetScatter devices answer a single query concurrently; LoRa devices are
polled one at a time, each with its own query and preamble.
"""

from __future__ import annotations
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
import logging
import math
from .analytic import rate_model
from .channel import JitterSpec
from .css import ChirpConfig
from .experiments import (
    DEFAULT_SKIP,
    NetworkTrial,
    base_config,
    network_trial,
    run_trials,
)
from .mac import (
    DOWNLINK_RATE,
    LORA_QUERY_BITS,
    MIN_QUERY_BITS,
    REASSIGN_QUERY_BITS,
    DevicePowerState,
    assign_cyclic_shift,
    device_power_adapt,
    query_airtime,
)
from .phy import N_PREAMBLE_DOWN, N_PREAMBLE_UP, PAYLOAD_BITS
from .records import ExperimentRecord
from .util import Choice, trial_rng, trial_seed

log = logging.getLogger(__name__)

#: Preamble length of a LoRa packet, in symbols
LORA_PREAMBLE_SYMBOLS = N_PREAMBLE_UP + N_PREAMBLE_DOWN

#: Default range of device SNRs in a deployment, in dB
DEFAULT_SNR_RANGE = (0.0, 30.0)


class Scheme(Choice):
    NETSCATTER_CFG1 = "netscatter_cfg1"
    NETSCATTER_CFG2 = "netscatter_cfg2"
    LORA_FIXED = "lora_fixed"
    LORA_IDEAL_RATE = "lora_ideal_rate"

    @property
    def is_netscatter(self) -> bool:
        return self in (Scheme.NETSCATTER_CFG1, Scheme.NETSCATTER_CFG2)

    @property
    def query_bits(self) -> int:
        if self is Scheme.NETSCATTER_CFG1:
            return MIN_QUERY_BITS
        elif self is Scheme.NETSCATTER_CFG2:
            return REASSIGN_QUERY_BITS
        else:
            return LORA_QUERY_BITS


@dataclass(frozen=True)
class LoRaRate:
    """A LoRa data rate usable by devices received at ``min_snr_db`` or better"""

    min_snr_db: float
    bitrate: float
    sf: int

    def __post_init__(self) -> None:
        if not self.bitrate > 0:
            raise ValueError(f"Bit rate must be positive, got {self.bitrate}")

    @classmethod
    def parse(cls, s: str) -> LoRaRate:
        """Parse ``MIN_SNR_DB:BITRATE:SF``"""
        try:
            snr, bitrate, sf = s.strip().split(":")
            return cls(min_snr_db=float(snr), bitrate=float(bitrate), sf=int(sf))
        except ValueError:
            raise ValueError(f"Invalid LoRa rate: {s!r}") from None

    def preamble_duration(self, bw: float) -> float:
        return LORA_PREAMBLE_SYMBOLS * (1 << self.sf) / bw


#: SNR to bit rate ladder at 500 kHz, capped at 32 kbps
DEFAULT_LORA_RATES = (
    LoRaRate(0.0, 32_000.0, 6),
    LoRaRate(-3.0, 16_000.0, 7),
    LoRaRate(-6.0, 8_000.0, 8),
    LoRaRate(-9.0, 4_000.0, 9),
    LoRaRate(-12.0, 2_000.0, 10),
    LoRaRate(-15.0, 976.0, 11),
)


def parse_rate_table(s: str) -> tuple[LoRaRate, ...]:
    """Parse a comma-separated list of ``MIN_SNR_DB:BITRATE:SF`` entries"""
    rates = tuple(LoRaRate.parse(part) for part in s.split(",") if part.strip())
    if not rates:
        raise ValueError("LoRa rate table is empty")
    return rates


def pick_rate(snr_db: float, rates: Sequence[LoRaRate]) -> tuple[LoRaRate, bool]:
    """
    Fastest rate a device at ``snr_db`` can use, and whether it is usable at
    all.  A device below every floor falls back to the most robust rate and
    its packet is lost.
    """
    usable = [r for r in rates if snr_db >= r.min_snr_db]
    if usable:
        return max(usable, key=lambda r: r.bitrate), True
    return min(rates, key=lambda r: r.min_snr_db), False


@dataclass(frozen=True)
class RoundStats:
    """What one scheme achieves for one set of devices, per polling round"""

    n_devices: int
    #: Packets delivered intact per round, averaged over rounds
    delivered: float
    latency_s: float
    #: Payload airtime over which the delivered bits were carried
    payload_airtime_s: float
    ber: float | None = None

    @property
    def per(self) -> float:
        return 1 - self.delivered / self.n_devices

    @property
    def useful_bits(self) -> float:
        return self.delivered * PAYLOAD_BITS

    @property
    def phy_rate_bps(self) -> float:
        return self.useful_bits / self.payload_airtime_s

    @property
    def link_rate_bps(self) -> float:
        return self.useful_bits / self.latency_s


def lora_fixed_round(
    snrs: Sequence[float], cfg: ChirpConfig, rates: Sequence[LoRaRate]
) -> RoundStats:
    """Every device polled in turn at the fixed rate of ``cfg.sf``"""
    floors = {r.sf: r.min_snr_db for r in rates}
    try:
        floor = floors[cfg.sf]
    except KeyError:
        raise ValueError(f"LoRa rate table has no entry for SF{cfg.sf}") from None
    bitrate = rate_model(cfg).lora_bitrate
    per_device = (
        query_airtime(LORA_QUERY_BITS)
        + LORA_PREAMBLE_SYMBOLS * cfg.symbol_duration
        + PAYLOAD_BITS / bitrate
    )
    return RoundStats(
        n_devices=len(snrs),
        delivered=sum(s >= floor for s in snrs),
        latency_s=len(snrs) * per_device,
        payload_airtime_s=len(snrs) * PAYLOAD_BITS / bitrate,
    )


def lora_ideal_round(
    snrs: Sequence[float], cfg: ChirpConfig, rates: Sequence[LoRaRate]
) -> RoundStats:
    """Every device polled in turn at the fastest rate its SNR supports"""
    latency = 0.0
    airtime = 0.0
    delivered = 0
    for snr in snrs:
        rate, ok = pick_rate(snr, rates)
        payload = PAYLOAD_BITS / rate.bitrate
        latency += (
            query_airtime(LORA_QUERY_BITS) + rate.preamble_duration(cfg.bw) + payload
        )
        airtime += payload
        delivered += ok
    return RoundStats(
        n_devices=len(snrs),
        delivered=delivered,
        latency_s=latency,
        payload_airtime_s=airtime,
    )


def netscatter_round_latency(cfg: ChirpConfig, query_bits: int) -> float:
    n_symbols = N_PREAMBLE_UP + N_PREAMBLE_DOWN + PAYLOAD_BITS
    return query_airtime(query_bits, DOWNLINK_RATE) + n_symbols * cfg.symbol_duration


def netscatter_round(
    snrs: Mapping[int, float],
    scheme: Scheme,
    cfg: ChirpConfig,
    skip: int,
    jitter: JitterSpec,
    n_rounds: int,
    seed: int,
    jobs: int,
    blind_start: bool = False,
) -> RoundStats:
    """
    Simulate ``n_rounds`` concurrent uplinks of every device through the
    full receiver.  Devices pick their power level from the query RSSI at
    association and are assigned shifts in order of received strength.
    """
    table0 = assign_cyclic_shift(
        snrs, skip=skip, sf=cfg.sf, n_assoc=0, agg_factor=cfg.agg_factor
    )
    threshold = table0.rssi_threshold()
    levels = {
        d: device_power_adapt(DevicePowerState(), snr, True, threshold).level
        for d, snr in snrs.items()
    }
    received = {d: snr + levels[d] for d, snr in snrs.items()}
    table = assign_cyclic_shift(
        received, skip=skip, sf=cfg.sf, n_assoc=0, agg_factor=cfg.agg_factor
    )
    # Path gains are relative to the strongest device so that none exceeds 0 dB.
    ref = max(snrs.values())
    gains = {d: snr - ref for d, snr in snrs.items()}
    tasks = [
        NetworkTrial(
            cfg=cfg,
            table=table,
            gains_db=gains,
            levels_db=levels,
            snr_db=ref,
            jitter=jitter,
            seed=trial_seed(seed, len(snrs), r),
            blind_start=blind_start,
        )
        for r in range(n_rounds)
    ]
    outcomes = run_trials(network_trial, tasks, jobs)
    n = len(snrs)
    return RoundStats(
        n_devices=n,
        delivered=sum(o.packets_ok for o in outcomes) / n_rounds,
        latency_s=netscatter_round_latency(cfg, scheme.query_bits),
        payload_airtime_s=PAYLOAD_BITS * cfg.symbol_duration,
        ber=sum(o.bit_errors for o in outcomes) / (n_rounds * n * PAYLOAD_BITS),
    )


def device_snrs(
    n: int,
    seed: int,
    snr_map: Mapping[int, float] | None = None,
    snr_range: tuple[float, float] = DEFAULT_SNR_RANGE,
) -> dict[int, float]:
    """SNRs of devices ``0 .. n-1``: the first ``n`` of ``snr_map``, or drawn"""
    if snr_map is not None:
        if len(snr_map) < n:
            raise ValueError(f"SNR map lists {len(snr_map)} devices, need {n}")
        return {d: float(snr_map[d]) for d in sorted(snr_map)[:n]}
    low, high = snr_range
    if high < low:
        raise ValueError(f"Invalid SNR range [{low}, {high}]")
    draws = trial_rng(seed, n).uniform(low, high, size=n)
    return {d: float(s) for d, s in enumerate(draws)}


def _gain(ours: float, theirs: float) -> float:
    return ours / theirs if theirs > 0 else math.nan


def run_network(
    n_devices_list: Iterable[int],
    scheme: Scheme,
    cfg: ChirpConfig,
    snr_map: Mapping[int, float] | None = None,
    seed: int = 0,
    skip: int = DEFAULT_SKIP,
    n_rounds: int = 5,
    jitter: JitterSpec | None = None,
    lora_rates: Sequence[LoRaRate] = DEFAULT_LORA_RATES,
    snr_range: tuple[float, float] = DEFAULT_SNR_RANGE,
    blind_start: bool = False,
    jobs: int = 1,
) -> list[ExperimentRecord]:
    """
    PHY rate, link-layer rate and latency of ``scheme`` for each network
    size, with its gains over both sequential LoRa baselines on the same
    devices.  With ``blind_start`` the NetScatter receiver finds the packet
    start in each capture instead of taking it from the query timing.
    """
    if jitter is None:
        jitter = JitterSpec()
    if n_rounds < 1:
        raise ValueError("At least one round is required")
    records = []
    for n in n_devices_list:
        if n < 1:
            raise ValueError(f"Number of devices must be >= 1, got {n}")
        # Rejects networks larger than the shift capacity for every scheme.
        assign_cyclic_shift(
            dict.fromkeys(range(n), 0.0),
            skip=skip,
            sf=cfg.sf,
            n_assoc=0,
            agg_factor=cfg.agg_factor,
        )
        snrs = device_snrs(n, seed, snr_map, snr_range)
        log.info("Network of %d devices under %s", n, scheme)
        baseline_fixed = lora_fixed_round(list(snrs.values()), cfg, lora_rates)
        baseline_ideal = lora_ideal_round(list(snrs.values()), cfg, lora_rates)
        if scheme is Scheme.LORA_FIXED:
            stats = baseline_fixed
        elif scheme is Scheme.LORA_IDEAL_RATE:
            stats = baseline_ideal
        else:
            stats = netscatter_round(
                snrs,
                scheme,
                cfg,
                skip,
                jitter,
                n_rounds,
                seed,
                jobs,
                blind_start=blind_start,
            )
        metrics = {
            "phy_rate_bps": stats.phy_rate_bps,
            "link_rate_bps": stats.link_rate_bps,
            "latency_s": stats.latency_s,
            "per": stats.per,
            "link_gain_vs_lora_fixed": _gain(
                stats.link_rate_bps, baseline_fixed.link_rate_bps
            ),
            "latency_gain_vs_lora_fixed": baseline_fixed.latency_s / stats.latency_s,
            "link_gain_vs_lora_ideal_rate": _gain(
                stats.link_rate_bps, baseline_ideal.link_rate_bps
            ),
            "latency_gain_vs_lora_ideal_rate": (
                baseline_ideal.latency_s / stats.latency_s
            ),
        }
        if stats.ber is not None:
            metrics["ber"] = stats.ber
        log.info(
            "%s with %d devices: link rate %.0f bps, latency %.4g s",
            scheme,
            n,
            stats.link_rate_bps,
            stats.latency_s,
        )
        records.append(
            ExperimentRecord(
                experiment="network",
                seed=seed,
                config={
                    **base_config(cfg, skip),
                    "scheme": scheme.value,
                    "n_devices": n,
                    "query_bits": scheme.query_bits,
                    "n_rounds": n_rounds if scheme.is_netscatter else 1,
                    "jitter": str(jitter),
                    "packet_start": "blind" if blind_start else "known",
                },
                metrics=metrics,
            )
        )
    return records
