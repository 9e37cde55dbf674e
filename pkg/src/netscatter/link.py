"""Rendering of one concurrent uplink round as seen by the access point"""

from __future__ import annotations
from collections.abc import Sequence
from dataclasses import dataclass, field, replace
import logging
import numpy as np
from .channel import (
    ChannelConfig,
    DeviceImpairments,
    RealizedOffsets,
    add_awgn,
    impair,
    superpose,
)
from .css import ChirpConfig, IqBuffer
from .mac import POWER_LEVELS
from .phy import PacketFrame, build_packet

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DeviceProfile:
    device_id: int
    cyclic_shift: int
    #: Device transmit gain level in dB
    power_level_db: float = POWER_LEVELS[0]
    impairments: DeviceImpairments = field(default_factory=DeviceImpairments)

    def __post_init__(self) -> None:
        if self.power_level_db not in POWER_LEVELS:
            raise ValueError(f"Power level must be one of {POWER_LEVELS}")

    @property
    def rx_gain_db(self) -> float:
        """Level at which the access point receives this device"""
        return self.power_level_db + self.impairments.power_gain_db


@dataclass(frozen=True, eq=False)
class Uplink:
    capture: IqBuffer
    #: Sample at which every packet nominally starts
    start: int
    noise_power: float
    offsets: dict[int, RealizedOffsets]


def render_uplink(
    devices: Sequence[DeviceProfile],
    payloads: Sequence[Sequence[int]],
    cfg: ChirpConfig,
    channel: ChannelConfig,
    lead_in: int | None = None,
    tail: int | None = None,
    noise: bool = True,
) -> Uplink:
    """
    Build every device's packet, impair it, add them up at a common nominal
    start ``lead_in`` samples into the capture and add receiver noise.  All
    randomness comes from ``channel.seed``.
    """
    if len(devices) != len(payloads):
        raise ValueError("Need exactly one payload per device")
    if lead_in is None:
        lead_in = cfg.symbol_len
    if tail is None:
        tail = cfg.symbol_len
    rng = np.random.default_rng(channel.seed)
    n_bits = len(payloads[0]) if payloads else 0
    length = lead_in + PacketFrame(0, (0,) * n_bits).n_samples(cfg) + tail
    parts: list[tuple[IqBuffer, int]] = []
    offsets = {}
    for dev, bits in zip(devices, payloads):
        if len(bits) != n_bits:
            raise ValueError("All payloads must have the same length")
        packet = build_packet(PacketFrame(dev.cyclic_shift, tuple(bits)), cfg)
        placed = np.zeros(length, dtype=np.complex128)
        placed[lead_in : lead_in + len(packet)] = packet.samples
        # Backscatter reflections arrive with an arbitrary carrier phase.
        placed *= np.exp(2j * np.pi * rng.random())
        impairments = dev.impairments
        if dev.power_level_db:
            impairments = replace(impairments, power_gain_db=dev.rx_gain_db)
        out, realized = impair(
            IqBuffer(placed, cfg.sample_rate), impairments, cfg, rng, channel.carrier_hz
        )
        parts.append((out, 0))
        offsets[dev.device_id] = realized
    if parts:
        capture = superpose(parts)
    else:
        capture = IqBuffer.zeros(length, cfg.sample_rate)
    noise_power = channel.noise_power if noise else 0.0
    if noise:
        capture = add_awgn(capture, channel.snr_db, int(rng.integers(2**63)))
    log.debug(
        "Rendered uplink of %d devices over %d samples (noise power %.3g)",
        len(devices),
        length,
        noise_power,
    )
    return Uplink(
        capture=capture,
        start=lead_in,
        noise_power=noise_power,
        offsets=offsets,
    )
