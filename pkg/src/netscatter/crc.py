"""CRC-8 (polynomial 0x07, zero initial value) over bit sequences, MSB first"""

from __future__ import annotations
from collections.abc import Sequence

CRC8_POLY = 0x07
CRC8_WIDTH = 8


def crc8(bits: Sequence[int], poly: int = CRC8_POLY, init: int = 0) -> int:
    state = init & 0xFF
    for b in bits:
        feedback = ((state >> 7) ^ b) & 1
        state = (state << 1) & 0xFF
        if feedback:
            state ^= poly
    return state


def crc8_bits(bits: Sequence[int]) -> list[int]:
    value = crc8(bits)
    return [(value >> i) & 1 for i in reversed(range(CRC8_WIDTH))]


def append_crc(bits: Sequence[int]) -> list[int]:
    return [*bits, *crc8_bits(bits)]


def check_crc(bits: Sequence[int]) -> bool:
    """True iff the trailing eight bits are the CRC of the bits before them"""
    if len(bits) < CRC8_WIDTH:
        return False
    # The register of a message followed by its own checksum is zero.
    return crc8(bits) == 0
