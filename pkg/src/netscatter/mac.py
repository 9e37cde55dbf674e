"""
Medium access: power-aware cyclic-shift assignment, the access point's query
message and device-side power adaptation
"""

from __future__ import annotations
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field, replace
import logging
import math
import statistics
from .util import bits_to_int, int_to_bits, power_to_db

log = logging.getLogger(__name__)

#: Downlink (access point to device) bit rate in bits per second
DOWNLINK_RATE = 160_000.0

MIN_QUERY_BITS = 32

#: Wire size of a query carrying a full reassignment
REASSIGN_QUERY_BITS = 1760

#: Number of shifts covered by a full reassignment
REASSIGN_SHIFTS = 256

#: Bits needed for the rank of a permutation of ``REASSIGN_SHIFTS`` items
LEHMER_BITS = (math.factorial(REASSIGN_SHIFTS) - 1).bit_length()

#: Query length of a sequential LoRa network, in bits
LORA_QUERY_BITS = 28

#: Device power gain levels in dB, strongest first
POWER_LEVELS = (0.0, -4.0, -10.0)

#: Margin by which a neighbouring power level must be nearer the wanted gain
#: than the current level before the device moves to it, in dB
POWER_HYSTERESIS_DB = 2.5

#: Query RSSI dividing the low- and high-SNR association regions when the
#: network has no recorded strengths yet, in dB
DEFAULT_RSSI_THRESHOLD_DB = 15.0

#: Consecutive out-of-range rounds after which a device re-associates
MAX_CONSECUTIVE_FAILURES = 3

DEFAULT_N_ASSOC = 2


class CapacityError(ValueError):
    """Raised when an assignment would need more shifts than the band holds"""


class QueryDecodeError(ValueError):
    """Raised when a bit sequence is not a well-formed query message"""


@dataclass
class AssignmentTable:
    """
    Which cyclic shift each device transmits on.  Shifts are multiples of
    ``skip``; the shifts in ``assoc_shifts`` are reserved for association
    requests, low-SNR region first.
    """

    skip: int
    n_slots: int
    shift_of_device: dict[int, int] = field(default_factory=dict)
    assoc_shifts: tuple[int, ...] = ()
    #: Recorded signal strength of each device, in dB
    strengths: dict[int, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.skip < 1:
            raise ValueError(f"SKIP must be >= 1, got {self.skip}")
        if self.n_slots < self.skip:
            raise ValueError(f"Band of {self.n_slots} bins is narrower than SKIP")

    @property
    def capacity(self) -> int:
        """Number of shift slots in the band"""
        return self.n_slots // self.skip

    def __len__(self) -> int:
        return len(self.shift_of_device)

    def __contains__(self, device: object) -> bool:
        return device in self.shift_of_device

    def shifts(self) -> set[int]:
        return set(self.shift_of_device.values())

    def monitored_shifts(self) -> set[int]:
        return self.shifts() | set(self.assoc_shifts)

    def device_at(self, shift: int) -> int | None:
        for device, s in self.shift_of_device.items():
            if s == shift:
                return device
        return None

    def slot_of(self, shift: int) -> int:
        if shift % self.skip:
            raise ValueError(f"Shift {shift} is not a multiple of SKIP={self.skip}")
        return shift // self.skip

    def shift_of_slot(self, slot: int) -> int:
        if not 0 <= slot < self.capacity:
            raise ValueError(f"Slot {slot} outside [0, {self.capacity})")
        return slot * self.skip

    def assoc_shift(self, high_snr: bool) -> int:
        if not self.assoc_shifts:
            raise ValueError("No association shifts are reserved")
        return self.assoc_shifts[-1] if high_snr else self.assoc_shifts[0]

    def free_shifts(self) -> list[int]:
        taken = self.monitored_shifts()
        return [
            s for s in range(0, self.capacity * self.skip, self.skip) if s not in taken
        ]

    def rssi_threshold(self) -> float:
        """Query RSSI separating the two association regions"""
        if not self.strengths:
            return DEFAULT_RSSI_THRESHOLD_DB
        return statistics.median(self.strengths.values())

    def admit(self, device: int, snr_db: float) -> int:
        """
        Give ``device`` the free shift whose occupied neighbours are closest
        to it in signal strength, and return that shift
        """
        if device in self.shift_of_device:
            self.strengths[device] = snr_db
            return self.shift_of_device[device]
        free = self.free_shifts()
        if not free:
            raise CapacityError(
                f"All {self.capacity} shift slots are taken; cannot admit device"
                f" {device}"
            )
        snr_at = {s: self.strengths[d] for d, s in self.shift_of_device.items()}

        def mismatch(shift: int) -> tuple[bool, float, int]:
            diffs = [
                abs(snr_at[n] - snr_db)
                for n in (shift - self.skip, shift + self.skip)
                if n in snr_at
            ]
            return (not diffs, max(diffs, default=0.0), shift)

        shift = min(free, key=mismatch)
        self.shift_of_device[device] = shift
        self.strengths[device] = snr_db
        log.debug("Admitted device %d at %.1f dB on shift %d", device, snr_db, shift)
        return shift

    def release(self, device: int) -> None:
        self.shift_of_device.pop(device, None)
        self.strengths.pop(device, None)

    def is_monotone(self) -> bool:
        """True iff shift order matches recorded strength order"""
        order = sorted(self.shift_of_device, key=self.shift_of_device.__getitem__)
        snrs = [self.strengths[d] for d in order if d in self.strengths]
        return all(a <= b for a, b in zip(snrs, snrs[1:]))

    def check(self) -> None:
        """Raise `ValueError` if the table breaks a structural invariant"""
        shifts = list(self.shift_of_device.values())
        if len(set(shifts)) != len(shifts):
            raise ValueError("Two devices share a cyclic shift")
        for s in [*shifts, *self.assoc_shifts]:
            if s % self.skip or not 0 <= s < self.n_slots:
                raise ValueError(f"Shift {s} is not a valid SKIP-aligned shift")
        if set(shifts) & set(self.assoc_shifts):
            raise ValueError("Association shifts overlap communication shifts")


def assign_cyclic_shift(
    strengths: Mapping[int, float],
    skip: int,
    sf: int,
    n_assoc: int = DEFAULT_N_ASSOC,
    agg_factor: int = 1,
) -> AssignmentTable:
    """
    Sort devices by signal strength and hand out shifts ``0, skip, 2*skip,
    ...`` in that order, so that neighbouring shifts belong to devices of
    similar strength.  With ``n_assoc`` reserved shifts, the low-SNR one
    precedes the weakest device and the high-SNR one takes the top slot.
    """
    if n_assoc not in (0, 1, 2):
        raise ValueError(
            f"Number of association shifts must be 0, 1 or 2, got {n_assoc}"
        )
    n_slots = agg_factor * (1 << sf)
    table = AssignmentTable(skip=skip, n_slots=n_slots)
    if (len(strengths) + n_assoc) * skip > n_slots:
        raise CapacityError(
            f"{len(strengths)} devices and {n_assoc} association shifts at"
            f" SKIP={skip} need more than {n_slots} bins"
        )
    first = 1 if n_assoc else 0
    order = sorted(strengths, key=lambda d: (strengths[d], d))
    for i, device in enumerate(order):
        table.shift_of_device[device] = (first + i) * skip
        table.strengths[device] = strengths[device]
    if n_assoc == 1:
        table.assoc_shifts = (0,)
    elif n_assoc == 2:
        table.assoc_shifts = (0, (table.capacity - 1) * skip)
    log.debug(
        "Assigned %d devices at SKIP=%d with association shifts %s",
        len(order),
        skip,
        table.assoc_shifts,
    )
    return table


@dataclass(frozen=True)
class AssociationPayload:
    #: Identifier the joining device sent in its association request
    network_id: int
    #: Assigned shift divided by SKIP
    slot: int

    def __post_init__(self) -> None:
        for name in ("network_id", "slot"):
            if not 0 <= getattr(self, name) < 256:
                raise ValueError(f"{name} must fit in 8 bits")


@dataclass(frozen=True)
class QueryMessage:
    group_id: int = 0
    assoc: AssociationPayload | None = None
    #: New slot order: ``reassignment[i]`` is the slot now held by the
    #: device previously on slot ``i``
    reassignment: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        if not 0 <= self.group_id < 256:
            raise ValueError("group_id must fit in 8 bits")
        if self.reassignment is not None and sorted(self.reassignment) != list(
            range(REASSIGN_SHIFTS)
        ):
            raise ValueError(
                f"Reassignment must be a permutation of {REASSIGN_SHIFTS} slots"
            )

    @property
    def n_bits(self) -> int:
        return MIN_QUERY_BITS if self.reassignment is None else REASSIGN_QUERY_BITS

    @property
    def airtime(self) -> float:
        return query_airtime(self.n_bits)


def query_airtime(n_bits: int, rate: float = DOWNLINK_RATE) -> float:
    return n_bits / rate


def permutation_rank(perm: Sequence[int]) -> int:
    """Lehmer-code rank of a permutation of ``range(len(perm))``"""
    remaining = list(range(len(perm)))
    rank = 0
    for i, p in enumerate(perm):
        idx = remaining.index(p)
        rank = rank * (len(perm) - i) + idx
        remaining.pop(idx)
    return rank


def permutation_unrank(rank: int, n: int) -> list[int]:
    digits = []
    for base in range(1, n + 1):
        rank, d = divmod(rank, base)
        digits.append(d)
    if rank:
        raise ValueError(f"Rank is too large for a permutation of {n} items")
    remaining = list(range(n))
    return [remaining.pop(d) for d in reversed(digits)]


def encode_query(msg: QueryMessage) -> list[int]:
    """
    Serialise ``msg`` most-significant bit first: group id (8 bits), an
    association flag and, if set, network id and slot (8 bits each), a
    reassignment flag and, if set, the Lehmer rank of the new slot order,
    then zero padding to the message's wire size
    """
    bits = int_to_bits(msg.group_id, 8)
    if msg.assoc is not None:
        bits.append(1)
        bits.extend(int_to_bits(msg.assoc.network_id, 8))
        bits.extend(int_to_bits(msg.assoc.slot, 8))
    else:
        bits.append(0)
    if msg.reassignment is not None:
        bits.append(1)
        bits.extend(int_to_bits(permutation_rank(msg.reassignment), LEHMER_BITS))
    else:
        bits.append(0)
    bits.extend([0] * (msg.n_bits - len(bits)))
    return bits


def decode_query(bits: Sequence[int]) -> QueryMessage:
    if len(bits) not in (MIN_QUERY_BITS, REASSIGN_QUERY_BITS):
        raise QueryDecodeError(
            f"Query must be {MIN_QUERY_BITS} or {REASSIGN_QUERY_BITS} bits long,"
            f" got {len(bits)}"
        )
    if any(b not in (0, 1) for b in bits):
        raise QueryDecodeError("Query contains values other than 0 and 1")
    pos = 0

    def take(n: int) -> int:
        nonlocal pos
        value = bits_to_int(bits[pos : pos + n])
        pos += n
        return value

    group_id = take(8)
    assoc = None
    if take(1):
        assoc = AssociationPayload(network_id=take(8), slot=take(8))
    reassignment = None
    if take(1):
        if len(bits) != REASSIGN_QUERY_BITS:
            raise QueryDecodeError("Reassignment flag set in a short query")
        try:
            reassignment = tuple(permutation_unrank(take(LEHMER_BITS), REASSIGN_SHIFTS))
        except ValueError as e:
            raise QueryDecodeError(str(e)) from None
    elif len(bits) != MIN_QUERY_BITS:
        raise QueryDecodeError("Long query without a reassignment")
    if any(bits[pos:]):
        raise QueryDecodeError("Nonzero padding bits")
    return QueryMessage(group_id=group_id, assoc=assoc, reassignment=reassignment)


@dataclass(frozen=True)
class DevicePowerState:
    level: float = POWER_LEVELS[1]
    #: Query RSSI recorded at association, in dB
    baseline_rssi: float | None = None
    #: Level chosen at association
    baseline_level: float = POWER_LEVELS[1]
    consecutive_failures: int = 0
    #: Whether the device sits out the current round
    skip_transmission: bool = False

    def __post_init__(self) -> None:
        if self.level not in POWER_LEVELS:
            raise ValueError(f"Power level must be one of {POWER_LEVELS}")

    @property
    def needs_reassociation(self) -> bool:
        return self.consecutive_failures >= MAX_CONSECUTIVE_FAILURES


def _neighbours(level: float) -> list[float]:
    i = POWER_LEVELS.index(level)
    return [POWER_LEVELS[j] for j in (i - 1, i + 1) if 0 <= j < len(POWER_LEVELS)]


def device_power_adapt(
    state: DevicePowerState,
    query_rssi: float,
    at_association: bool,
    rssi_threshold: float = DEFAULT_RSSI_THRESHOLD_DB,
    hysteresis: float = POWER_HYSTERESIS_DB,
) -> DevicePowerState:
    """
    At association a device that hears the query weakly starts at full gain
    and any other at the middle level.  Afterwards the gain follows query
    RSSI changes relative to the association baseline one level per query;
    when no level can absorb the change the device skips the round and
    counts a failure.
    """
    if at_association or state.baseline_rssi is None:
        level = POWER_LEVELS[0] if query_rssi < rssi_threshold else POWER_LEVELS[1]
        return DevicePowerState(
            level=level, baseline_rssi=query_rssi, baseline_level=level
        )
    # Gain that would keep the received power where it was at association
    wanted = state.baseline_level - (query_rssi - state.baseline_rssi)
    # A neighbour must beat the current level by the full margin
    for level in _neighbours(state.level):
        if abs(wanted - level) + hysteresis < abs(wanted - state.level):
            return replace(
                state, level=level, consecutive_failures=0, skip_transmission=False
            )
    if wanted > POWER_LEVELS[0] + hysteresis or wanted < POWER_LEVELS[-1] - hysteresis:
        failures = state.consecutive_failures + 1
        log.debug(
            "Query RSSI %.1f dB is out of power-control range; skipping round"
            " (%d consecutive)",
            query_rssi,
            failures,
        )
        return replace(state, consecutive_failures=failures, skip_transmission=True)
    return replace(state, consecutive_failures=0, skip_transmission=False)


def backscatter_power_gain(gamma0: complex, gamma1: complex) -> float:
    """Transmit power gain ``|Γ0 - Γ1|² / 4`` of a two-state switch, in dB"""
    if abs(gamma0) > 1 or abs(gamma1) > 1:
        raise ValueError("Reflection coefficients must have magnitude <= 1")
    return power_to_db(abs(gamma0 - gamma1) ** 2 / 4)
