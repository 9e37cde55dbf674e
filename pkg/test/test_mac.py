from __future__ import annotations
import math
import pytest
from netscatter.mac import (
    LEHMER_BITS,
    MAX_CONSECUTIVE_FAILURES,
    MIN_QUERY_BITS,
    POWER_LEVELS,
    REASSIGN_QUERY_BITS,
    AssignmentTable,
    AssociationPayload,
    CapacityError,
    DevicePowerState,
    QueryDecodeError,
    QueryMessage,
    assign_cyclic_shift,
    backscatter_power_gain,
    decode_query,
    device_power_adapt,
    encode_query,
    permutation_rank,
    permutation_unrank,
    query_airtime,
)
from netscatter.util import int_to_bits


def test_assignment_sorted_by_strength() -> None:
    strengths = {10: 3.0, 11: -2.0, 12: 15.0, 13: 7.5}
    table = assign_cyclic_shift(strengths, skip=2, sf=9, n_assoc=0)
    assert table.shift_of_device == {11: 0, 10: 2, 13: 4, 12: 6}
    assert table.is_monotone()
    table.check()


def test_assignment_reserves_association_shifts() -> None:
    table = assign_cyclic_shift({1: 5.0, 2: 0.0}, skip=2, sf=9)
    assert table.assoc_shifts == (0, 510)
    assert table.shift_of_device == {2: 2, 1: 4}
    assert table.assoc_shift(high_snr=False) == 0
    assert table.assoc_shift(high_snr=True) == 510
    assert table.monitored_shifts() == {0, 2, 4, 510}
    table.check()


def test_full_network_fits_without_association_shifts() -> None:
    strengths = {d: float(d % 30) for d in range(256)}
    table = assign_cyclic_shift(strengths, skip=2, sf=9, n_assoc=0)
    assert len(table) == 256
    assert table.shifts() == set(range(0, 512, 2))
    assert table.is_monotone()


def test_capacity_exceeded() -> None:
    strengths = {d: 0.0 for d in range(256)}
    with pytest.raises(CapacityError):
        assign_cyclic_shift(strengths, skip=2, sf=9)
    with pytest.raises(CapacityError):
        assign_cyclic_shift({d: 0.0 for d in range(257)}, skip=2, sf=9, n_assoc=0)


def test_assignment_with_aggregation() -> None:
    strengths = {d: 0.0 for d in range(300)}
    table = assign_cyclic_shift(strengths, skip=2, sf=9, n_assoc=0, agg_factor=2)
    assert table.capacity == 512
    assert max(table.shifts()) == 598


def test_assignment_ties_broken_by_device() -> None:
    table = assign_cyclic_shift({5: 1.0, 3: 1.0, 4: 1.0}, skip=4, sf=7, n_assoc=0)
    assert table.shift_of_device == {3: 0, 4: 4, 5: 8}


def test_admit_picks_similar_neighbours() -> None:
    table = assign_cyclic_shift({1: 0.0, 2: 10.0, 3: 20.0}, skip=2, sf=6)
    assert table.shift_of_device == {1: 2, 2: 4, 3: 6}
    shift = table.admit(4, 21.0)
    assert shift == 8
    assert table.strengths[4] == 21.0
    table.check()
    assert table.admit(4, 22.0) == 8
    table.release(4)
    assert 4 not in table
    assert 8 in table.free_shifts()


def test_admit_full_table() -> None:
    table = assign_cyclic_shift({d: 0.0 for d in range(30)}, skip=2, sf=6)
    with pytest.raises(CapacityError):
        table.admit(99, 1.0)


def test_table_validation() -> None:
    with pytest.raises(ValueError):
        AssignmentTable(skip=0, n_slots=512)
    with pytest.raises(ValueError):
        AssignmentTable(skip=2, n_slots=512, shift_of_device={1: 4, 2: 4}).check()
    with pytest.raises(ValueError):
        AssignmentTable(skip=2, n_slots=512, shift_of_device={1: 3}).check()
    with pytest.raises(ValueError):
        AssignmentTable(
            skip=2, n_slots=512, shift_of_device={1: 0}, assoc_shifts=(0,)
        ).check()
    table = AssignmentTable(skip=2, n_slots=512)
    with pytest.raises(ValueError):
        table.slot_of(3)
    with pytest.raises(ValueError):
        table.shift_of_slot(256)
    with pytest.raises(ValueError):
        table.assoc_shift(high_snr=True)


def test_rssi_threshold_is_median() -> None:
    table = assign_cyclic_shift({1: 3.0, 2: 9.0, 3: 20.0}, skip=2, sf=9)
    assert table.rssi_threshold() == 9.0


def test_minimal_query_layout() -> None:
    bits = encode_query(QueryMessage(group_id=0xA5))
    assert len(bits) == MIN_QUERY_BITS
    assert bits[:8] == [1, 0, 1, 0, 0, 1, 0, 1]
    assert bits[8:] == [0] * 24


def test_association_query_layout() -> None:
    msg = QueryMessage(group_id=1, assoc=AssociationPayload(network_id=0x3C, slot=200))
    bits = encode_query(msg)
    assert len(bits) == 32
    assert bits[8] == 1
    assert bits[9:17] == int_to_bits(0x3C, 8)
    assert bits[17:25] == int_to_bits(200, 8)
    assert bits[25] == 0
    assert decode_query(bits) == msg
    assert msg.airtime == pytest.approx(0.2e-3)


def test_reassignment_query() -> None:
    perm = tuple(reversed(range(256)))
    msg = QueryMessage(group_id=7, reassignment=perm)
    bits = encode_query(msg)
    assert len(bits) == REASSIGN_QUERY_BITS
    assert decode_query(bits) == msg
    assert msg.airtime == pytest.approx(11e-3)
    both = QueryMessage(
        group_id=7, assoc=AssociationPayload(network_id=1, slot=2), reassignment=perm
    )
    assert decode_query(encode_query(both)) == both


def test_lehmer_rank_width() -> None:
    assert LEHMER_BITS == 1684
    assert (math.factorial(256) - 1).bit_length() <= LEHMER_BITS
    assert 8 + 1 + 16 + 1 + LEHMER_BITS <= REASSIGN_QUERY_BITS


@pytest.mark.parametrize(
    "perm,rank",
    [((0, 1, 2), 0), ((0, 2, 1), 1), ((1, 0, 2), 2), ((2, 1, 0), 5)],
)
def test_permutation_rank(perm: tuple[int, ...], rank: int) -> None:
    assert permutation_rank(perm) == rank
    assert permutation_unrank(rank, 3) == list(perm)


def test_permutation_unrank_too_large() -> None:
    with pytest.raises(ValueError):
        permutation_unrank(6, 3)


@pytest.mark.parametrize(
    "bits",
    [
        [0] * 31,
        [0] * 33,
        [0] * 1000,
        [2] + [0] * 31,
        # Padding must be zero
        [0] * 31 + [1],
        # Reassignment flag in a short query
        [0] * 8 + [0, 1] + [0] * 22,
        # Long query without reassignment
        [0] * REASSIGN_QUERY_BITS,
        # Rank of 256! is out of range
        [0] * 8
        + [0, 1]
        + int_to_bits(math.factorial(256), LEHMER_BITS)
        + [0] * (REASSIGN_QUERY_BITS - 10 - LEHMER_BITS),
    ],
)
def test_decode_query_malformed(bits: list[int]) -> None:
    with pytest.raises(QueryDecodeError):
        decode_query(bits)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"group_id": 256},
        {"reassignment": (0, 1, 2)},
        {"reassignment": (0,) * 256},
    ],
)
def test_query_message_invalid(kwargs: dict) -> None:
    with pytest.raises(ValueError):
        QueryMessage(**kwargs)


def test_association_payload_invalid() -> None:
    with pytest.raises(ValueError):
        AssociationPayload(network_id=256, slot=0)


def test_query_airtime() -> None:
    assert query_airtime(32) == pytest.approx(0.2e-3)
    assert query_airtime(28) == pytest.approx(0.175e-3)


@pytest.mark.parametrize("rssi,level", [(10.0, 0.0), (15.0, -4.0), (25.0, -4.0)])
def test_power_at_association(rssi: float, level: float) -> None:
    state = device_power_adapt(DevicePowerState(), rssi, at_association=True)
    assert state.level == level
    assert state.baseline_rssi == rssi
    assert state.baseline_level == level
    assert not state.skip_transmission


def test_power_steps_one_level_per_query() -> None:
    state = device_power_adapt(DevicePowerState(), 20.0, at_association=True)
    assert state.level == -4.0
    # Query got 10 dB stronger: the device wants -14 dB but steps to -10
    state = device_power_adapt(state, 30.0, at_association=False)
    assert state.level == -10.0
    # Back to the association RSSI: step up one level at a time
    state = device_power_adapt(state, 20.0, at_association=False)
    assert state.level == -4.0
    state = device_power_adapt(state, 20.0, at_association=False)
    assert state.level == -4.0


def test_power_hysteresis() -> None:
    state = device_power_adapt(DevicePowerState(), 20.0, at_association=True)
    state = device_power_adapt(state, 22.0, at_association=False)
    assert state.level == -4.0
    assert not state.skip_transmission
    state = device_power_adapt(state, 17.0, at_association=False)
    assert state.level == -4.0
    state = device_power_adapt(state, 16.0, at_association=False)
    assert state.level == 0.0


@pytest.mark.parametrize("start", [-4.0, -10.0])
def test_power_settles_between_levels(start: float) -> None:
    # Wanted gain -7 dB lies between the -4 and -10 dB levels
    state = DevicePowerState(level=start, baseline_rssi=20.0, baseline_level=-4.0)
    levels = []
    for _ in range(6):
        state = device_power_adapt(state, 23.0, at_association=False)
        levels.append(state.level)
        assert not state.skip_transmission
    assert levels == [start] * 6


def test_power_out_of_range_leads_to_reassociation() -> None:
    state = device_power_adapt(DevicePowerState(), 10.0, at_association=True)
    assert state.level == 0.0
    for i in range(MAX_CONSECUTIVE_FAILURES):
        assert not state.needs_reassociation
        # Query 6 dB weaker than at association: no level can make up for it
        state = device_power_adapt(state, 4.0, at_association=False)
        assert state.skip_transmission
        assert state.consecutive_failures == i + 1
    assert state.needs_reassociation
    state = device_power_adapt(state, 10.0, at_association=False)
    assert state.consecutive_failures == 0
    assert not state.skip_transmission


def test_power_state_invalid_level() -> None:
    with pytest.raises(ValueError):
        DevicePowerState(level=-3.0)
    assert POWER_LEVELS == (0.0, -4.0, -10.0)


@pytest.mark.parametrize(
    "g0,g1,gain",
    [(1, -1, 0.0), (1, 0, -6.0206), (0.5, -0.5, -6.0206), (1j, -1j, 0.0)],
)
def test_backscatter_power_gain(g0: complex, g1: complex, gain: float) -> None:
    assert backscatter_power_gain(g0, g1) == pytest.approx(gain, abs=1e-3)


def test_backscatter_gain_identical_states() -> None:
    assert backscatter_power_gain(0.3, 0.3) == -math.inf
    with pytest.raises(ValueError):
        backscatter_power_gain(1.5, 0)
