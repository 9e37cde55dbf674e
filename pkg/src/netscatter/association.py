"""
Network association, one query round at a time

Each round the access point broadcasts a query.  Associated devices answer
with data on their shifts; a joining device sends an association request on
one of the reserved shifts, chosen by how strongly it hears the query.  The
access point measures the request, reserves a shift and announces it in the
next query, addressed by the joiner's network id; the joiner acknowledges on
the announced shift and the access point commits the assignment.  An
assignment whose acknowledgement is lost is announced again.
"""

from __future__ import annotations
from collections import Counter
from collections.abc import Mapping, Sequence
import copy
from dataclasses import dataclass, field, replace
from enum import Enum
import logging
import numpy as np
from .mac import AssignmentTable, AssociationPayload, QueryMessage

log = logging.getLogger(__name__)

#: Largest backoff exponent used by slotted Aloha
MAX_BACKOFF_EXPONENT = 6


class JoinPhase(Enum):
    UNASSOCIATED = "unassociated"
    REQUESTED = "requested"
    ASSOCIATED = "associated"


@dataclass(frozen=True)
class JoinerState:
    device_id: int
    network_id: int
    #: Strength at which the access point receives this device, in dB
    snr_db: float
    #: Strength at which this device receives the query, in dB
    query_rssi_db: float
    phase: JoinPhase = JoinPhase.UNASSOCIATED
    shift: int | None = None
    attempts: int = 0
    backoff: int = 0


@dataclass
class APState:
    table: AssignmentTable
    group_id: int = 0
    #: Reserved slot and device id per network id awaiting acknowledgement
    pending: dict[int, tuple[int, int]] = field(default_factory=dict)
    #: Network ids of requests to announce, oldest first
    announce: list[int] = field(default_factory=list)

    def next_query(self) -> QueryMessage:
        assoc = None
        if self.announce:
            network_id = self.announce[0]
            slot, _ = self.pending[network_id]
            assoc = AssociationPayload(network_id=network_id, slot=slot)
        return QueryMessage(group_id=self.group_id, assoc=assoc)


@dataclass(frozen=True)
class RoundEvents:
    #: Devices that heard this round's query
    query_heard: frozenset[int]
    #: Devices whose uplink transmission this round is lost
    uplink_lost: frozenset[int] = frozenset()


@dataclass
class RoundLog:
    query: QueryMessage
    requests: list[tuple[int, int]] = field(default_factory=list)
    acks: list[tuple[int, int]] = field(default_factory=list)
    data: list[tuple[int, int]] = field(default_factory=list)
    collisions: list[int] = field(default_factory=list)
    committed: list[int] = field(default_factory=list)


def _back_off(
    j: JoinerState, aloha: bool, rng: np.random.Generator | None
) -> JoinerState:
    attempts = j.attempts + 1
    backoff = 0
    if aloha:
        if rng is None:
            raise ValueError("Slotted Aloha needs a random generator")
        exponent = min(attempts, MAX_BACKOFF_EXPONENT)
        backoff = int(rng.integers(0, 1 << exponent))
    return replace(
        j, phase=JoinPhase.UNASSOCIATED, shift=None, attempts=attempts, backoff=backoff
    )


def association_step(
    ap_state: APState,
    joiners: Sequence[JoinerState],
    events: RoundEvents,
    aloha: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[APState, list[JoinerState], RoundLog]:
    """Run one query round and return the next states with what was sent"""
    ap = copy.deepcopy(ap_state)
    query = ap.next_query()
    rlog = RoundLog(query=query)
    threshold = ap.table.rssi_threshold()
    uplink: list[tuple[str, JoinerState, int]] = []
    out: list[JoinerState] = []
    for j in joiners:
        if j.device_id not in events.query_heard:
            out.append(j)
            continue
        if query.assoc is not None and query.assoc.network_id == j.network_id:
            shift = ap.table.shift_of_slot(query.assoc.slot)
            j = replace(j, phase=JoinPhase.ASSOCIATED, shift=shift)
            rlog.acks.append((j.device_id, shift))
            uplink.append(("ack", j, shift))
            out.append(j)
        elif j.phase is JoinPhase.ASSOCIATED:
            assert j.shift is not None
            rlog.data.append((j.device_id, j.shift))
            uplink.append(("data", j, j.shift))
            out.append(j)
        else:
            if j.phase is JoinPhase.REQUESTED:
                # The request went unanswered
                j = _back_off(j, aloha, rng)
            if j.backoff > 0:
                out.append(replace(j, backoff=j.backoff - 1))
                continue
            shift = ap.table.assoc_shift(high_snr=j.query_rssi_db >= threshold)
            j = replace(j, phase=JoinPhase.REQUESTED)
            rlog.requests.append((j.device_id, shift))
            uplink.append(("request", j, shift))
            out.append(j)
    delivered = [u for u in uplink if u[1].device_id not in events.uplink_lost]
    crowding = Counter(shift for kind, _, shift in delivered if kind == "request")
    for kind, j, shift in delivered:
        if kind == "request":
            if crowding[shift] > 1:
                if shift not in rlog.collisions:
                    rlog.collisions.append(shift)
                continue
            if j.network_id not in ap.pending:
                reserved = ap.table.admit(j.device_id, j.snr_db)
                ap.pending[j.network_id] = (ap.table.slot_of(reserved), j.device_id)
            if j.network_id not in ap.announce:
                ap.announce.append(j.network_id)
        elif j.network_id in ap.pending:
            slot, device = ap.pending[j.network_id]
            if device == j.device_id and ap.table.slot_of(shift) == slot:
                del ap.pending[j.network_id]
                if j.network_id in ap.announce:
                    ap.announce.remove(j.network_id)
                rlog.committed.append(j.device_id)
                log.debug("Committed device %d on shift %d", j.device_id, shift)
    # An announcement that drew no acknowledgement is repeated; otherwise
    # move on to the next joiner.
    if query.assoc is not None and query.assoc.network_id in ap.announce:
        log.warning(
            "No acknowledgement for network id %d; repeating assignment",
            query.assoc.network_id,
        )
    if rlog.collisions:
        log.debug("Association requests collided on shifts %s", rlog.collisions)
    return ap, out, rlog


@dataclass
class AssociationReport:
    #: Round in which each device's assignment was committed, or `None`
    rounds_to_associate: dict[int, int | None]
    rounds_run: int
    table: AssignmentTable
    logs: list[RoundLog] = field(default_factory=list)

    @property
    def all_associated(self) -> bool:
        return all(r is not None for r in self.rounds_to_associate.values())


def simulate_association(
    table: AssignmentTable,
    joiners: Mapping[int, tuple[float, float]],
    rng: np.random.Generator,
    query_loss: float = 0.0,
    uplink_loss: float = 0.0,
    aloha: bool = False,
    max_rounds: int = 100,
) -> AssociationReport:
    """
    Drive association rounds until every joiner is committed or
    ``max_rounds`` have passed.  ``joiners`` maps each device id to its
    uplink SNR and query RSSI in dB; queries and uplink transmissions are
    lost independently with the given probabilities.
    """
    if not 0 <= query_loss < 1 or not 0 <= uplink_loss < 1:
        raise ValueError("Loss probabilities must be in [0, 1)")
    if len(joiners) > 256:
        raise ValueError("Network ids are 8 bits; at most 256 joiners")
    ids = rng.permutation(256)[: len(joiners)]
    states = [
        JoinerState(
            device_id=device,
            network_id=int(nid),
            snr_db=snr,
            query_rssi_db=rssi,
        )
        for (device, (snr, rssi)), nid in zip(sorted(joiners.items()), ids)
    ]
    ap = APState(table=table)
    done: dict[int, int | None] = {device: None for device in joiners}
    logs = []
    rounds = 0
    while rounds < max_rounds and any(r is None for r in done.values()):
        rounds += 1
        devices = [s.device_id for s in states]
        missed = rng.random(len(devices)) < query_loss
        heard = frozenset(d for d, m in zip(devices, missed) if not m)
        lost = rng.random(len(devices)) < uplink_loss
        dropped = frozenset(d for d, x in zip(devices, lost) if x)
        ap, states, rlog = association_step(
            ap, states, RoundEvents(query_heard=heard, uplink_lost=dropped), aloha, rng
        )
        for device in rlog.committed:
            done[device] = rounds
        logs.append(rlog)
    missing = [d for d, r in done.items() if r is None]
    if missing:
        log.warning("%d devices not associated after %d rounds", len(missing), rounds)
    return AssociationReport(
        rounds_to_associate=done, rounds_run=rounds, table=ap.table, logs=logs
    )
