"""
Network model on top of the discrete-event engine

Wired point-to-point links plus one range-gated wireless channel whose
connectivity follows the position snapshot refreshed every window.
"""

import itertools
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, FrozenSet, List, Mapping, Optional, Tuple, Union

from iotstage.models.scenario import (
    ALL_CHANNELS,
    NS_PER_S,
    WIRELESS,
    LinkSpec,
    Position,
    Scenario,
    WirelessSpec,
    parse_channel_selector,
)
from iotstage.services.engine import Engine, EventKind, SimEvent, SimTime
from iotstage.utils.exceptions import (
    IncompleteSnapshotError,
    UnknownNodeError,
    UnknownTargetError,
)
from iotstage.utils.metrics import track_packet

logger = logging.getLogger(__name__)

BROADCAST = "*"
HEADER_OVERHEAD = 28
MIN_DELAY_NS = 1_000

ChannelSpec = Union[WirelessSpec, LinkSpec]


@dataclass(frozen=True)
class Packet:
    """Application message in flight"""

    id: int
    src: str
    dst: str
    payload: bytes
    size: int
    sent_at: SimTime
    origin_stamp: Optional[SimTime] = None


@dataclass
class CorruptionWindow:
    probability: float
    until: SimTime


@dataclass
class ChannelState:
    """Mutable, fault-controlled state of one channel"""

    selector: str
    spec: ChannelSpec
    enabled: bool = True
    partition: Optional[Tuple[FrozenSet[str], ...]] = None
    corruption: Optional[CorruptionWindow] = None

    def partitioned(self, a: str, b: str) -> bool:
        """True when a and b sit in different partition groups.

        Nodes listed in no group form one residual group.
        """
        if not self.partition:
            return False
        return self._group_of(a) != self._group_of(b)

    def _group_of(self, node_id: str) -> int:
        for index, group in enumerate(self.partition):
            if node_id in group:
                return index
        return -1


@dataclass(frozen=True)
class PositionSnapshot:
    """Node positions valid for one co-simulation window"""

    version: int
    positions: Mapping[str, Position] = field(default_factory=dict)


@dataclass(frozen=True)
class Delivery:
    packet: Packet
    receiver: str
    channel: ChannelState


def in_range(a: Position, b: Position, range_m: float) -> bool:
    """Unit-disk connectivity, boundary inclusive."""
    return math.hypot(a[0] - b[0], a[1] - b[1]) <= range_m


def transmission_delay(size: int, bandwidth: float) -> int:
    """Serialization time of size bytes, in ns."""
    return int(round(size * 8 * NS_PER_S / bandwidth))


def delivery_delay(spec: ChannelSpec, size: int, rng: Engine) -> int:
    """
    One-way delay of a packet over a channel

    latency + transmission + Uniform[0, jitter_max] jitter, floored at 1 us.
    No random draw is consumed when jitter_max is 0.
    """
    delay = spec.latency + transmission_delay(size, spec.bandwidth)
    if spec.jitter_max > 0:
        delay += int(round(rng.next_random("jitter") * spec.jitter_max))
    return max(delay, MIN_DELAY_NS)


class Network:
    """Channels, connectivity and packet routing for one run"""

    def __init__(self, engine: Engine, scenario: Scenario):
        """
        Initialize the network

        Args:
            engine: Engine that owns the clock and the random stream
            scenario: Validated scenario supplying channels and nodes
        """
        self.engine = engine
        self.node_ids = frozenset(n.id for n in scenario.nodes)
        self.wireless: Optional[ChannelState] = (
            ChannelState(WIRELESS, scenario.wireless) if scenario.wireless else None
        )
        self.links: Dict[FrozenSet[str], ChannelState] = {
            link.key: ChannelState(link.selector, link) for link in scenario.links
        }
        self.wireless_nodes: Tuple[str, ...] = (
            tuple(sorted(self.node_ids)) if self.wireless else ()
        )
        self.snapshot = PositionSnapshot(version=-1)
        self.deliver_hook: Callable[[Packet, str], None] = self.record_delivery

        self._packet_ids = itertools.count(1)
        engine.on(EventKind.PACKET_DELIVERY, self._on_delivery)

    def channels(self, selector: str) -> List[ChannelState]:
        """Resolve a channel selector to channel states."""
        try:
            kind, key = parse_channel_selector(selector)
        except ValueError as e:
            raise UnknownTargetError(str(e)) from e
        if kind == ALL_CHANNELS:
            found = ([self.wireless] if self.wireless else []) + [
                self.links[k] for k in sorted(self.links, key=sorted)
            ]
        elif kind == WIRELESS:
            found = [self.wireless] if self.wireless else []
        else:
            found = [self.links[key]] if key in self.links else []
        if not found:
            raise UnknownTargetError(f"no channel {selector!r}")
        return found

    def refresh_connectivity(self, snapshot: PositionSnapshot) -> None:
        """
        Replace the snapshot used by subsequent sends

        Deliveries already scheduled are not revoked.

        Raises:
            IncompleteSnapshotError: a wireless node has no position
        """
        missing = [n for n in self.wireless_nodes if n not in snapshot.positions]
        if missing:
            raise IncompleteSnapshotError(
                f"snapshot {snapshot.version} misses {', '.join(missing)}",
                payload={"missing": missing},
            )
        self.snapshot = snapshot

    def receivers(self, src: str, dst: str) -> List[Tuple[str, ChannelState]]:
        """Eligible receivers of a send, ascending by node id."""
        if dst != BROADCAST:
            if dst == src:
                return []
            link = self.links.get(frozenset((src, dst)))
            if link is not None:
                return [(dst, link)]
            if self._wireless_reachable(src, dst):
                return [(dst, self.wireless)]
            return []

        if self.wireless is None or src not in self.snapshot.positions:
            return []
        origin = self.snapshot.positions[src]
        radius = self.wireless.spec.range
        return [
            (node_id, self.wireless)
            for node_id in self.wireless_nodes
            if node_id != src and in_range(origin, self.snapshot.positions[node_id], radius)
        ]

    def send(
        self,
        src: str,
        dst: str,
        payload: bytes,
        origin_stamp: Optional[SimTime] = None,
    ) -> List[SimEvent]:
        """
        Send a datagram at the current clock

        Args:
            src: Sending node
            dst: Receiving node or BROADCAST
            payload: Opaque application bytes
            origin_stamp: End-to-end stamp carried for latency probes

        Returns:
            The scheduled PacketDelivery events

        Raises:
            UnknownNodeError: src or dst is not a scenario node
        """
        if src not in self.node_ids:
            raise UnknownNodeError(f"unknown sender {src!r}")
        if dst != BROADCAST and dst not in self.node_ids:
            raise UnknownNodeError(f"unknown receiver {dst!r}")

        engine = self.engine
        payload = bytes(payload)
        packet = Packet(
            id=next(self._packet_ids),
            src=src,
            dst=dst,
            payload=payload,
            size=len(payload) + HEADER_OVERHEAD,
            sent_at=engine.now,
            origin_stamp=origin_stamp,
        )
        targets = self.receivers(src, dst)
        engine.record(
            "SEND",
            src,
            packet_id=packet.id,
            src=src,
            dst=dst,
            size_bytes=packet.size,
            receivers=len(targets),
            snapshot=self.snapshot.version,
        )
        track_packet("sent")

        scheduled = []
        for receiver, channel in targets:
            reason = self._drop_reason(channel, src, receiver)
            if reason is not None:
                engine.record(
                    reason,
                    receiver,
                    packet_id=packet.id,
                    src=src,
                    dst=dst,
                    size_bytes=packet.size,
                )
                track_packet(reason)
                continue
            delay = delivery_delay(channel.spec, packet.size, engine)
            scheduled.append(
                engine.schedule(
                    SimEvent(
                        engine.now + delay,
                        EventKind.PACKET_DELIVERY,
                        Delivery(packet, receiver, channel),
                    )
                )
            )
        return scheduled

    def record_delivery(self, packet: Packet, receiver: str) -> None:
        self.engine.record(
            "DELIVERY",
            receiver,
            packet_id=packet.id,
            src=packet.src,
            dst=packet.dst,
            size_bytes=packet.size,
            latency_ns=self.engine.now - packet.sent_at,
        )
        track_packet("delivered")

    def record_drop(self, reason: str, packet: Packet, receiver: str) -> None:
        self.engine.record(
            reason,
            receiver,
            packet_id=packet.id,
            src=packet.src,
            dst=packet.dst,
            size_bytes=packet.size,
        )
        track_packet(reason)

    def _drop_reason(self, channel: ChannelState, src: str, receiver: str) -> Optional[str]:
        if not channel.enabled:
            return "DROP_LINKDOWN"
        if channel.partitioned(src, receiver):
            return "DROP_PARTITION"
        loss = channel.spec.loss
        if loss >= 1.0:
            return "DROP_LOSS"
        if loss > 0.0 and self.engine.next_random("loss") < loss:
            return "DROP_LOSS"
        return None

    def _wireless_reachable(self, a: str, b: str) -> bool:
        if self.wireless is None:
            return False
        positions = self.snapshot.positions
        if a not in positions or b not in positions:
            return False
        return in_range(positions[a], positions[b], self.wireless.spec.range)

    def _on_delivery(self, event: SimEvent) -> None:
        delivery: Delivery = event.payload
        packet = self._maybe_corrupt(delivery)
        self.deliver_hook(packet, delivery.receiver)

    def _maybe_corrupt(self, delivery: Delivery) -> Packet:
        packet = delivery.packet
        window = delivery.channel.corruption
        if window is None or self.engine.now >= window.until or not packet.payload:
            return packet
        if self.engine.next_random("corrupt") >= window.probability:
            return packet
        index = self.engine.next_index(len(packet.payload), "corrupt_byte")
        payload = bytearray(packet.payload)
        payload[index] ^= 0xFF
        self.engine.record(
            "CORRUPT", delivery.receiver, packet_id=packet.id, byte_index=index
        )
        return replace(packet, payload=bytes(payload))
