"""
Level-crossing V2X behaviors

A train announces its approach to the crossing while inside the crossing's
vicinity; the crossing relays STOP to every car in range, and GO once the
train reports it has passed.

Wire format: 1-byte message type, 1-byte sender length, UTF-8 sender id.
The end-to-end origin stamp travels in the packet, not in the payload.
"""

import logging
import math
from dataclasses import dataclass
from enum import IntEnum
from typing import Mapping, Tuple

from iotstage.models.scenario import Position
from iotstage.services.mobility import CommandKind, EntityCommand
from iotstage.services.node_runtime import Behavior, NodeContext, behavior

logger = logging.getLogger(__name__)

SYSTEM_LATENCY = "system_latency"


class MessageType(IntEnum):
    APPROACH = 0x01
    STOP = 0x02
    GO = 0x03
    PASSED = 0x04


def encode(kind: MessageType, sender: str) -> bytes:
    raw = sender.encode("utf-8")
    if len(raw) > 255:
        raise ValueError("sender id longer than 255 bytes")
    return bytes((int(kind), len(raw))) + raw


def decode(payload: bytes) -> Tuple[MessageType, str]:
    """
    Parse a level-crossing message

    Raises:
        ValueError: truncated payload or unknown type byte
    """
    if len(payload) < 2:
        raise ValueError("message shorter than its header")
    kind = MessageType(payload[0])
    length = payload[1]
    if len(payload) < 2 + length:
        raise ValueError("sender id truncated")
    return kind, payload[2 : 2 + length].decode("utf-8")


@dataclass(frozen=True)
class CrossingLayout:
    """Crossing geometry shared by the three behaviors"""

    crossing: Position = Position(1000.0, 0.0)
    vicinity: float = 500.0
    clearance: float = 50.0
    stop_margin: float = 5.0

    def __post_init__(self):
        if self.clearance >= self.vicinity:
            raise ValueError("clearance must be smaller than vicinity")

    @classmethod
    def from_params(cls, params: Mapping[str, str]) -> "CrossingLayout":
        defaults = cls()
        crossing = defaults.crossing
        if "crossing" in params:
            x, y = (float(v) for v in params["crossing"].split(","))
            crossing = Position(x, y)
        return cls(
            crossing=crossing,
            vicinity=float(params.get("vicinity", defaults.vicinity)),
            clearance=float(params.get("clearance", defaults.clearance)),
            stop_margin=float(params.get("stop_margin", defaults.stop_margin)),
        )

    def distance(self, position: Position) -> float:
        return math.hypot(position[0] - self.crossing[0], position[1] - self.crossing[1])


@behavior("train")
class Train(Behavior):
    """
    Announces APPROACH every period while within the vicinity

    Once the train has come within ``clearance`` of the crossing and then
    left that radius again, it broadcasts PASSED exactly once and stops
    announcing.
    """

    TIMER = "announce"

    def __init__(self, params):
        super().__init__(params)
        self.layout = CrossingLayout.from_params(self.params)
        self.period = self.duration_param("announce_period", 100)
        self.reached = False
        self.passed = False

    def on_start(self, ctx: NodeContext):
        ctx.set_timer(self.period, self.TIMER)

    def on_timer(self, ctx: NodeContext, timer_id: str):
        if self.passed:
            return
        distance = self.layout.distance(ctx.my_position())
        if distance <= self.layout.clearance:
            self.reached = True
        elif self.reached:
            self.passed = True
            ctx.broadcast(encode(MessageType.PASSED, ctx.node_id), origin_stamp=ctx.now())
            return
        if distance <= self.layout.vicinity:
            ctx.broadcast(encode(MessageType.APPROACH, ctx.node_id), origin_stamp=ctx.now())
        ctx.set_timer(self.period, self.TIMER)


@behavior("crossing")
class Crossing(Behavior):
    """Forwards every APPROACH as STOP and every PASSED as GO."""

    def on_message(self, ctx: NodeContext, src: str, payload: bytes, origin_stamp):
        kind, _ = decode(payload)
        if kind == MessageType.APPROACH:
            ctx.broadcast(encode(MessageType.STOP, ctx.node_id), origin_stamp)
        elif kind == MessageType.PASSED:
            ctx.broadcast(encode(MessageType.GO, ctx.node_id), origin_stamp)


@behavior("car")
class Car(Behavior):
    """
    Stops its entity on STOP and resumes it on GO

    Every STOP is a latency sample, tagged ``system_latency`` unless the
    ``tag`` param says otherwise.
    """

    def __init__(self, params):
        super().__init__(params)
        self.tag = self.params.get("tag", SYSTEM_LATENCY)
        self.stopped = False

    def on_message(self, ctx: NodeContext, src: str, payload: bytes, origin_stamp):
        kind, _ = decode(payload)
        if kind == MessageType.STOP:
            if not self.stopped:
                self.stopped = True
                self._command(ctx, CommandKind.STOP)
            if origin_stamp is not None:
                ctx.record_probe(self.tag, origin_stamp)
        elif kind == MessageType.GO and self.stopped:
            self.stopped = False
            self._command(ctx, CommandKind.RESUME)

    def _command(self, ctx: NodeContext, kind: CommandKind):
        if ctx.entity_id is None:
            logger.warning("Car node has no entity", extra={"node": ctx.node_id})
            return
        ctx.command_entity(EntityCommand(ctx.entity_id, kind, ctx.now()))
