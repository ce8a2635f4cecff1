"""
Generic behaviors for probing channels
"""

import struct
from typing import Optional

from iotstage.services.engine import SimTime
from iotstage.services.node_runtime import Behavior, NodeContext, behavior

_PROBE_HEADER = struct.Struct(">Q")


@behavior("echo")
class Echo(Behavior):
    """Reflects every message to its sender, keeping the origin stamp."""

    def on_message(self, ctx: NodeContext, src: str, payload: bytes, origin_stamp):
        ctx.send(src, payload, origin_stamp)


@behavior("probe_sender")
class ProbeSender(Behavior):
    """
    Sends a numbered probe to ``target`` every ``period_ms``

    Params:
        target: receiving node id
        period_ms: probe spacing (default 100)
        size: payload bytes, at least 8 (default 16)
        count: stop after this many probes (default unlimited)
        tag: probe tag; echoed replies are recorded as ``<tag>_rtt``
    """

    TIMER = "probe"

    def __init__(self, params):
        super().__init__(params)
        self.target = self.params["target"]
        self.period = self.duration_param("period", 100)
        self.size = max(int(self.params.get("size", "16")), _PROBE_HEADER.size)
        count = self.params.get("count")
        self.count: Optional[int] = None if count is None else int(count)
        self.tag = self.params.get("tag", "probe")
        self.sent = 0

    def on_start(self, ctx: NodeContext):
        ctx.set_timer(self.period, self.TIMER)

    def on_timer(self, ctx: NodeContext, timer_id: str):
        if self.count is not None and self.sent >= self.count:
            return
        payload = _PROBE_HEADER.pack(self.sent).ljust(self.size, b"\x00")
        ctx.send(self.target, payload, origin_stamp=ctx.now())
        self.sent += 1
        ctx.set_timer(self.period, self.TIMER)

    def on_message(self, ctx: NodeContext, src: str, payload: bytes, origin_stamp):
        if src == self.target and origin_stamp is not None:
            ctx.record_probe(f"{self.tag}_rtt", origin_stamp)


@behavior("probe_sink")
class ProbeSink(Behavior):
    """Records the one-way latency of every stamped message under ``tag``."""

    def on_message(self, ctx: NodeContext, src: str, payload: bytes, origin_stamp: Optional[SimTime]):
        if origin_stamp is not None:
            ctx.record_probe(self.params.get("tag", "probe"), origin_stamp)
