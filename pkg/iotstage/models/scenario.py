"""
Scenario data model

A Scenario is the complete declarative description of one staging
environment. All durations are integer nanoseconds; distances are meters.
"""

from enum import Enum
from typing import Any, Dict, FrozenSet, NamedTuple, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, StrictFloat, StrictInt, StrictStr

NS_PER_US = 1_000
NS_PER_MS = 1_000_000
NS_PER_S = 1_000_000_000

DEFAULT_STEP_NS = 100 * NS_PER_MS

WIRELESS = "wireless"
ALL_CHANNELS = "*"
LINK_PREFIX = "link:"


class Position(NamedTuple):
    """Point in the 2-D plane, meters."""

    x: float
    y: float


class RunMode(str, Enum):
    """Wall-clock pacing mode"""

    FAST = "fast"
    REALTIME = "realtime"
    SCALED = "scaled"


class FaultKind(str, Enum):
    """Fault kinds understood by the fault injector"""

    NODE_CRASH = "NodeCrash"
    NODE_RESTART = "NodeRestart"
    LINK_DOWN = "LinkDown"
    LINK_UP = "LinkUp"
    PARTITION = "Partition"
    PARTITION_HEAL = "PartitionHeal"
    LOSS_OVERRIDE = "LossOverride"
    LATENCY_OVERRIDE = "LatencyOverride"
    MESSAGE_CORRUPT = "MessageCorrupt"
    ENTITY_SPEED_OVERRIDE = "EntitySpeedOverride"
    BEHAVIOR_FAULT = "BehaviorFault"


class _SpecModel(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class WirelessSpec(_SpecModel):
    """Range-gated shared wireless channel"""

    range: StrictFloat
    latency: StrictInt
    bandwidth: StrictFloat
    jitter_max: StrictInt = 0
    loss: StrictFloat = 0.0


class LinkSpec(_SpecModel):
    """Point-to-point wired link"""

    a: StrictStr
    b: StrictStr
    latency: StrictInt
    bandwidth: StrictFloat
    jitter_max: StrictInt = 0
    loss: StrictFloat = 0.0

    @property
    def key(self) -> FrozenSet[str]:
        return frozenset((self.a, self.b))

    @property
    def selector(self) -> str:
        return f"{LINK_PREFIX}{self.a}:{self.b}"


class ExternalSpec(_SpecModel):
    """UDP endpoint of a hardware-backed node"""

    listen_port: StrictInt
    peer: StrictStr


class NodeSpec(_SpecModel):
    id: StrictStr
    behavior: Optional[StrictStr] = None
    params: Dict[StrictStr, StrictStr] = Field(default_factory=dict)
    position: Optional[Position] = None
    entity: Optional[StrictStr] = None
    processing_delay: StrictInt = 0
    external: Optional[ExternalSpec] = None

    @property
    def is_external(self) -> bool:
        return self.external is not None


class EntitySpec(_SpecModel):
    """Mobile domain object moving along a polyline route"""

    id: StrictStr
    route: Tuple[Position, ...]
    speed: StrictFloat


class FaultSpec(_SpecModel):
    at: StrictInt
    kind: FaultKind
    target: StrictStr
    params: Dict[StrictStr, Any] = Field(default_factory=dict)


class ProbeSpec(_SpecModel):
    """Latency probe declaration for reporting"""

    tag: StrictStr
    receiver: Optional[StrictStr] = None
    reference_entity: Optional[StrictStr] = None


class Scenario(_SpecModel):
    name: StrictStr
    duration: StrictInt
    step: StrictInt = DEFAULT_STEP_NS
    seed: StrictInt = Field(ge=0, lt=2**64)
    mode: RunMode = RunMode.FAST
    rtf: StrictFloat = 1.0
    wireless: Optional[WirelessSpec] = None
    links: Tuple[LinkSpec, ...] = ()
    nodes: Tuple[NodeSpec, ...] = ()
    mobility: Tuple[EntitySpec, ...] = ()
    faults: Tuple[FaultSpec, ...] = ()
    probes: Tuple[ProbeSpec, ...] = ()

    def node(self, node_id: str) -> Optional[NodeSpec]:
        return next((n for n in self.nodes if n.id == node_id), None)

    def entity(self, entity_id: str) -> Optional[EntitySpec]:
        return next((e for e in self.mobility if e.id == entity_id), None)

    def link(self, a: str, b: str) -> Optional[LinkSpec]:
        key = frozenset((a, b))
        return next((link for link in self.links if link.key == key), None)

    @property
    def external_nodes(self) -> Tuple[NodeSpec, ...]:
        return tuple(n for n in self.nodes if n.is_external)

    @property
    def pacing_rtf(self) -> Optional[float]:
        """Real-time factor used for pacing, None in fast mode."""
        if self.mode == RunMode.FAST:
            return None
        if self.mode == RunMode.REALTIME:
            return 1.0
        return self.rtf


def parse_channel_selector(selector: str) -> Tuple[str, Optional[FrozenSet[str]]]:
    """Split a channel selector into ("wireless"|"link"|"*", link key).

    Link selectors read ``link:<a>:<b>``; endpoint order does not matter.
    Raises ValueError for anything else.
    """
    if selector in (WIRELESS, ALL_CHANNELS):
        return selector, None
    if selector.startswith(LINK_PREFIX):
        ends = selector[len(LINK_PREFIX):].split(":")
        if len(ends) == 2 and all(ends):
            return "link", frozenset(ends)
    raise ValueError(f"not a channel selector: {selector!r}")
