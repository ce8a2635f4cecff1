"""
Node runtime hosting application behaviors on virtual nodes

Callbacks run in zero simulated time on the coordinator thread; a node's
processing_delay is applied to everything it sends.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Mapping, Optional

from iotstage.models.scenario import NS_PER_MS, NodeSpec, Position, Scenario
from iotstage.services.engine import Engine, EventKind, SimEvent, SimTime
from iotstage.services.mobility import EntityCommand
from iotstage.services.netsim import BROADCAST, Network, Packet
from iotstage.services.report import ProbeRecord
from iotstage.utils.exceptions import (
    BehaviorError,
    DuplicateBehaviorError,
    IoTStageError,
    RestartWithoutCrashError,
    UnknownBehaviorError,
    UnknownNodeError,
)

logger = logging.getLogger(__name__)


class Behavior:
    """
    Base class for application behaviors

    Subclasses override the callbacks they need. Callbacks must not block
    and may only observe time through ``ctx.now()``.
    """

    def __init__(self, params: Mapping[str, str]):
        self.params = dict(params)

    def float_param(self, key: str, default: float) -> float:
        value = self.params.get(key)
        return default if value is None else float(value)

    def duration_param(self, key: str, default_ms: float) -> int:
        """Read a ``<key>_ms`` param as integer nanoseconds."""
        return int(round(self.float_param(f"{key}_ms", default_ms) * NS_PER_MS))

    def on_start(self, ctx: "NodeContext") -> None:
        pass

    def on_message(
        self, ctx: "NodeContext", src: str, payload: bytes, origin_stamp: Optional[SimTime]
    ) -> None:
        pass

    def on_timer(self, ctx: "NodeContext", timer_id: str) -> None:
        pass

    def on_fault(self, ctx: "NodeContext", params: Mapping[str, Any]) -> None:
        """Behavior/state fault injection point; ignored unless overridden."""


BehaviorFactory = Callable[[Mapping[str, str]], Behavior]


class BehaviorRegistry:
    """Name -> behavior factory"""

    def __init__(self):
        self._factories: Dict[str, BehaviorFactory] = {}

    def register(self, name: str, factory: BehaviorFactory) -> None:
        if name in self._factories:
            raise DuplicateBehaviorError(f"behavior {name!r} already registered")
        self._factories[name] = factory

    def create(self, name: str, params: Mapping[str, str]) -> Behavior:
        try:
            factory = self._factories[name]
        except KeyError:
            raise UnknownBehaviorError(f"no behavior {name!r}") from None
        return factory(params)

    def names(self) -> List[str]:
        return sorted(self._factories)

    def copy(self) -> "BehaviorRegistry":
        clone = BehaviorRegistry()
        clone._factories = dict(self._factories)
        return clone

    def __contains__(self, name: str) -> bool:
        return name in self._factories


default_registry = BehaviorRegistry()


def register_behavior(
    name: str, factory: BehaviorFactory, registry: Optional[BehaviorRegistry] = None
) -> None:
    """Make a behavior constructible by scenario reference."""
    (registry or default_registry).register(name, factory)


def behavior(name: str, registry: Optional[BehaviorRegistry] = None):
    """
    Class decorator registering a behavior.

    Usage:
        @behavior("echo")
        class Echo(Behavior):
            ...
    """

    def decorator(cls):
        register_behavior(name, cls, registry)
        return cls

    return decorator


@dataclass
class NodeState:
    spec: NodeSpec
    behavior: Optional[Behavior] = None
    alive: bool = False
    incarnation: int = 0
    timers: Dict[str, int] = field(default_factory=dict)

    @property
    def node_id(self) -> str:
        return self.spec.id


@dataclass(frozen=True)
class _TimerPayload:
    node_id: str
    incarnation: int
    timer_id: str
    token: int


@dataclass(frozen=True)
class _OutboundPayload:
    node_id: str
    incarnation: int
    dst: str
    payload: bytes
    origin_stamp: Optional[SimTime]


class NodeContext:
    """Services a behavior may use during a callback"""

    def __init__(self, runtime: "NodeRuntime", state: NodeState):
        self._runtime = runtime
        self._state = state

    @property
    def node_id(self) -> str:
        return self._state.node_id

    @property
    def entity_id(self) -> Optional[str]:
        return self._state.spec.entity

    def now(self) -> SimTime:
        return self._runtime.engine.now

    def send(self, dst: str, payload: bytes, origin_stamp: Optional[SimTime] = None) -> None:
        self._runtime.emit(self._state, dst, payload, origin_stamp)

    def broadcast(self, payload: bytes, origin_stamp: Optional[SimTime] = None) -> None:
        self._runtime.emit(self._state, BROADCAST, payload, origin_stamp)

    def set_timer(self, delay: int, timer_id: str) -> None:
        self._runtime.set_timer(self._state, delay, timer_id)

    def cancel_timer(self, timer_id: str) -> None:
        self._state.timers.pop(timer_id, None)

    def my_position(self) -> Position:
        """Position in the current window's snapshot."""
        return self._runtime.network.snapshot.positions[self.node_id]

    def command_entity(self, command: EntityCommand) -> None:
        self._runtime.command_sink(command)

    def record_probe(self, tag: str, origin_stamp: SimTime) -> None:
        self._runtime.record_probe(self._state, tag, origin_stamp)

    def param(self, key: str, default: Optional[str] = None) -> Optional[str]:
        return self._state.spec.params.get(key, default)


class NodeRuntime:
    """Lifecycle, timers and message dispatch for all scenario nodes"""

    def __init__(
        self,
        engine: Engine,
        network: Network,
        scenario: Scenario,
        registry: Optional[BehaviorRegistry] = None,
        command_sink: Optional[Callable[[EntityCommand], None]] = None,
    ):
        """
        Initialize the runtime

        Args:
            engine: Run engine
            network: Network used for sends and delivery records
            scenario: Validated scenario
            registry: Behavior registry (defaults to the built-ins)
            command_sink: Receives entity commands issued by behaviors
        """
        self.engine = engine
        self.network = network
        self.registry = registry or default_registry
        self.commands: List[EntityCommand] = []
        self.command_sink = command_sink or self.commands.append
        self.external_sink: Optional[Callable[[Packet, str], None]] = None
        self.probes: List[ProbeRecord] = []
        self.nodes: Dict[str, NodeState] = {n.id: NodeState(n) for n in scenario.nodes}
        self._timer_tokens = 0

        engine.on(EventKind.TIMER_FIRE, self._on_timer_fire)
        network.deliver_hook = self.dispatch_delivery

    def state(self, node_id: str) -> NodeState:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise UnknownNodeError(f"no node {node_id!r}") from None

    def is_alive(self, node_id: str) -> bool:
        return self.state(node_id).alive

    def start_all(self) -> None:
        """Start every node in declaration order."""
        for state in self.nodes.values():
            self.start_node(state.spec)

    def start_node(self, spec: NodeSpec) -> NodeState:
        """
        Instantiate the node's behavior and run on_start at the current clock

        External nodes come up without a behavior; their logic runs outside.

        Raises:
            UnknownBehaviorError: behavior name not registered
        """
        state = self.state(spec.id)
        state.behavior = (
            None if spec.is_external else self.registry.create(spec.behavior, spec.params)
        )
        state.alive = True
        state.incarnation += 1
        state.timers.clear()
        self.engine.record("START", spec.id, incarnation=state.incarnation)
        if state.behavior is not None:
            self._invoke(state, "on_start")
        return state

    def crash(self, node_id: str) -> None:
        """Power off a node: behavior state is destroyed, timers cancelled."""
        state = self.state(node_id)
        state.alive = False
        state.behavior = None
        state.timers.clear()

    def restart(self, node_id: str) -> NodeState:
        state = self.state(node_id)
        if state.alive:
            raise RestartWithoutCrashError(f"node {node_id!r} is running")
        return self.start_node(state.spec)

    def inject_fault(self, node_id: str, params: Mapping[str, Any]) -> bool:
        """Hand fault params to the node's on_fault hook; False if not running."""
        state = self.state(node_id)
        if not state.alive or state.behavior is None:
            return False
        self._invoke(state, "on_fault", dict(params))
        return True

    def dispatch_delivery(self, packet: Packet, receiver: str) -> None:
        """
        Deliver a packet to its receiver

        Crashed receivers get a DROP_CRASHED record and no callback; external
        receivers are handed to the gateway.
        """
        state = self.state(receiver)
        if not state.alive:
            self.network.record_drop("DROP_CRASHED", packet, receiver)
            return
        self.network.record_delivery(packet, receiver)
        if state.spec.is_external:
            if self.external_sink is not None:
                self.external_sink(packet, receiver)
            return
        self._invoke(state, "on_message", packet.src, packet.payload, packet.origin_stamp)

    def emit(
        self, state: NodeState, dst: str, payload: bytes, origin_stamp: Optional[SimTime]
    ) -> None:
        """Send now, or after the node's processing delay."""
        if not state.alive:
            return
        delay = state.spec.processing_delay
        if delay == 0:
            self.network.send(state.node_id, dst, payload, origin_stamp)
            return
        self.engine.schedule(
            SimEvent(
                self.engine.now + delay,
                EventKind.TIMER_FIRE,
                _OutboundPayload(state.node_id, state.incarnation, dst, bytes(payload), origin_stamp),
            )
        )

    def set_timer(self, state: NodeState, delay: int, timer_id: str) -> None:
        if delay <= 0:
            raise ValueError("timer delay must be positive")
        self._timer_tokens += 1
        state.timers[timer_id] = self._timer_tokens
        self.engine.schedule(
            SimEvent(
                self.engine.now + delay,
                EventKind.TIMER_FIRE,
                _TimerPayload(state.node_id, state.incarnation, timer_id, self._timer_tokens),
            )
        )

    def record_probe(self, state: NodeState, tag: str, origin_stamp: SimTime) -> None:
        if origin_stamp is None:
            raise ValueError(f"probe {tag!r} needs an origin stamp")
        record = ProbeRecord(
            tag=tag,
            origin_stamp=origin_stamp,
            received_at=self.engine.now,
            receiver=state.node_id,
        )
        if record.latency <= 0:
            raise ValueError(f"probe {tag!r} latency must be positive")
        self.probes.append(record)
        self.engine.record(
            "PROBE",
            state.node_id,
            tag=tag,
            origin_stamp=origin_stamp,
            latency_ns=record.latency,
        )

    def _on_timer_fire(self, event: SimEvent) -> None:
        payload = event.payload
        state = self.nodes[payload.node_id]
        if not state.alive or state.incarnation != payload.incarnation:
            return
        if isinstance(payload, _OutboundPayload):
            self.network.send(state.node_id, payload.dst, payload.payload, payload.origin_stamp)
            return
        if state.timers.get(payload.timer_id) != payload.token:
            return  # cancelled or re-armed
        del state.timers[payload.timer_id]
        self._invoke(state, "on_timer", payload.timer_id)

    def _invoke(self, state: NodeState, callback: str, *args) -> None:
        ctx = NodeContext(self, state)
        try:
            getattr(state.behavior, callback)(ctx, *args)
        except IoTStageError:
            raise
        except Exception as e:
            logger.error(
                "Behavior callback failed",
                extra={"node": state.node_id, "callback": callback, "at": self.engine.now},
                exc_info=True,
            )
            raise BehaviorError(
                f"{state.node_id}.{callback} raised {e!r} at {self.engine.now} ns",
                payload={"node": state.node_id, "callback": callback},
            ) from e


# Built-in behaviors register themselves on import.
import iotstage.behaviors  # noqa: E402,F401
