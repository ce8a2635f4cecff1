"""
Fault injection for nodes, channels, messages and the domain environment
"""

import itertools
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Tuple

from iotstage.models.scenario import NS_PER_MS, NS_PER_US, FaultKind, FaultSpec, Scenario
from iotstage.services.engine import Engine, EventKind, SimEvent
from iotstage.services.mobility import CommandKind, DomainSimulator, EntityCommand
from iotstage.services.netsim import ChannelState, CorruptionWindow, Network
from iotstage.services.node_runtime import NodeRuntime
from iotstage.utils.exceptions import UnknownEntityError, UnknownNodeError, UnknownTargetError
from iotstage.utils.metrics import track_fault

logger = logging.getLogger(__name__)


def duration_param(params: Mapping[str, Any], name: str) -> Optional[int]:
    """
    Read ``<name>_ms`` or ``<name>_us`` from fault params, in ns

    Returns None when neither key is present.

    Raises:
        ValueError: both keys given or value is not an integer
    """
    keys = [(f"{name}_ms", NS_PER_MS), (f"{name}_us", NS_PER_US)]
    present = [(key, scale) for key, scale in keys if key in params]
    if not present:
        return None
    if len(present) > 1:
        raise ValueError(f"{name} given in both units")
    key, scale = present[0]
    value = params[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValueError(f"{key} must be an integer")
    return value * scale


@dataclass(frozen=True)
class _Revert:
    """Ends one timed override of a channel parameter."""

    channel: ChannelState
    field: str
    token: int
    kind: FaultKind


@dataclass
class _OverrideStack:
    """Value a channel parameter falls back to, plus its live timed overrides, oldest first."""

    base: Any
    active: List[Tuple[int, Any]] = field(default_factory=list)

    def current(self) -> Any:
        return self.active[-1][1] if self.active else self.base


class FaultInjector:
    """Schedules and applies scenario faults"""

    def __init__(
        self,
        engine: Engine,
        network: Network,
        runtime: NodeRuntime,
        domain: DomainSimulator,
        step: int,
    ):
        self.engine = engine
        self.network = network
        self.runtime = runtime
        self.domain = domain
        self.step = step
        self.applied: List[FaultSpec] = []
        self._overrides: Dict[Tuple[str, str], _OverrideStack] = {}
        self._tokens = itertools.count()

        engine.on(EventKind.FAULT_APPLY, self._on_fault_event)

    def quantize(self, at: int) -> int:
        """Start of the window containing `at`."""
        return at - at % self.step

    def fault_schedule(self, scenario: Scenario) -> List[SimEvent]:
        """
        Schedule one FaultApply event per fault at its window boundary

        Faults sharing a boundary are applied in declaration order. A crash
        with ``restart_ms`` also schedules its restart.
        """
        events = [
            self.engine.schedule(SimEvent(self.quantize(f.at), EventKind.FAULT_APPLY, f))
            for f in scenario.faults
        ]
        for fault in scenario.faults:
            if fault.kind != FaultKind.NODE_CRASH:
                continue
            restart = duration_param(fault.params, "restart")
            if restart is None or restart >= scenario.duration:
                continue
            follow_up = FaultSpec(at=restart, kind=FaultKind.NODE_RESTART, target=fault.target)
            events.append(
                self.engine.schedule(
                    SimEvent(self.quantize(restart), EventKind.FAULT_APPLY, follow_up)
                )
            )
        return events

    def apply(self, fault: FaultSpec) -> None:
        """
        Apply one fault at the current clock

        Raises:
            UnknownTargetError: the target resolves to nothing
            RestartWithoutCrashError: restart of a running node
        """
        self.engine.record(
            "FAULT",
            fault.target,
            at=fault.at,
            kind=fault.kind.value,
            target=fault.target,
            params=dict(fault.params),
        )
        track_fault(fault.kind.value)
        logger.info(
            "Fault applied",
            extra={"kind": fault.kind.value, "target": fault.target, "at": self.engine.now},
        )

        try:
            self._apply(fault)
        except (UnknownNodeError, UnknownEntityError) as e:
            raise UnknownTargetError(e.message) from e
        self.applied.append(fault)

    def _apply(self, fault: FaultSpec) -> None:
        kind = fault.kind
        params = fault.params

        if kind == FaultKind.NODE_CRASH:
            self.runtime.crash(fault.target)
        elif kind == FaultKind.NODE_RESTART:
            self.runtime.restart(fault.target)
        elif kind == FaultKind.BEHAVIOR_FAULT:
            self.runtime.inject_fault(fault.target, params)
        elif kind == FaultKind.ENTITY_SPEED_OVERRIDE:
            self.domain.apply_command(
                EntityCommand(
                    entity=fault.target,
                    kind=CommandKind.SET_SPEED,
                    issued_at=self.engine.now,
                    value=float(params["speed_mps"]),
                )
            )
        else:
            for channel in self.network.channels(fault.target):
                self._apply_to_channel(fault, channel)

    def _apply_to_channel(self, fault: FaultSpec, channel: ChannelState) -> None:
        kind = fault.kind
        params = fault.params
        if kind == FaultKind.LINK_DOWN:
            channel.enabled = False
        elif kind == FaultKind.LINK_UP:
            channel.enabled = True
        elif kind == FaultKind.PARTITION:
            channel.partition = tuple(frozenset(group) for group in params["groups"])
        elif kind == FaultKind.PARTITION_HEAL:
            channel.partition = None
        elif kind == FaultKind.MESSAGE_CORRUPT:
            until = self.engine.now + duration_param(params, "duration")
            channel.corruption = CorruptionWindow(float(params["probability"]), until)
        elif kind == FaultKind.LOSS_OVERRIDE:
            self._override(channel, "loss", float(params["loss"]), fault)
        elif kind == FaultKind.LATENCY_OVERRIDE:
            self._override(channel, "latency", duration_param(params, "latency"), fault)

    def _override(self, channel: ChannelState, name: str, value, fault: FaultSpec) -> None:
        """
        Set one channel parameter, timed when the fault carries ``duration``

        The newest live override wins. An untimed override becomes the new
        base and hides every older one.
        """
        key = (channel.selector, name)
        duration = duration_param(fault.params, "duration")
        if duration is None:
            self._overrides.pop(key, None)
            self._set(channel, name, value)
            return

        stack = self._overrides.setdefault(key, _OverrideStack(getattr(channel.spec, name)))
        token = next(self._tokens)
        stack.active.append((token, value))
        self._set(channel, name, value)

        end = self.engine.now + duration
        revert_at = end if end % self.step == 0 else self.quantize(end) + self.step
        self.engine.schedule(
            SimEvent(revert_at, EventKind.FAULT_APPLY, _Revert(channel, name, token, fault.kind))
        )

    def _end_override(self, revert: _Revert) -> None:
        key = (revert.channel.selector, revert.field)
        stack = self._overrides.get(key)
        if stack is not None and any(token == revert.token for token, _ in stack.active):
            stack.active = [entry for entry in stack.active if entry[0] != revert.token]
            self._set(revert.channel, revert.field, stack.current())
            if not stack.active:
                del self._overrides[key]
        self.engine.record(
            "FAULT_END",
            revert.channel.selector,
            kind=revert.kind.value,
            field=revert.field,
        )

    @staticmethod
    def _set(channel: ChannelState, name: str, value) -> None:
        channel.spec = channel.spec.model_copy(update={name: value})

    def _on_fault_event(self, event: SimEvent) -> None:
        payload = event.payload
        if isinstance(payload, _Revert):
            self._end_override(payload)
            return
        self.apply(payload)
