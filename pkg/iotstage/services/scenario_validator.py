"""
Scenario validation

Violations are values, not errors: ``validate`` returns every broken
invariant it finds, each with a machine-readable code and the offending path.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Set, Tuple

from iotstage.models.scenario import (
    ALL_CHANNELS,
    FaultKind,
    RunMode,
    Scenario,
    parse_channel_selector,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Violation:
    """One broken scenario invariant"""

    code: str
    path: str
    message: str = ""

    def to_dict(self):
        return {"code": self.code, "path": self.path, "message": self.message}

    def __str__(self):
        text = f"{self.code} at {self.path}"
        return f"{text}: {self.message}" if self.message else text


_CHANNEL_FAULTS = {
    FaultKind.LINK_DOWN,
    FaultKind.LINK_UP,
    FaultKind.PARTITION,
    FaultKind.PARTITION_HEAL,
    FaultKind.LOSS_OVERRIDE,
    FaultKind.LATENCY_OVERRIDE,
    FaultKind.MESSAGE_CORRUPT,
}
_NODE_FAULTS = {FaultKind.NODE_CRASH, FaultKind.NODE_RESTART, FaultKind.BEHAVIOR_FAULT}


def validate(scenario: Scenario, registry=None) -> List[Violation]:
    """
    Check every Scenario invariant

    Args:
        scenario: Parsed scenario
        registry: Behavior registry used to resolve behavior names;
            defaults to the process-wide registry with the built-ins

    Returns:
        Empty list iff the scenario is valid
    """
    if registry is None:
        from iotstage.services.node_runtime import default_registry

        registry = default_registry

    violations: List[Violation] = []
    add = lambda code, path, message="": violations.append(Violation(code, path, message))

    # Run parameters
    if scenario.duration <= 0:
        add("DURATION_NOT_POSITIVE", "duration_ms")
    if scenario.step <= 0:
        add("STEP_NOT_POSITIVE", "step_ms")
    elif scenario.duration > 0 and scenario.step > scenario.duration:
        add("STEP_EXCEEDS_DURATION", "step_ms", "step must not exceed duration")
    if scenario.mode == RunMode.SCALED and not scenario.rtf > 0:
        add("RTF_NOT_POSITIVE", "rtf")

    # Entities
    entity_ids: Set[str] = set()
    for i, entity in enumerate(scenario.mobility):
        path = f"mobility[{i}]"
        if entity.id in entity_ids:
            add("DUPLICATE_ENTITY_ID", path, f"entity id {entity.id!r} repeated")
        entity_ids.add(entity.id)
        if len(entity.route) < 2:
            add("ROUTE_TOO_SHORT", f"{path}.route", "a route needs at least 2 points")
        if not all(math.isfinite(c) for point in entity.route for c in point):
            add("NON_FINITE_POSITION", f"{path}.route")
        if not entity.speed >= 0:
            add("NEGATIVE_SPEED", f"{path}.speed_mps")

    # Nodes
    node_ids: Set[str] = set()
    ports: Dict[int, str] = {}
    has_external = False
    for i, node in enumerate(scenario.nodes):
        path = f"nodes[{i}]"
        if node.id in node_ids:
            add("DUPLICATE_NODE_ID", path, f"node id {node.id!r} repeated")
        node_ids.add(node.id)

        if node.position is not None and node.entity is not None:
            add("POSITION_AND_ENTITY", path, "give either position or entity")
        elif node.position is None and node.entity is None:
            add("NO_POSITION", path, "give a static position or bind an entity")
        if node.entity is not None and node.entity not in entity_ids:
            add("UNKNOWN_ENTITY", f"{path}.entity", f"no entity {node.entity!r}")
        if node.position is not None and not all(math.isfinite(c) for c in node.position):
            add("NON_FINITE_POSITION", f"{path}.position")
        if node.processing_delay < 0:
            add("NEGATIVE_PROCESSING_DELAY", f"{path}.processing_delay_ms")

        if node.is_external:
            has_external = True
            if node.behavior is not None:
                add("EXTERNAL_HAS_BEHAVIOR", f"{path}.behavior",
                    "external nodes run their logic outside the simulator")
            port = node.external.listen_port
            if not 0 < port < 65536:
                add("INVALID_PEER", f"{path}.external.listen_port", "port out of range")
            elif port in ports:
                add("DUPLICATE_LISTEN_PORT", f"{path}.external.listen_port",
                    f"port {port} already used by {ports[port]!r}")
            else:
                ports[port] = node.id
            if not _is_address(node.external.peer):
                add("INVALID_PEER", f"{path}.external.peer", "expected host:port")
        elif node.behavior is None:
            add("MISSING_BEHAVIOR", f"{path}.behavior")
        elif node.behavior not in registry:
            add("UNKNOWN_BEHAVIOR", f"{path}.behavior", f"no behavior {node.behavior!r}")

    if has_external and scenario.mode != RunMode.REALTIME:
        add("EXTERNAL_REQUIRES_REALTIME", "mode",
            "external nodes need wall-clock execution")
    if has_external and scenario.wireless is None:
        add("NO_WIRELESS_CHANNEL", "wireless",
            "external nodes transmit on the wireless channel")

    # Channels
    if scenario.wireless is not None:
        w = scenario.wireless
        _check_channel(add, "wireless", w.latency, w.bandwidth, w.jitter_max, w.loss)
        if not w.range > 0:
            add("INVALID_CHANNEL_PARAM", "wireless.range_m", "range must be positive")

    pairs = set()
    for i, link in enumerate(scenario.links):
        path = f"links[{i}]"
        if link.a == link.b:
            add("SELF_LINK", path)
        for end in (link.a, link.b):
            if end not in node_ids:
                add("UNKNOWN_NODE", path, f"no node {end!r}")
        if link.key in pairs:
            add("DUPLICATE_LINK", path, "at most one link per node pair")
        pairs.add(link.key)
        _check_channel(add, path, link.latency, link.bandwidth, link.jitter_max, link.loss)

    # Faults
    _check_faults(add, scenario, node_ids, entity_ids)

    # Probes
    for i, probe in enumerate(scenario.probes):
        path = f"probes[{i}]"
        if probe.receiver is not None and probe.receiver not in node_ids:
            add("UNKNOWN_NODE", f"{path}.receiver", f"no node {probe.receiver!r}")
        if probe.reference_entity is not None and probe.reference_entity not in entity_ids:
            add("UNKNOWN_ENTITY", f"{path}.reference_entity")

    if violations:
        logger.debug(
            "Scenario has violations",
            extra={"scenario": scenario.name, "codes": [v.code for v in violations]},
        )
    return violations


def _is_address(text: str) -> bool:
    host, sep, port = text.rpartition(":")
    return bool(sep and host and port.isdigit() and 0 < int(port) < 65536)


def _check_channel(add, path, latency, bandwidth, jitter_max, loss):
    if not latency > 0:
        add("INVALID_CHANNEL_PARAM", f"{path}.latency_ms", "latency must be positive")
    if not bandwidth > 0:
        add("INVALID_CHANNEL_PARAM", f"{path}.bandwidth_bps", "bandwidth must be positive")
    if jitter_max < 0:
        add("INVALID_CHANNEL_PARAM", f"{path}.jitter_max_ms", "jitter must not be negative")
    if not 0.0 <= loss <= 1.0:
        add("INVALID_CHANNEL_PARAM", f"{path}.loss", "loss must lie in [0, 1]")


def _check_faults(add, scenario: Scenario, node_ids: Set[str], entity_ids: Set[str]):
    node_events: List[Tuple[int, str, str, str]] = []
    follow_ups: List[Tuple[int, str, str, str]] = []
    for i, fault in enumerate(scenario.faults):
        path = f"faults[{i}]"
        if fault.at < 0 or fault.at >= scenario.duration:
            add("FAULT_AFTER_END", f"{path}.at_ms", "fault must lie inside [0, duration)")

        kind = fault.kind
        if kind in _NODE_FAULTS:
            if fault.target not in node_ids:
                add("UNKNOWN_TARGET", f"{path}.target", f"no node {fault.target!r}")
                continue
            in_run = 0 <= fault.at < scenario.duration
            if kind == FaultKind.NODE_CRASH:
                if in_run:
                    node_events.append((fault.at, "crash", fault.target, path))
                restart = _duration_param(add, path, fault.params, "restart")
                if restart is not None and restart <= fault.at:
                    add("INVALID_FAULT_PARAM", f"{path}.params.restart_ms",
                        "restart must come after the crash")
                elif in_run and restart is not None and restart < scenario.duration:
                    follow_ups.append((restart, "restart", fault.target, f"{path}.params.restart_ms"))
            elif kind == FaultKind.NODE_RESTART and in_run:
                node_events.append((fault.at, "restart", fault.target, path))
        elif kind == FaultKind.ENTITY_SPEED_OVERRIDE:
            if fault.target not in entity_ids:
                add("UNKNOWN_TARGET", f"{path}.target", f"no entity {fault.target!r}")
            speed = fault.params.get("speed_mps")
            if not _is_number(speed) or speed < 0:
                add("INVALID_FAULT_PARAM", f"{path}.params.speed_mps")
        elif kind in _CHANNEL_FAULTS:
            if not _channel_exists(scenario, fault.target):
                add("UNKNOWN_TARGET", f"{path}.target", f"no channel {fault.target!r}")
            _check_channel_fault_params(add, path, fault, node_ids)

    _check_restarts(add, scenario.step, node_events + follow_ups)


def _check_restarts(add, step: int, events: List[Tuple[int, str, str, str]]):
    """
    Replay crashes and restarts in the order the injector applies them

    Events land on the start of their window; within a window declared faults
    keep their order and restarts scheduled by ``restart_ms`` come last.
    """
    step = step if step > 0 else 1
    ordered = sorted(enumerate(events), key=lambda item: (item[1][0] // step, item[0]))
    down: Set[str] = set()
    for _, (_, action, target, path) in ordered:
        if action == "crash":
            down.add(target)
        elif target in down:
            down.discard(target)
        else:
            add("RESTART_WITHOUT_CRASH", path,
                f"no NodeCrash of {target!r} is open at this point")


def _check_channel_fault_params(add, path, fault, node_ids):
    params = fault.params
    kind = fault.kind
    if kind in (FaultKind.LOSS_OVERRIDE, FaultKind.MESSAGE_CORRUPT):
        key = "loss" if kind == FaultKind.LOSS_OVERRIDE else "probability"
        value = params.get(key)
        if not _is_number(value) or not 0.0 <= value <= 1.0:
            add("INVALID_FAULT_PARAM", f"{path}.params.{key}", "expected probability")
    if kind == FaultKind.LATENCY_OVERRIDE:
        if "latency_ms" not in params and "latency_us" not in params:
            add("INVALID_FAULT_PARAM", f"{path}.params.latency_ms", "latency required")
        else:
            latency = _duration_param(add, path, params, "latency")
            if latency is not None and latency <= 0:
                add("INVALID_FAULT_PARAM", f"{path}.params.latency_ms", "latency must be positive")
    if kind in (FaultKind.LOSS_OVERRIDE, FaultKind.LATENCY_OVERRIDE, FaultKind.MESSAGE_CORRUPT):
        duration = _duration_param(add, path, params, "duration")
        if kind == FaultKind.MESSAGE_CORRUPT and duration is None:
            add("INVALID_FAULT_PARAM", f"{path}.params.duration_ms", "duration required")
        elif duration is not None and duration <= 0:
            add("INVALID_FAULT_PARAM", f"{path}.params.duration_ms")
    if kind == FaultKind.PARTITION:
        groups = params.get("groups")
        if not isinstance(groups, list) or not all(isinstance(g, list) for g in groups):
            add("INVALID_FAULT_PARAM", f"{path}.params.groups", "expected list of lists")
            return
        seen: Set[str] = set()
        for g, group in enumerate(groups):
            for member in group:
                if member not in node_ids:
                    add("UNKNOWN_TARGET", f"{path}.params.groups[{g}]", f"no node {member!r}")
                elif member in seen:
                    add("OVERLAPPING_PARTITION", f"{path}.params.groups[{g}]",
                        f"{member!r} appears in more than one group")
                seen.add(member)


def _channel_exists(scenario: Scenario, selector: str) -> bool:
    try:
        kind, key = parse_channel_selector(selector)
    except ValueError:
        return False
    if kind == ALL_CHANNELS:
        return scenario.wireless is not None or bool(scenario.links)
    if kind == "wireless":
        return scenario.wireless is not None
    return any(link.key == key for link in scenario.links)


def _duration_param(add, path, params, name) -> Optional[int]:
    """Read ``<name>_ms`` or ``<name>_us`` from fault params as ns."""
    from iotstage.services.fault_injector import duration_param

    try:
        return duration_param(params, name)
    except ValueError as e:
        add("INVALID_FAULT_PARAM", f"{path}.params.{name}_ms", str(e))
        return None


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def codes(violations: Iterable[Violation]) -> List[str]:
    return [v.code for v in violations]
