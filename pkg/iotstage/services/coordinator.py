"""
Co-simulation coordinator

Advances the domain simulator and the network DES in lockstep windows of
``step`` ns. Per window [t, t+step):

1. pace: wait until the wall clock reaches t / rtf (paced modes only)
2. drain gateway injections, stamped at t
3. apply queued entity commands in issue order
4. process every event in [t, t+step) against the snapshot taken at t
5. step the domain simulator by the window length
6. publish the new position snapshot

Faults are FaultApply events on window boundaries, scheduled before any
other event, so they run first inside step 4.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional

from iotstage.integrations.hil_gateway import HilGateway
from iotstage.models.scenario import EntitySpec, Position, Scenario
from iotstage.services.engine import Engine, EventKind, SimEvent, Trace, TraceRecord
from iotstage.services.fault_injector import FaultInjector
from iotstage.services.mobility import DomainSimulator, EntityCommand, MobilitySimulator
from iotstage.services.netsim import Network, PositionSnapshot
from iotstage.services.node_runtime import BehaviorRegistry, NodeRuntime
from iotstage.services.pacing import Pacer
from iotstage.services.report import MultiRunReport, ProbeRecord, RunReport, build_run_report
from iotstage.services.scenario_validator import validate
from iotstage.utils.exceptions import (
    GatewayError,
    RunAbortedError,
    ScenarioValidationError,
)
from iotstage.utils.metrics import track_run, track_window_lag
from iotstage.utils.structured_logging import run_context

logger = logging.getLogger(__name__)

DomainFactory = Callable[[Iterable[EntitySpec]], DomainSimulator]


@dataclass(frozen=True)
class RunConfig:
    """One run of a scenario; run_index offsets the seed."""

    scenario: Scenario
    run_index: int = 0
    trace_path: Optional[str] = None

    def __post_init__(self):
        if self.run_index < 0:
            raise ValueError("run_index must be >= 0")

    @property
    def effective_seed(self) -> int:
        return (self.scenario.seed + self.run_index) % 2**64


@dataclass(frozen=True)
class WindowReport:
    index: int
    start: int
    events: int
    lag_ns: Optional[int] = None


@dataclass
class _RunState:
    engine: Engine
    network: Network
    runtime: NodeRuntime
    domain: DomainSimulator
    pacer: Pacer
    gateway: Optional[HilGateway] = None
    commands: List[EntityCommand] = field(default_factory=list)
    windows: List[WindowReport] = field(default_factory=list)


def trace_path_for(path: Optional[str], run_index: int, n_runs: int) -> Optional[str]:
    """Per-run trace file: ``out.jsonl`` -> ``out-007.jsonl`` when repeating."""
    if path is None or n_runs <= 1:
        return path
    p = Path(path)
    return str(p.with_name(f"{p.stem}-{run_index:03d}{p.suffix}"))


class Coordinator:
    """Runs scenarios window by window"""

    def __init__(
        self,
        registry: Optional[BehaviorRegistry] = None,
        domain_factory: Optional[DomainFactory] = None,
        gateway_factory: Optional[Callable] = None,
        pacer_factory: Callable[[Optional[float]], Pacer] = Pacer,
    ):
        """
        Initialize the coordinator

        Args:
            registry: Behavior registry (defaults to the built-ins)
            domain_factory: Builds the domain simulator from the mobility specs
            gateway_factory: Builds the HIL gateway from (external nodes, pacer)
            pacer_factory: Builds the wall-clock pacer from the run's rtf
        """
        self.registry = registry
        self.domain_factory = domain_factory or MobilitySimulator
        self.gateway_factory = gateway_factory or _default_gateway
        self.pacer_factory = pacer_factory
        self.last_windows: List[WindowReport] = []

    def run(self, config: RunConfig) -> RunReport:
        """
        Execute one run to completion

        Raises:
            ScenarioValidationError: the scenario is invalid
            RunAbortedError: the run stopped early; carries the partial report
        """
        scenario = config.scenario
        violations = validate(scenario, self.registry)
        if violations:
            raise ScenarioValidationError(violations)

        trace: Optional[Trace] = None
        state: Optional[_RunState] = None
        with run_context(scenario=scenario.name, run_index=config.run_index):
            logger.info(
                "Run started",
                extra={"seed": config.effective_seed, "mode": scenario.mode.value},
            )
            try:
                trace = Trace(config.trace_path)
                state = self._build(scenario, config, trace)
                self._start(scenario, state)
                self._loop(scenario, state)
            except (Exception, KeyboardInterrupt) as e:
                reason = "interrupted" if isinstance(e, KeyboardInterrupt) else str(e)
                engine_now = state.engine.now if state is not None else 0
                if trace is not None:
                    trace.append(
                        TraceRecord(engine_now, "ABORT", scenario.name, {"reason": reason})
                    )
                logger.error(
                    "Run aborted", extra={"reason": reason, "at": engine_now}, exc_info=True
                )
                track_run(scenario.mode.value, success=False)
                partial = self._report(config, trace, state) if trace is not None else None
                raise RunAbortedError(
                    f"run {config.run_index} aborted at {engine_now} ns: {reason}",
                    partial=partial,
                    cause=e,
                ) from e
            finally:
                if state is not None and state.gateway is not None:
                    state.gateway.stop()
                if trace is not None:
                    trace.close()

            track_run(scenario.mode.value, success=True)
            report = self._report(config, trace, state)
            logger.info(
                "Run completed",
                extra={
                    "windows": report.windows,
                    "events": report.events,
                    "trace_hash": report.trace_hash,
                    "max_lag_ns": report.max_lag_ns,
                },
            )
            return report

    def run_repeated(
        self,
        scenario: Scenario,
        n: int,
        trace_path: Optional[str] = None,
        overrides: Optional[Dict] = None,
    ) -> MultiRunReport:
        """
        Run n times with run indexes 0..n-1 and aggregate

        Raises:
            ScenarioValidationError: the scenario is invalid
            RunAbortedError: a run failed; partial carries the runs so far
        """
        if n < 1:
            raise ValueError("n must be >= 1")

        report = MultiRunReport(
            scenario_name=scenario.name,
            seed=scenario.seed,
            runs=[],
            overrides=dict(overrides or {}),
            reference_speeds=_reference_speeds(scenario),
        )
        for i in range(n):
            config = RunConfig(scenario, i, trace_path_for(trace_path, i, n))
            try:
                report.runs.append(self.run(config))
            except RunAbortedError as e:
                if e.partial is not None:
                    report.runs.append(e.partial)
                report.partial = True
                raise RunAbortedError(e.message, partial=report, cause=e.cause) from e
        return report

    def _build(self, scenario: Scenario, config: RunConfig, trace: Trace) -> _RunState:
        engine = Engine(config.effective_seed, trace)
        network = Network(engine, scenario)
        commands: List[EntityCommand] = []
        runtime = NodeRuntime(engine, network, scenario, self.registry, commands.append)
        domain = self.domain_factory(scenario.mobility)
        pacer = self.pacer_factory(scenario.pacing_rtf)
        return _RunState(engine, network, runtime, domain, pacer, commands=commands)

    def _start(self, scenario: Scenario, state: _RunState) -> None:
        engine, network, runtime, domain = state.engine, state.network, state.runtime, state.domain
        injector = FaultInjector(engine, network, runtime, domain, scenario.step)
        injector.fault_schedule(scenario)
        engine.on(EventKind.EXTERNAL_INJECTION, lambda event: self._on_injection(state, event))

        positions = {e: domain.position_of(e) for e in domain.entity_ids()}
        self._record_positions(engine, domain, positions)
        network.refresh_connectivity(PositionSnapshot(0, _node_positions(scenario, positions)))

        if scenario.external_nodes:
            state.gateway = self.gateway_factory(scenario.external_nodes, state.pacer)
            runtime.external_sink = lambda packet, node_id: state.gateway.egress(
                packet, node_id, engine.now
            )
            state.gateway.start()

        runtime.start_all()
        state.pacer.start()

    def _loop(self, scenario: Scenario, state: _RunState) -> None:
        engine, network, domain = state.engine, state.network, state.domain
        t, index = 0, 0
        while t < scenario.duration:
            end = min(t + scenario.step, scenario.duration)

            lag = state.pacer.wait_for(t)
            if lag is not None:
                track_window_lag(lag)

            self._drain_gateway(state, t)
            self._apply_commands(state)
            events = engine.run_until(end)

            positions = domain.step(end - t)
            self._record_positions(engine, domain, positions)
            network.refresh_connectivity(
                PositionSnapshot(index + 1, _node_positions(scenario, positions))
            )

            window = WindowReport(index, t, events, lag)
            state.windows.append(window)
            engine.record(
                "WINDOW", scenario.name, t=t, window=index, events=events, lag_ns=lag
            )
            t, index = end, index + 1

        state.pacer.wait_for(scenario.duration)
        self.last_windows = state.windows

    def _drain_gateway(self, state: _RunState, t: int) -> None:
        gateway = state.gateway
        if gateway is None:
            return
        if gateway.error is not None:
            raise GatewayError(f"gateway I/O failed: {gateway.error}") from gateway.error
        for warning in gateway.drain_warnings():
            state.engine.record("GATEWAY_WARNING", warning.node_id, reason=warning.reason, **warning.detail)
        for request in gateway.drain():
            state.engine.schedule(SimEvent(t, EventKind.EXTERNAL_INJECTION, request))

    def _apply_commands(self, state: _RunState) -> None:
        pending, state.commands[:] = list(state.commands), []
        for command in pending:
            applied = state.domain.apply_command(command)
            state.engine.record(
                "COMMAND",
                command.entity,
                command=command.kind.value,
                value=command.value,
                issued_at=command.issued_at,
                applied=applied,
            )

    def _on_injection(self, state: _RunState, event: SimEvent) -> None:
        request = event.payload
        node = state.runtime.state(request.node_id)
        state.runtime.emit(node, request.dst, request.payload, request.origin_stamp)

    def _record_positions(
        self, engine: Engine, domain: DomainSimulator, positions: Dict[str, Position]
    ) -> None:
        for entity_id, (x, y) in sorted(positions.items()):
            engine.record(
                "POSITION",
                entity_id,
                entity=entity_id,
                x=x,
                y=y,
                state=domain.state_of(entity_id).value,
            )

    def _report(
        self, config: RunConfig, trace: Trace, state: Optional[_RunState]
    ) -> RunReport:
        windows = state.windows if state is not None else []
        lags = [w.lag_ns for w in windows if w.lag_ns is not None]
        return build_run_report(
            run_index=config.run_index,
            seed=config.effective_seed,
            probes=(
                _declared_probes(config.scenario, state.runtime.probes)
                if state is not None
                else []
            ),
            trace_hash=trace.hexdigest(),
            trace_counts=trace.counts,
            windows=len(windows),
            events=state.engine.processed if state is not None else 0,
            max_lag_ns=max(lags) if lags else None,
        )


def run(config: RunConfig, registry: Optional[BehaviorRegistry] = None) -> RunReport:
    return Coordinator(registry).run(config)


def run_repeated(scenario: Scenario, n: int, **kwargs) -> MultiRunReport:
    registry = kwargs.pop("registry", None)
    return Coordinator(registry).run_repeated(scenario, n, **kwargs)


def _node_positions(scenario: Scenario, entity_positions: Dict[str, Position]) -> Dict[str, Position]:
    positions = {}
    for node in scenario.nodes:
        if node.entity is not None:
            positions[node.id] = entity_positions[node.entity]
        elif node.position is not None:
            positions[node.id] = node.position
    return positions


def _declared_probes(scenario: Scenario, probes: List[ProbeRecord]) -> List[ProbeRecord]:
    """Drop samples of declared tags recorded at other receivers."""
    receivers = {p.tag: p.receiver for p in scenario.probes if p.receiver is not None}
    return [p for p in probes if receivers.get(p.tag, p.receiver) == p.receiver]


def _reference_speeds(scenario: Scenario) -> Dict[str, tuple]:
    speeds = {}
    for probe in scenario.probes:
        if probe.reference_entity is None:
            continue
        entity = scenario.entity(probe.reference_entity)
        if entity is not None:
            speeds[probe.tag] = (entity.id, entity.speed)
    return speeds


def _default_gateway(nodes, pacer: Pacer) -> HilGateway:
    return HilGateway(nodes, pacer=pacer if pacer.enabled else None)
