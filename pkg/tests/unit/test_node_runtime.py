"""Unit tests for the node runtime."""

import pytest

from iotstage.models.scenario import ExternalSpec, NodeSpec, Position
from iotstage.services.engine import Engine
from iotstage.services.netsim import Network, PositionSnapshot
from iotstage.services.node_runtime import (
    Behavior,
    BehaviorRegistry,
    NodeRuntime,
    behavior,
    default_registry,
)
from iotstage.utils.exceptions import (
    BehaviorError,
    DuplicateBehaviorError,
    RestartWithoutCrashError,
    UnknownBehaviorError,
)
from tests.conftest import make_scenario

MS = 1_000_000
# 10 byte payload + 28 byte header at 1 Mbps behind 2 ms latency
HOP = 2_304_000


class Ticker(Behavior):
    def __init__(self, params):
        super().__init__(params)
        self.fired = []

    def on_start(self, ctx):
        ctx.set_timer(10 * MS, "tick")

    def on_timer(self, ctx, timer_id):
        self.fired.append(ctx.now())
        ctx.set_timer(10 * MS, "tick")


class Sender(Behavior):
    def on_start(self, ctx):
        ctx.send(self.params["dst"], b"0123456789", origin_stamp=ctx.now())


class Exploding(Behavior):
    def on_message(self, ctx, src, payload, origin_stamp):
        raise RuntimeError("boom")


class FaultAware(Behavior):
    def __init__(self, params):
        super().__init__(params)
        self.faults = []

    def on_fault(self, ctx, params):
        self.faults.append(params)


@pytest.fixture
def registry():
    registry = default_registry.copy()
    registry.register("ticker", Ticker)
    registry.register("sender", Sender)
    registry.register("exploding", Exploding)
    registry.register("fault_aware", FaultAware)
    return registry


def _node(node_id, name, x=0.0, **extra):
    return NodeSpec(id=node_id, behavior=name, position=Position(x, 0.0), **extra)


def _runtime(registry, *nodes):
    scenario = make_scenario(nodes=tuple(nodes))
    engine = Engine(seed=1)
    network = Network(engine, scenario)
    network.refresh_connectivity(PositionSnapshot(0, {n.id: n.position for n in nodes}))
    runtime = NodeRuntime(engine, network, scenario, registry)
    runtime.start_all()
    return engine, runtime


class TestBehaviorRegistry:
    """Test behavior registration."""

    def test_builtins_registered(self):
        for name in ("echo", "probe_sender", "probe_sink", "train", "crossing", "car"):
            assert name in default_registry

    def test_duplicate_name(self):
        registry = BehaviorRegistry()
        registry.register("x", Behavior)

        with pytest.raises(DuplicateBehaviorError):
            registry.register("x", Behavior)

    def test_unknown_name(self):
        with pytest.raises(UnknownBehaviorError):
            BehaviorRegistry().create("nope", {})

    def test_decorator_targets_registry(self):
        registry = BehaviorRegistry()

        @behavior("custom", registry)
        class Custom(Behavior):
            pass

        assert registry.names() == ["custom"]
        assert isinstance(registry.create("custom", {"k": "v"}), Custom)
        assert "custom" not in default_registry

    def test_copy_is_independent(self, registry):
        assert "ticker" in registry
        assert "ticker" not in default_registry


class TestLifecycle:
    """Test start, crash and restart."""

    def test_start_records_incarnation(self, registry):
        engine, runtime = _runtime(registry, _node("a", "ticker"))

        [start] = engine.trace.of_kind("START")

        assert start.attrs == {"incarnation": 1}
        assert runtime.is_alive("a")

    def test_timers_fire_periodically(self, registry):
        engine, runtime = _runtime(registry, _node("a", "ticker"))

        engine.run_until(35 * MS)

        assert runtime.state("a").behavior.fired == [10 * MS, 20 * MS, 30 * MS]

    def test_crash_discards_stale_timers(self, registry):
        """Test that timers armed before a crash never fire after restart."""
        engine, runtime = _runtime(registry, _node("a", "ticker"))
        first = runtime.state("a").behavior

        engine.run_until(5 * MS)
        runtime.crash("a")
        runtime.restart("a")
        engine.run_until(20 * MS)

        assert first.fired == []
        assert runtime.state("a").behavior.fired == [15 * MS]
        assert runtime.state("a").incarnation == 2

    def test_restart_running_node(self, registry):
        _, runtime = _runtime(registry, _node("a", "ticker"))

        with pytest.raises(RestartWithoutCrashError):
            runtime.restart("a")

    def test_cancel_timer(self, registry):
        engine, runtime = _runtime(registry, _node("a", "ticker"))
        state = runtime.state("a")
        state.timers.pop("tick")

        engine.run_until(50 * MS)

        assert state.behavior.fired == []

    def test_timer_delay_must_be_positive(self, registry):
        _, runtime = _runtime(registry, _node("a", "ticker"))

        with pytest.raises(ValueError):
            runtime.set_timer(runtime.state("a"), 0, "t")


class TestMessaging:
    """Test delivery, processing delay and crashes in flight."""

    def test_processing_delay_defers_send(self, registry):
        engine, _ = _runtime(
            registry,
            _node("a", "sender", params={"dst": "b"}),
            _node("b", "echo", 50.0, processing_delay=MS),
        )

        engine.run_until(20 * MS)
        sends = engine.trace.of_kind("SEND")

        assert [(s.subject, s.at) for s in sends] == [("a", 0), ("b", HOP + MS)]

    def test_crashed_receiver_drops(self, registry):
        engine, runtime = _runtime(
            registry, _node("a", "sender", params={"dst": "b"}), _node("b", "echo", 50.0)
        )

        engine.run_until(MS)
        runtime.crash("b")
        engine.run_until(20 * MS)

        [drop] = engine.trace.of_kind("DROP_CRASHED")
        assert drop.subject == "b"
        assert engine.trace.of_kind("DELIVERY") == []

    def test_crash_cancels_pending_outbound(self, registry):
        """Test that a send waiting on processing delay dies with its node."""
        engine, runtime = _runtime(
            registry,
            _node("a", "sender", params={"dst": "b"}),
            _node("b", "echo", 50.0, processing_delay=MS),
        )

        engine.run_until(3 * MS)
        runtime.crash("b")
        engine.run_until(20 * MS)

        assert [s.subject for s in engine.trace.of_kind("SEND")] == ["a"]

    def test_callback_error_wrapped(self, registry):
        engine, _ = _runtime(
            registry, _node("a", "sender", params={"dst": "b"}), _node("b", "exploding", 50.0)
        )

        with pytest.raises(BehaviorError) as exc:
            engine.run_until(20 * MS)

        assert exc.value.payload == {"node": "b", "callback": "on_message"}
        assert isinstance(exc.value.__cause__, RuntimeError)

    def test_external_receiver_goes_to_sink(self, registry):
        external = NodeSpec(
            id="d",
            position=Position(50.0, 0.0),
            external=ExternalSpec(listen_port=47001, peer="127.0.0.1:47002"),
        )
        scenario_nodes = (_node("a", "sender", params={"dst": "d"}), external)
        scenario = make_scenario(nodes=scenario_nodes)
        engine = Engine(seed=1)
        network = Network(engine, scenario)
        network.refresh_connectivity(PositionSnapshot(0, {n.id: n.position for n in scenario_nodes}))
        runtime = NodeRuntime(engine, network, scenario, registry)
        handed = []
        runtime.external_sink = lambda packet, node_id: handed.append((packet.payload, node_id))
        runtime.start_all()

        engine.run_until(20 * MS)

        assert handed == [(b"0123456789", "d")]
        assert runtime.state("d").behavior is None


class TestProbes:
    """Test latency probe recording."""

    def test_probe_recorded(self, registry):
        engine, runtime = _runtime(
            registry,
            _node("a", "sender", params={"dst": "b"}),
            _node("b", "probe_sink", 50.0, params={"tag": "lat"}),
        )

        engine.run_until(20 * MS)
        [probe] = runtime.probes
        [record] = engine.trace.of_kind("PROBE")

        assert probe.latency == HOP
        assert probe.receiver == "b"
        assert record.attrs == {"tag": "lat", "origin_stamp": 0, "latency_ns": HOP}

    def test_probe_needs_stamp(self, registry):
        _, runtime = _runtime(registry, _node("a", "ticker"))

        with pytest.raises(ValueError):
            runtime.record_probe(runtime.state("a"), "t", None)


class TestFaultHook:
    def test_inject_fault(self, registry):
        _, runtime = _runtime(registry, _node("a", "fault_aware"))

        assert runtime.inject_fault("a", {"mode": "stuck"})
        assert runtime.state("a").behavior.faults == [{"mode": "stuck"}]

        runtime.crash("a")

        assert runtime.inject_fault("a", {"mode": "stuck"}) is False
