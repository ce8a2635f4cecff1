"""Unit tests for the network model."""

import math

import numpy as np
import pytest

from iotstage.models.scenario import LinkSpec, NodeSpec, Position
from iotstage.services.engine import Engine
from iotstage.services.netsim import (
    BROADCAST,
    HEADER_OVERHEAD,
    MIN_DELAY_NS,
    CorruptionWindow,
    Network,
    PositionSnapshot,
    delivery_delay,
    in_range,
    transmission_delay,
)
from iotstage.utils.exceptions import IncompleteSnapshotError, UnknownNodeError, UnknownTargetError
from tests.conftest import make_scenario


def _network(scenario, seed=1):
    engine = Engine(seed=seed)
    network = Network(engine, scenario)
    positions = {n.id: n.position for n in scenario.nodes}
    network.refresh_connectivity(PositionSnapshot(0, positions))
    return engine, network


def _three_nodes(**overrides):
    nodes = (
        NodeSpec(id="a", behavior="echo", position=Position(0.0, 0.0)),
        NodeSpec(id="b", behavior="echo", position=Position(100.0, 0.0)),
        NodeSpec(id="c", behavior="echo", position=Position(100.1, 0.0)),
    )
    return make_scenario(nodes=nodes, **overrides)


class TestDelays:
    """Test delay arithmetic."""

    def test_transmission_delay(self):
        assert transmission_delay(65, 13_000_000.0) == 40_000

    def test_delay_without_jitter_draws_nothing(self, engine, small_scenario):
        delay = delivery_delay(small_scenario.wireless, 38, engine)

        assert delay == 2_000_000 + 304_000
        assert engine.draws == {}

    def test_jitter_bounds(self, engine, small_scenario):
        spec = small_scenario.wireless.model_copy(update={"jitter_max": 1_000_000})

        delays = [delivery_delay(spec, 38, engine) for _ in range(500)]

        assert min(delays) >= 2_304_000
        assert max(delays) <= 3_304_000
        assert engine.draws["jitter"] == 500

    def test_minimum_delay(self, engine, small_scenario):
        spec = small_scenario.wireless.model_copy(update={"latency": 1, "bandwidth": 1e15})

        assert delivery_delay(spec, 1, engine) == MIN_DELAY_NS


class TestRangeGating:
    """Test unit-disk connectivity."""

    def test_boundary_inclusive(self):
        assert in_range(Position(0, 0), Position(100, 0), 100.0)
        assert not in_range(Position(0, 0), Position(100.1, 0), 100.0)

    def test_broadcast_receivers(self):
        _, network = _network(_three_nodes())

        assert [r for r, _ in network.receivers("a", BROADCAST)] == ["b"]
        assert [r for r, _ in network.receivers("b", BROADCAST)] == ["a", "c"]

    def test_brute_force_oracle(self):
        """Test receiver sets against brute force on random snapshots."""
        ids = [f"n{i:02d}" for i in range(20)]
        nodes = tuple(
            NodeSpec(id=i, behavior="echo", position=Position(0.0, 0.0)) for i in ids
        )
        scenario = make_scenario(nodes=nodes)
        engine = Engine(seed=3)
        network = Network(engine, scenario)
        rng = np.random.default_rng(2024)
        radius = scenario.wireless.range

        for version in range(100):
            coords = rng.uniform(0, 300, size=(len(ids), 2))
            positions = {i: Position(float(x), float(y)) for i, (x, y) in zip(ids, coords)}
            network.refresh_connectivity(PositionSnapshot(version, positions))
            for src in ids:
                expected = [
                    dst for dst in ids
                    if dst != src
                    and math.hypot(positions[src].x - positions[dst].x,
                                   positions[src].y - positions[dst].y) <= radius
                ]
                assert [r for r, _ in network.receivers(src, BROADCAST)] == expected

    def test_unicast_out_of_range(self):
        engine, network = _network(_three_nodes())

        assert network.send("a", "c", b"x") == []
        assert engine.trace.of_kind("SEND")[0].attrs["receivers"] == 0

    def test_unicast_to_self_has_no_receivers(self):
        engine, network = _network(_three_nodes())

        assert network.receivers("a", "a") == []
        assert network.send("a", "a", b"x") == []
        engine.run_until(10_000_000)

        assert engine.trace.of_kind("SEND")[0].attrs["receivers"] == 0
        assert engine.trace.of_kind("DELIVERY") == []

    def test_incomplete_snapshot(self, small_scenario):
        network = Network(Engine(seed=1), small_scenario)

        with pytest.raises(IncompleteSnapshotError):
            network.refresh_connectivity(PositionSnapshot(0, {"a": Position(0, 0)}))

    def test_links_bypass_range(self):
        scenario = _three_nodes(links=(LinkSpec(a="a", b="c", latency=500_000, bandwidth=1e9),))
        _, network = _network(scenario)

        [(receiver, channel)] = network.receivers("a", "c")

        assert receiver == "c"
        assert channel.selector == "link:a:c"


class TestSend:
    """Test packet sends and drops."""

    def test_send_records_and_schedules(self):
        engine, network = _network(_three_nodes())

        events = network.send("b", BROADCAST, b"0123456789", origin_stamp=0)
        send = engine.trace.of_kind("SEND")[0]

        assert len(events) == 2
        assert send.attrs["size_bytes"] == 10 + HEADER_OVERHEAD
        assert send.attrs["snapshot"] == 0
        assert send.attrs["receivers"] == 2

    def test_delivery_recorded(self):
        engine, network = _network(_three_nodes())
        network.send("a", "b", b"0123456789")

        engine.run_until(10_000_000)
        [delivery] = engine.trace.of_kind("DELIVERY")

        assert delivery.subject == "b"
        assert delivery.at == 2_304_000
        assert delivery.attrs["latency_ns"] == 2_304_000

    def test_unknown_nodes(self):
        _, network = _network(_three_nodes())

        with pytest.raises(UnknownNodeError):
            network.send("ghost", BROADCAST, b"")
        with pytest.raises(UnknownNodeError):
            network.send("a", "ghost", b"")

    def test_drop_precedence(self):
        """Test LINKDOWN before PARTITION before LOSS."""
        engine, network = _network(_three_nodes())
        channel = network.wireless
        channel.enabled = False
        channel.partition = (frozenset({"a"}),)
        channel.spec = channel.spec.model_copy(update={"loss": 1.0})

        network.send("a", "b", b"x")
        channel.enabled = True
        network.send("a", "b", b"x")
        channel.partition = None
        network.send("a", "b", b"x")

        kinds = [r.kind for r in engine.trace.records if r.kind.startswith("DROP_")]
        assert kinds == ["DROP_LINKDOWN", "DROP_PARTITION", "DROP_LOSS"]
        assert "loss" not in engine.draws

    def test_fractional_loss_draws_per_receiver(self):
        engine, network = _network(_three_nodes())
        network.wireless.spec = network.wireless.spec.model_copy(update={"loss": 0.5})

        network.send("b", BROADCAST, b"x")

        assert engine.draws["loss"] == 2

    def test_residual_partition_group(self):
        """Test that unlisted nodes share one group."""
        _, network = _network(_three_nodes())
        network.wireless.partition = (frozenset({"a"}),)

        assert network.wireless.partitioned("a", "b")
        assert not network.wireless.partitioned("b", "c")

    def test_corruption_flips_one_byte(self):
        engine, network = _network(_three_nodes())
        received = []
        network.deliver_hook = lambda packet, receiver: received.append(packet)
        network.wireless.corruption = CorruptionWindow(probability=1.0, until=10**12)

        network.send("a", "b", b"\x00\x00\x00\x00")
        engine.run_until(10_000_000)

        [packet] = received
        [corrupt] = engine.trace.of_kind("CORRUPT")
        assert packet.payload[corrupt.attrs["byte_index"]] == 0xFF
        assert sum(packet.payload) == 0xFF

    def test_corruption_window_expires(self):
        engine, network = _network(_three_nodes())
        network.wireless.corruption = CorruptionWindow(probability=1.0, until=1_000)

        network.send("a", "b", b"\x00")
        engine.run_until(10_000_000)

        assert engine.trace.of_kind("CORRUPT") == []


class TestChannelSelectors:
    def test_selectors(self):
        scenario = _three_nodes(links=(LinkSpec(a="a", b="c", latency=1, bandwidth=1.0),))
        _, network = _network(scenario)

        assert [c.selector for c in network.channels("*")] == ["wireless", "link:a:c"]
        assert network.channels("link:c:a")[0].selector == "link:a:c"
        with pytest.raises(UnknownTargetError):
            network.channels("link:a:b")
        with pytest.raises(UnknownTargetError):
            network.channels("bogus")
