"""
Test configuration
"""

import json
import socket
from pathlib import Path

import pytest

from iotstage.models.scenario import Scenario, WirelessSpec
from iotstage.services.engine import Engine
from iotstage.services.scenario_loader import load_scenario, parse_scenario

ROOT = Path(__file__).resolve().parent.parent
SCENARIOS = ROOT / "scenarios"
FIXTURES = Path(__file__).resolve().parent / "fixtures"


def free_udp_port() -> int:
    with socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


def make_scenario(**overrides) -> Scenario:
    """Small valid scenario: two echo nodes 50 m apart on a 100 m wireless channel."""
    document = {
        "name": "small",
        "duration_ms": 1000,
        "step_ms": 100,
        "seed": 1,
        "wireless": {"range_m": 100.0, "latency_ms": 2, "bandwidth_bps": 1000000.0},
        "nodes": [
            {"id": "a", "behavior": "echo", "position": [0.0, 0.0]},
            {"id": "b", "behavior": "echo", "position": [50.0, 0.0]},
        ],
    }
    scenario = parse_scenario(json.dumps(document))
    return scenario.model_copy(update=overrides) if overrides else scenario


@pytest.fixture
def engine():
    """Engine with an in-memory trace"""
    return Engine(seed=1)


@pytest.fixture
def small_scenario():
    return make_scenario()


@pytest.fixture
def levelcrossing():
    """Shipped reference scenario"""
    return load_scenario(SCENARIOS / "levelcrossing.json")


@pytest.fixture
def levelcrossing_fixed(levelcrossing):
    """Reference scenario without jitter: latency samples are exact."""
    wireless: WirelessSpec = levelcrossing.wireless.model_copy(update={"jitter_max": 0})
    return levelcrossing.model_copy(update={"wireless": wireless})


@pytest.fixture
def fixture_path():
    return lambda name: FIXTURES / name
