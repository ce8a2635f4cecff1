"""Wall-clock behavior of realtime and scaled runs."""

import time

import pytest

from iotstage.models.scenario import RunMode
from iotstage.services.coordinator import Coordinator, RunConfig
from iotstage.services.scenario_loader import load_scenario
from tests.conftest import FIXTURES

MS = 1_000_000


@pytest.fixture
def echo_link():
    return load_scenario(FIXTURES / "echo_link.json")


class TestPacedRuns:
    """Test that paced runs track the wall clock."""

    def test_realtime(self, echo_link):
        scenario = echo_link.model_copy(update={"mode": RunMode.REALTIME})

        started = time.monotonic()
        report = Coordinator().run(RunConfig(scenario))
        elapsed = time.monotonic() - started

        assert 2.0 <= elapsed <= 2.2
        assert report.max_lag_ns is not None
        assert report.max_lag_ns < 50 * MS

    def test_scaled_twice_as_fast(self, echo_link):
        scenario = echo_link.model_copy(update={"mode": RunMode.SCALED, "rtf": 2.0})

        started = time.monotonic()
        Coordinator().run(RunConfig(scenario))
        elapsed = time.monotonic() - started

        assert 1.0 <= elapsed <= 1.2

    def test_pacing_leaves_trace_unchanged(self, echo_link):
        """Test that the mode only changes wall time, not the simulated outcome."""
        fast = Coordinator().run(RunConfig(echo_link))
        scaled = Coordinator().run(
            RunConfig(echo_link.model_copy(update={"mode": RunMode.SCALED, "rtf": 4.0}))
        )

        assert fast.samples == scaled.samples
