"""Unit tests for wall-clock pacing."""

import pytest

from iotstage.services.pacing import Pacer


class FakeClock:
    """Clock that only moves when something sleeps"""

    def __init__(self, now=100.0):
        self.now = now
        self.sleeps = []

    def __call__(self):
        return self.now

    def sleep(self, seconds):
        self.sleeps.append(seconds)
        self.now += seconds


class TestPacer:
    """Test the sim-to-wall mapping."""

    def test_fast_mode_never_waits(self, mocker):
        sleep = mocker.Mock()
        pacer = Pacer(None, sleep=sleep)

        assert pacer.wait_for(10**12) is None
        assert not pacer.enabled
        sleep.assert_not_called()

    def test_realtime_sleeps_to_target(self):
        clock = FakeClock()
        pacer = Pacer(1.0, clock=clock, sleep=clock.sleep)
        pacer.start()

        lag = pacer.wait_for(500_000_000)

        assert clock.sleeps == [pytest.approx(0.5)]
        assert lag == 0
        assert pacer.elapsed() == pytest.approx(0.5)

    def test_scaled_mode(self):
        """Test that rtf 2 runs simulated time twice as fast."""
        clock = FakeClock()
        pacer = Pacer(2.0, clock=clock, sleep=clock.sleep)
        pacer.start()

        pacer.wait_for(2_000_000_000)

        assert pacer.elapsed() == pytest.approx(1.0)

    def test_lag_reported_when_behind(self):
        clock = FakeClock()
        pacer = Pacer(1.0, clock=clock, sleep=clock.sleep)
        pacer.start()
        clock.now += 0.25

        lag = pacer.wait_for(100_000_000)

        assert clock.sleeps == []
        assert lag == pytest.approx(150_000_000, abs=1_000)

    def test_first_wait_starts_clock(self):
        clock = FakeClock()
        pacer = Pacer(1.0, clock=clock, sleep=clock.sleep)

        pacer.wait_for(0)

        assert pacer.started_at == 100.0

    def test_rtf_must_be_positive(self):
        with pytest.raises(ValueError):
            Pacer(0.0)
