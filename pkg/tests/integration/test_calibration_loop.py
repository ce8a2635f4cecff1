"""Calibration against a loopback echo endpoint, fed back into a simulation."""

import json

import pytest

from iotstage.cli import main
from iotstage.integrations.udp_echo import EchoResponder
from iotstage.services.calibration import calibrate, estimate, probe
from iotstage.services.coordinator import Coordinator, RunConfig
from iotstage.services.scenario_loader import load_scenario, merge_calibration
from iotstage.utils.exceptions import EstimateImpossibleError
from tests.conftest import FIXTURES, free_udp_port

MS = 1_000_000


@pytest.fixture
def responder():
    """Echo endpoint with a 4 ms turnaround"""
    with EchoResponder(delay_ms=4.0) as responder:
        yield responder


def _target(responder):
    host, port = responder.address
    return f"{host}:{port}"


class TestProbing:
    """Test probing a live endpoint."""

    def test_all_replies_counted(self, responder):
        result = probe(_target(responder), 20, spacing_ms=5, timeout_ms=300)

        assert len(result.samples) == 20
        assert result.lost == 0
        assert min(result.samples) >= 4 * MS

    def test_estimate_from_loopback(self, responder):
        fitted = calibrate(_target(responder), 20, spacing_ms=5, timeout_ms=300)

        assert fitted.sample_count == 20
        assert fitted.loss == 0.0
        assert 2 * MS <= fitted.latency < 20 * MS

    def test_silent_target(self):
        with pytest.raises(EstimateImpossibleError):
            calibrate(f"127.0.0.1:{free_udp_port()}", 3, spacing_ms=5, timeout_ms=50)


class TestFidelityLoop:
    """Test that a calibrated simulation reproduces the measured round trip."""

    def test_simulated_rtt_matches_measurement(self, responder):
        measured = probe(_target(responder), 20, spacing_ms=5, timeout_ms=300)
        fitted = estimate(measured.samples, measured.lost)
        scenario = merge_calibration(
            load_scenario(FIXTURES / "echo_link.json"), fitted, "link:sender:echo"
        )

        report = Coordinator().run(RunConfig(scenario))
        simulated = report.tags["link_rtt"]
        link = scenario.links[0]
        floor = 2 * link.latency

        assert floor <= simulated.min
        assert simulated.max <= floor + 2 * link.jitter_max + MS


class TestCalibrateCommand:
    def test_prints_and_merges(self, responder, tmp_path, capsys):
        path = tmp_path / "echo.json"
        path.write_text((FIXTURES / "echo_link.json").read_text())

        code = main([
            "calibrate", "--target", _target(responder), "--probes", "10",
            "--spacing-ms", "5", "--timeout-ms", "300",
            "--merge-into", str(path), "--channel", "link:sender:echo",
        ])
        printed = json.loads(capsys.readouterr().out)

        assert code == 0
        assert printed["sample_count"] == 10
        assert load_scenario(path).links[0].latency >= 2 * MS

    def test_silent_target_exit_code(self):
        code = main(["calibrate", "--target", f"127.0.0.1:{free_udp_port()}",
                     "--probes", "2", "--spacing-ms", "5", "--timeout-ms", "50"])

        assert code == 3
