"""Unit tests for channel calibration."""

import numpy as np
import pytest

from iotstage.services.calibration import (
    METHOD,
    PROBE,
    ChannelEstimate,
    ProbeResult,
    _receive,
    estimate,
    parse_target,
    probe,
)
from iotstage.utils.exceptions import CalibrationError, EstimateImpossibleError

MS = 1_000_000


class TestEstimate:
    """Test the RTT to channel parameter mapping."""

    def test_three_samples(self):
        result = estimate([10 * MS, 12 * MS, 14 * MS])

        assert result.latency == 6 * MS
        assert result.jitter_max == 1_900_000
        assert result.loss == 0.0
        assert result.sample_count == 3
        assert result.method == METHOD

    def test_constant_rtt_has_no_jitter(self):
        result = estimate([4 * MS] * 10)

        assert result.latency == 2 * MS
        assert result.jitter_max == 0

    def test_loss_ratio(self):
        assert estimate([MS, MS, MS], lost=1).loss == 0.25

    def test_scale_equivariance(self):
        """Test that scaling every RTT scales latency and jitter alike."""
        samples = [3 * MS, 5 * MS, 4 * MS, 9 * MS, 6 * MS]
        base = estimate(samples)
        scaled = estimate([3 * s for s in samples])

        assert scaled.latency == pytest.approx(3 * base.latency, abs=2)
        assert scaled.jitter_max == pytest.approx(3 * base.jitter_max, abs=2)

    def test_uniform_rtts(self):
        """Test recovery of a uniform channel from 1000 RTTs."""
        rng = np.random.default_rng(11)
        samples = rng.uniform(10 * MS, 14 * MS, size=1000)

        result = estimate(samples)

        assert result.latency == pytest.approx(6 * MS, abs=100_000)
        assert result.jitter_max == pytest.approx(1_900_000, abs=100_000)

    def test_no_samples(self):
        with pytest.raises(EstimateImpossibleError) as exc:
            estimate([], lost=5)

        assert exc.value.payload == {"lost": 5}

    def test_negative_lost(self):
        with pytest.raises(ValueError):
            estimate([MS], lost=-1)


class TestChannelEstimate:
    def test_to_dict_in_microseconds(self):
        document = ChannelEstimate(latency=4_200_400, jitter_max=1_000, loss=0.1, sample_count=9).to_dict()

        assert document["latency_us"] == 4200.4
        assert document["jitter_max_us"] == 1.0
        assert document["sample_count"] == 9

    def test_loss_range(self):
        with pytest.raises(ValueError):
            ChannelEstimate(latency=1, jitter_max=0, loss=1.5, sample_count=1)


class TestProbeInputs:
    """Test argument checks before any socket is opened."""

    @pytest.mark.parametrize("target", ["localhost", ":9000", "host:port"])
    def test_bad_target(self, target):
        with pytest.raises(CalibrationError):
            parse_target(target)

    def test_target(self):
        assert parse_target("127.0.0.1:9000") == ("127.0.0.1", 9000)

    def test_needs_one_probe(self):
        with pytest.raises(ValueError):
            probe("127.0.0.1:9000", 0)


class TestReceive:
    """Test reply matching."""

    @pytest.fixture
    def sock(self, mocker):
        return mocker.Mock()

    def test_matching_reply_counted_once(self, sock):
        outstanding = {0: (77, 1_000)}
        result = ProbeResult()
        sock.recvfrom.return_value = (PROBE.pack(0, 77), ("127.0.0.1", 9))

        _receive(sock, outstanding, result, 5_000, timeout=MS)
        _receive(sock, outstanding, result, 6_000, timeout=MS)

        assert result.samples == [4_000]

    def test_wrong_nonce_ignored(self, sock):
        outstanding = {0: (77, 1_000)}
        result = ProbeResult()
        sock.recvfrom.return_value = (PROBE.pack(0, 78), ("127.0.0.1", 9))

        _receive(sock, outstanding, result, 5_000, timeout=MS)

        assert result.samples == []
        assert 0 in outstanding

    def test_late_reply_not_counted(self, sock):
        outstanding = {0: (77, 0)}
        result = ProbeResult()
        sock.recvfrom.return_value = (PROBE.pack(0, 77), ("127.0.0.1", 9))

        _receive(sock, outstanding, result, 2 * MS, timeout=MS)

        assert result.samples == []
        assert outstanding == {}

    def test_short_datagram_ignored(self, sock):
        result = ProbeResult()
        sock.recvfrom.return_value = (b"\x00", ("127.0.0.1", 9))

        _receive(sock, {0: (1, 0)}, result, 10, timeout=MS)

        assert result.samples == []

    def test_sent_counts_lost(self):
        assert ProbeResult(samples=[1, 2], lost=3).sent == 5
