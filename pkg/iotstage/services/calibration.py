"""
Channel calibration from round-trip measurements

Probes a UDP echo endpoint, then maps the RTT distribution onto the
uniform-jitter channel model: one-way latency from the median, jitter_max
from the spread between the minimum and the 95th percentile.
"""

import logging
import secrets
import select
import socket
import struct
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from iotstage.config import Config
from iotstage.models.scenario import NS_PER_MS, NS_PER_US
from iotstage.utils.exceptions import CalibrationError, EstimateImpossibleError

logger = logging.getLogger(__name__)

PROBE = struct.Struct(">QQ")  # sequence, nonce

METHOD = (
    "latency = median(rtt)/2; jitter_max = max(0, (p95(rtt) - min(rtt))/2); "
    "loss = lost/(lost + samples); assumes symmetric one-way delay"
)


@dataclass(frozen=True)
class ChannelEstimate:
    """Estimated channel parameters; durations in ns"""

    latency: int
    jitter_max: int
    loss: float
    sample_count: int
    method: str = METHOD

    def __post_init__(self):
        if not 0.0 <= self.loss <= 1.0:
            raise ValueError("loss must lie in [0, 1]")

    def to_dict(self) -> Dict:
        return {
            "latency_us": self.latency / NS_PER_US,
            "jitter_max_us": self.jitter_max / NS_PER_US,
            "loss": self.loss,
            "sample_count": self.sample_count,
            "method": self.method,
        }


@dataclass
class ProbeResult:
    samples: List[int] = field(default_factory=list)  # RTTs in ns
    lost: int = 0

    @property
    def sent(self) -> int:
        return len(self.samples) + self.lost


def estimate(samples: Sequence[float], lost: int = 0) -> ChannelEstimate:
    """
    Estimate channel parameters from RTT samples in ns

    Raises:
        EstimateImpossibleError: no samples
    """
    if lost < 0:
        raise ValueError("lost must be >= 0")
    rtts = np.asarray(samples, dtype=float)
    if rtts.size == 0:
        raise EstimateImpossibleError(
            f"no replies ({lost} probes lost), cannot estimate", payload={"lost": lost}
        )
    latency = float(np.median(rtts)) / 2
    jitter_max = max(0.0, (float(np.percentile(rtts, 95)) - float(rtts.min())) / 2)
    return ChannelEstimate(
        latency=int(round(latency)),
        jitter_max=int(round(jitter_max)),
        loss=lost / (lost + rtts.size),
        sample_count=int(rtts.size),
    )


def parse_target(target: str) -> Tuple[str, int]:
    host, sep, port = target.rpartition(":")
    if not sep or not host or not port.isdigit():
        raise CalibrationError(f"target must read host:port, got {target!r}")
    return host, int(port)


def probe(
    target: str,
    k: int,
    spacing_ms: Optional[int] = None,
    timeout_ms: Optional[int] = None,
    clock: Callable[[], int] = time.monotonic_ns,
) -> ProbeResult:
    """
    Send k probes to a UDP echo endpoint and collect RTTs

    Probes leave at fixed spacing; each carries its sequence number and a
    random nonce. A reply counts once, and only if it arrives within
    timeout of its probe.

    Raises:
        CalibrationError: socket failure
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    spacing = (spacing_ms if spacing_ms is not None else Config.CALIBRATION_SPACING_MS) * NS_PER_MS
    timeout = (timeout_ms if timeout_ms is not None else Config.CALIBRATION_TIMEOUT_MS) * NS_PER_MS
    address = parse_target(target)

    outstanding: Dict[int, Tuple[int, int]] = {}
    result = ProbeResult()
    try:
        with socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as sock:
            start = clock()
            seq = 0
            deadline = start + (k - 1) * spacing + timeout
            while True:
                now = clock()
                if seq < k and now >= start + seq * spacing:
                    nonce = secrets.randbits(64)
                    outstanding[seq] = (nonce, now)
                    sock.sendto(PROBE.pack(seq, nonce), address)
                    seq += 1
                    continue
                if now >= deadline:
                    break
                wake = deadline if seq >= k else min(deadline, start + seq * spacing)
                ready, _, _ = select.select([sock], [], [], max(0, wake - now) / 1e9)
                if ready:
                    _receive(sock, outstanding, result, clock(), timeout)
    except OSError as e:
        raise CalibrationError(f"probing {target} failed: {e}") from e

    result.lost = k - len(result.samples)
    logger.info(
        "Probing finished",
        extra={"target": target, "samples": len(result.samples), "lost": result.lost},
    )
    return result


def _receive(sock, outstanding, result: ProbeResult, received_at: int, timeout: int) -> None:
    try:
        data, _ = sock.recvfrom(2048)
    except ConnectionRefusedError:
        return
    if len(data) != PROBE.size:
        return
    seq, nonce = PROBE.unpack(data)
    entry = outstanding.get(seq)
    if entry is None or entry[0] != nonce:
        return  # duplicate or stranger
    rtt = received_at - entry[1]
    del outstanding[seq]
    if rtt <= timeout:
        result.samples.append(rtt)


def calibrate(target: str, k: int, spacing_ms=None, timeout_ms=None) -> ChannelEstimate:
    """Probe then estimate."""
    result = probe(target, k, spacing_ms, timeout_ms)
    return estimate(result.samples, result.lost)
