"""Prometheus metrics for simulation runs."""

from prometheus_client import REGISTRY, Counter, Histogram, write_to_textfile

# Engine metrics
events_processed_total = Counter(
    "iotstage_events_processed_total", "Total discrete events processed", ["kind"]
)

# Network metrics
packets_total = Counter(
    "iotstage_packets_total",
    "Packet outcomes per receiver",
    ["outcome"],  # sent, delivered, drop_loss, drop_partition, ...
)

# Fault metrics
faults_applied_total = Counter(
    "iotstage_faults_applied_total", "Total faults applied", ["kind"]
)

# Coordinator metrics
window_lag_seconds = Histogram(
    "iotstage_window_lag_seconds",
    "Wall-clock lag at window start in paced modes",
    buckets=[0.0005, 0.001, 0.005, 0.01, 0.02, 0.05, 0.1, 0.5],
)

runs_total = Counter("iotstage_runs_total", "Total runs", ["mode", "status"])

# Gateway metrics
gateway_datagrams_total = Counter(
    "iotstage_gateway_datagrams_total",
    "Datagrams crossing the hardware-in-the-loop gateway",
    ["direction"],  # in, out, rejected
)


def track_event(kind: str):
    """Track one processed event."""
    events_processed_total.labels(kind=kind).inc()


def track_packet(outcome: str):
    """Track a send or a per-receiver outcome."""
    packets_total.labels(outcome=outcome.lower()).inc()


def track_fault(kind: str):
    """Track fault application."""
    faults_applied_total.labels(kind=kind).inc()


def track_window_lag(lag_ns: int):
    """Track pacing lag of one window."""
    window_lag_seconds.observe(lag_ns / 1e9)


def track_run(mode: str, success: bool):
    """Track run completion."""
    status = "completed" if success else "aborted"
    runs_total.labels(mode=mode, status=status).inc()


def track_datagram(direction: str):
    """Track gateway traffic."""
    gateway_datagrams_total.labels(direction=direction).inc()


def write_metrics(path: str):
    """Write the registry in Prometheus text format."""
    write_to_textfile(path, REGISTRY)
