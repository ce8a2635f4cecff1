"""
Latency probes and run reports

Per-run summaries plus the two-level aggregation across repeated runs:
per-run means first, then mean and sample std across runs. Pooled
statistics over all samples are reported alongside.
"""

import json
import logging
import re
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Tuple

import numpy as np

from iotstage.utils.exceptions import IoTStageError

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
AGGREGATION = "two-level: mean and sample std (n-1) of per-run means; pooled over all samples"

_SUMMARY_RE = re.compile(r"^\s*(-?\d+(?:\.\d+)?) ± (\d+(?:\.\d+)?) ms\s*$")


@dataclass(frozen=True)
class ProbeRecord:
    tag: str
    origin_stamp: int
    received_at: int
    receiver: str

    @property
    def latency(self) -> int:
        return self.received_at - self.origin_stamp


@dataclass(frozen=True)
class Summary:
    """Summary statistics of durations in ns"""

    mean: float
    std: float
    min: float
    max: float
    count: int
    std_defined: bool = True

    def to_dict(self) -> Dict:
        mean_ms, std_ms = self.mean / 1e6, self.std / 1e6
        out = {
            "mean_ms": mean_ms,
            "std_ms": std_ms,
            "min_ms": self.min / 1e6,
            "max_ms": self.max / 1e6,
            "count": self.count,
            "summary": format_summary(mean_ms, std_ms),
        }
        if not self.std_defined:
            out["std_undefined"] = True
        return out


def summarize(samples: Iterable[float]) -> Summary:
    """
    Mean, sample standard deviation (n-1), min and max

    Raises:
        ValueError: samples is empty
    """
    values = np.asarray(list(samples), dtype=float)
    if values.size == 0:
        raise ValueError("cannot summarize an empty sample list")
    std_defined = values.size >= 2
    return Summary(
        mean=float(values.mean()),
        std=float(values.std(ddof=1)) if std_defined else 0.0,
        min=float(values.min()),
        max=float(values.max()),
        count=int(values.size),
        std_defined=std_defined,
    )


def format_summary(mean_ms: float, std_ms: float) -> str:
    return f"{mean_ms:.2f} ± {std_ms:.2f} ms"


def parse_summary(text: str) -> Tuple[float, float]:
    """Read back the two numbers of a formatted summary."""
    match = _SUMMARY_RE.match(text)
    if not match:
        raise ValueError(f"not a summary string: {text!r}")
    return float(match.group(1)), float(match.group(2))


def distance_traveled(speed: float, latency_ns: float) -> float:
    """Meters covered at `speed` m/s during `latency_ns`."""
    if speed < 0:
        raise ValueError("speed must not be negative")
    return speed * latency_ns / 1e9


@dataclass
class RunReport:
    run_index: int
    seed: int
    samples: Dict[str, List[int]]
    trace_hash: str
    drops: Dict[str, int]
    windows: int = 0
    events: int = 0
    max_lag_ns: Optional[int] = None

    @property
    def tags(self) -> Dict[str, Summary]:
        return {tag: summarize(values) for tag, values in self.samples.items() if values}

    def to_dict(self) -> Dict:
        return {
            "run_index": self.run_index,
            "tags": {tag: summary.to_dict() for tag, summary in self.tags.items()},
            "trace_hash": self.trace_hash,
            "drops": dict(self.drops),
        }


def build_run_report(
    run_index: int,
    seed: int,
    probes: Iterable[ProbeRecord],
    trace_hash: str,
    trace_counts: Mapping[str, int],
    windows: int = 0,
    events: int = 0,
    max_lag_ns: Optional[int] = None,
) -> RunReport:
    samples: Dict[str, List[int]] = defaultdict(list)
    for probe in probes:
        samples[probe.tag].append(probe.latency)
    drops = {k: v for k, v in sorted(trace_counts.items()) if k.startswith("DROP_")}
    return RunReport(
        run_index=run_index,
        seed=seed,
        samples={tag: samples[tag] for tag in sorted(samples)},
        trace_hash=trace_hash,
        drops=drops,
        windows=windows,
        events=events,
        max_lag_ns=max_lag_ns,
    )


@dataclass
class MultiRunReport:
    scenario_name: str
    seed: int
    runs: List[RunReport]
    overrides: Dict = field(default_factory=dict)
    reference_speeds: Dict[str, Tuple[str, float]] = field(default_factory=dict)
    partial: bool = False

    @property
    def n_runs(self) -> int:
        return len(self.runs)

    @property
    def tag_names(self) -> List[str]:
        return sorted({tag for run in self.runs for tag, values in run.samples.items() if values})

    @property
    def tags(self) -> Dict[str, Summary]:
        """
        Two-level statistics: summary over per-run means

        A single run reports its own sample statistics.
        """
        if self.n_runs == 1:
            return self.runs[0].tags
        out = {}
        for tag in self.tag_names:
            means = [run.tags[tag].mean for run in self.runs if run.samples.get(tag)]
            out[tag] = summarize(means)
        return out

    @property
    def pooled(self) -> Dict[str, Summary]:
        out = {}
        for tag in self.tag_names:
            values = [v for run in self.runs for v in run.samples.get(tag, [])]
            out[tag] = summarize(values)
        return out

    @property
    def distances(self) -> Dict[str, Dict]:
        headline = self.tags
        out = {}
        for tag, (entity, speed) in sorted(self.reference_speeds.items()):
            if tag in headline:
                out[tag] = {
                    "entity": entity,
                    "speed_mps": speed,
                    "distance_m": distance_traveled(speed, headline[tag].mean),
                }
        return out

    def summary_lines(self) -> List[str]:
        return [f"{tag}: {summary.to_dict()['summary']}" for tag, summary in self.tags.items()]

    def to_dict(self) -> Dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "scenario_name": self.scenario_name,
            "seed": self.seed,
            "n_runs": self.n_runs,
            "partial": self.partial,
            "aggregation": AGGREGATION,
            "overrides": dict(self.overrides),
            "tags": {tag: s.to_dict() for tag, s in self.tags.items()},
            "pooled": {tag: s.to_dict() for tag, s in self.pooled.items()},
            "distances": self.distances,
            "drops": _sum_drops(self.runs),
            "trace_hashes": [run.trace_hash for run in self.runs],
        }


def _sum_drops(runs: Iterable[RunReport]) -> Dict[str, int]:
    total: Dict[str, int] = defaultdict(int)
    for run in runs:
        for reason, count in run.drops.items():
            total[reason] += count
    return dict(sorted(total.items()))


def render_report(report) -> str:
    return json.dumps(report.to_dict(), indent=2, ensure_ascii=False) + "\n"


def emit_report(report, path) -> None:
    """
    Write a RunReport or MultiRunReport as JSON

    Equal reports produce identical bytes.
    """
    try:
        Path(path).write_text(render_report(report), encoding="utf-8")
    except OSError as e:
        raise IoTStageError(f"cannot write report {path}: {e}", code="REPORT_WRITE_FAILED") from e
    logger.info("Report written", extra={"path": str(path)})


def probe_samples_from_trace(path, receivers: Optional[Mapping[str, str]] = None) -> Dict[str, List[int]]:
    """
    Latency samples per tag, read back from a JSON Lines trace file

    receivers restricts a tag to samples recorded at one node.
    """
    receivers = receivers or {}
    samples: Dict[str, List[int]] = defaultdict(list)
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            record = json.loads(line)
            if record["kind"] != "PROBE":
                continue
            tag = record["attrs"]["tag"]
            if receivers.get(tag, record["subject"]) == record["subject"]:
                samples[record["attrs"]["tag"]].append(record["attrs"]["latency_ns"])
    return dict(samples)
