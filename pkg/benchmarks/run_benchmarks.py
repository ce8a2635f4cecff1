"""Performance benchmarking tools."""

import json
import os
import time
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from typing import Callable, List

import numpy as np

OUTPUT_DIR = os.path.dirname(os.path.abspath(__file__))


@dataclass
class BenchmarkResult:
    """Benchmark result data."""

    name: str
    total_iterations: int
    total_duration: float
    avg_duration: float
    min_duration: float
    max_duration: float
    p50_duration: float
    p95_duration: float
    p99_duration: float
    ops_per_second: float
    timestamp: str


class PerformanceBenchmark:
    """Performance benchmarking utility."""

    def __init__(self, name: str):
        self.name = name
        self.durations: List[float] = []
        self.total_duration = 0.0

    def run(self, func: Callable, iterations: int = 1000, warmup: int = 100):
        """
        Run benchmark.

        Args:
            func: Function to benchmark
            iterations: Number of iterations
            warmup: Warmup iterations (not counted)
        """
        print(f"Running benchmark: {self.name} ({warmup} warmup, {iterations} timed)")

        for _ in range(warmup):
            func()

        self.durations = []
        started = time.perf_counter()
        for _ in range(iterations):
            start = time.perf_counter()
            func()
            self.durations.append(time.perf_counter() - start)
        self.total_duration = time.perf_counter() - started

        return self.get_results()

    def get_results(self) -> BenchmarkResult:
        """Calculate and return benchmark results."""
        if not self.durations:
            raise ValueError("No benchmark data available")

        durations = np.asarray(self.durations)
        p50, p95, p99 = np.percentile(durations, [50, 95, 99])
        return BenchmarkResult(
            name=self.name,
            total_iterations=int(durations.size),
            total_duration=self.total_duration,
            avg_duration=float(durations.mean()),
            min_duration=float(durations.min()),
            max_duration=float(durations.max()),
            p50_duration=float(p50),
            p95_duration=float(p95),
            p99_duration=float(p99),
            ops_per_second=durations.size / self.total_duration,
            timestamp=datetime.now(timezone.utc).isoformat(),
        )

    def print_results(self, result: BenchmarkResult):
        """Print formatted results."""
        print(f"\n{'='*60}")
        print(f"Benchmark Results: {result.name}")
        print(f"{'='*60}")
        print(f"Total Iterations:  {result.total_iterations}")
        print(f"Total Duration:    {result.total_duration:.2f}s")
        print("\nLatency:")
        print(f"  Average:         {result.avg_duration*1000:.3f}ms")
        print(f"  P50 (median):    {result.p50_duration*1000:.3f}ms")
        print(f"  P95:             {result.p95_duration*1000:.3f}ms")
        print(f"  P99:             {result.p99_duration*1000:.3f}ms")
        print(f"\nThroughput:        {result.ops_per_second:.2f} ops/s")
        print(f"{'='*60}\n")

    def save_results(self, result: BenchmarkResult, filename: str):
        """Save results to JSON file."""
        path = os.path.join(OUTPUT_DIR, filename)
        with open(path, "w") as f:
            json.dump(asdict(result), f, indent=2)
        print(f"Results saved to: {path}")


def benchmark_broadcast_send():
    """Benchmark one broadcast among 50 wireless nodes, deliveries included."""
    from iotstage.models.scenario import NodeSpec, Position
    from iotstage.services.engine import Engine, Trace
    from iotstage.services.netsim import BROADCAST, Network, PositionSnapshot
    from iotstage.services.scenario_loader import parse_scenario

    rng = np.random.default_rng(1)
    ids = [f"n{i:02d}" for i in range(50)]
    positions = {i: Position(*map(float, rng.uniform(0, 400, 2))) for i in ids}
    scenario = parse_scenario(
        json.dumps({
            "name": "bench", "duration_ms": 1000, "seed": 1,
            "wireless": {"range_m": 200.0, "latency_ms": 2, "bandwidth_bps": 13000000.0,
                         "jitter_max_ms": 1},
        })
    ).model_copy(update={
        "nodes": tuple(NodeSpec(id=i, behavior="echo", position=positions[i]) for i in ids)
    })
    engine = Engine(seed=1, trace=Trace(keep_records=False))
    network = Network(engine, scenario)
    network.refresh_connectivity(PositionSnapshot(0, positions))
    horizon = [0]

    def send():
        network.send("n00", BROADCAST, b"\x01\x05train", origin_stamp=engine.now)
        horizon[0] += 10_000_000
        engine.run_until(horizon[0])

    benchmark = PerformanceBenchmark("Broadcast send (50 nodes)")
    result = benchmark.run(send, iterations=5000, warmup=500)
    benchmark.print_results(result)
    benchmark.save_results(result, "broadcast_send.json")
    return result


def benchmark_levelcrossing_run():
    """Benchmark a full fast-mode run of the reference scenario."""
    from iotstage.services.coordinator import Coordinator, RunConfig
    from iotstage.services.scenario_loader import load_scenario

    scenario = load_scenario(os.path.join(OUTPUT_DIR, "..", "scenarios", "levelcrossing.json"))
    coordinator = Coordinator()

    benchmark = PerformanceBenchmark("Level crossing run (60 s simulated, fast)")
    result = benchmark.run(lambda: coordinator.run(RunConfig(scenario)), iterations=20, warmup=2)
    benchmark.print_results(result)
    benchmark.save_results(result, "levelcrossing_run.json")
    return result


def benchmark_validation():
    """Benchmark scenario validation."""
    from iotstage.services.scenario_loader import load_scenario
    from iotstage.services.scenario_validator import validate

    scenario = load_scenario(os.path.join(OUTPUT_DIR, "..", "scenarios", "levelcrossing.json"))

    benchmark = PerformanceBenchmark("Scenario validation")
    result = benchmark.run(lambda: validate(scenario), iterations=10000, warmup=1000)
    benchmark.print_results(result)
    benchmark.save_results(result, "validation.json")
    return result


if __name__ == "__main__":
    print("Starting performance benchmarks...\n")

    results = {
        "broadcast_send": benchmark_broadcast_send(),
        "levelcrossing_run": benchmark_levelcrossing_run(),
        "validation": benchmark_validation(),
    }

    print("\n" + "=" * 60)
    print("BENCHMARK SUMMARY")
    print("=" * 60)
    for name, result in results.items():
        print(
            f"{name:30s} {result.ops_per_second:>10.2f} ops/s  "
            f"(p95: {result.p95_duration*1000:>8.3f}ms)"
        )
    print("=" * 60)
