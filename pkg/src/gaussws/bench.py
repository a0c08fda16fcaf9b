"""Throughput of the noise generators on equal element counts."""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass

from .noise import OP_COUNTS, gen_gauss_bitwise, gen_gauss_boxmuller, gen_uniform
from .prng import StreamKey

__all__ = ["GENERATORS", "BenchResult", "bench_generator", "bench_all", "format_table", "to_csv"]

GENERATORS = {
    "gauss-bitwise": gen_gauss_bitwise,
    "gauss-boxmuller": gen_gauss_boxmuller,
    "uniform": gen_uniform,
}

CSV_HEADER = "generator,elements,reps,median_gelem_s,min_gelem_s,max_gelem_s,float_ops"


@dataclass(frozen=True)
class BenchResult:
    generator: str
    elements: int
    reps: int
    median: float  # 1e9 elements / second
    min: float
    max: float
    float_ops: int  # transcendental / division evaluations counted during the timed reps

    def csv_row(self) -> str:
        return f"{self.generator},{self.elements},{self.reps},{self.median:.6f},{self.min:.6f},{self.max:.6f},{self.float_ops}"


def bench_generator(name: str, elements: int, reps: int = 5, seed: int = 0) -> BenchResult:
    if reps < 5:
        raise ValueError("reps must be >= 5")
    fn = GENERATORS[name]
    key = StreamKey(seed)
    fn(elements, key)  # warm-up, not timed
    before = sum(OP_COUNTS.values())
    rates = []
    for r in range(reps):
        k = StreamKey(seed, 0, r + 1)
        t0 = time.perf_counter()
        fn(elements, k)
        rates.append(elements / (time.perf_counter() - t0) / 1e9)
    ops = sum(OP_COUNTS.values()) - before
    return BenchResult(name, elements, reps, statistics.median(rates), min(rates), max(rates), ops)


def bench_all(elements: int, reps: int = 5, seed: int = 0) -> list[BenchResult]:
    if elements < 2**16:
        raise ValueError("elements must be >= 2**16")
    return [bench_generator(name, elements, reps, seed) for name in GENERATORS]


def format_table(results) -> str:
    lines = [f"{'generator':<18}{'elements':>12}{'reps':>6}{'median':>10}{'min':>10}{'max':>10}{'float ops':>12}"]
    lines.append(f"{'':<36}{'(1e9 elements / s)':>30}")
    for r in results:
        lines.append(
            f"{r.generator:<18}{r.elements:>12}{r.reps:>6}{r.median:>10.4f}{r.min:>10.4f}{r.max:>10.4f}{r.float_ops:>12}"
        )
    return "\n".join(lines)


def to_csv(results) -> str:
    return "\n".join([CSV_HEADER] + [r.csv_row() for r in results]) + "\n"
