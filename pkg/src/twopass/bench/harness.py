"""Measurement protocol: output eviction, median of repetitions, size sweeps, thread scaling.

Per iteration only the workload body is timed; the written buffer is then
evicted with ``clflush`` (or, where that is unavailable, by streaming over a
scratch buffer of 4x the LLC). Each repetition keeps running iterations until
it has spent ``min_runtime_seconds`` of wall time, and reports the timed total
divided by its iteration count. The record carries the median over
repetitions.
"""

from __future__ import annotations

import logging
import math
import os
import statistics
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .. import instrumented, tuning
from ..softmax import Algorithm, chunk_bounds, softmax_parallel
from ..vector_exp import TuningParams
from . import workloads as wl
from .topology import CacheTopology, detect_cache_topology

log = logging.getLogger(__name__)

EVICTION_MODES = ("clflush", "thrash", "none")
CSV_HEADER = ("workload,size_elements,threads,median_time_s,bytes_read,bytes_written,"
              "bandwidth_bytes_per_s,elements_per_s,eviction_mode")
MAX_CHUNK = 1 << 20


@dataclass(frozen=True)
class BenchConfig:
    workload: str
    size_elements: int
    threads: int = 1
    min_runtime_seconds: float = 5.0
    repetitions: int = 25
    eviction: str = "auto"  # auto picks clflush when the CPU has it
    params: TuningParams | None = None
    seed: int = 0

    def __post_init__(self):
        wl.get_workload(self.workload)
        if int(self.size_elements) < 1:
            raise ValueError("size_elements must be positive")
        if int(self.threads) < 1:
            raise ValueError("threads must be positive")
        if not self.min_runtime_seconds > 0:
            raise ValueError("min_runtime_seconds must be positive")
        if int(self.repetitions) < 1:
            raise ValueError("repetitions must be positive")
        if self.eviction not in ("auto",) + EVICTION_MODES:
            raise ValueError(f"eviction must be one of auto, {', '.join(EVICTION_MODES)}")


@dataclass(frozen=True)
class BenchRecord:
    config: BenchConfig
    median_time_s: float
    bytes_read: int
    bytes_written: int
    eviction_mode: str
    iterations: int = 0
    samples: tuple[float, ...] = field(default=(), repr=False)

    @property
    def workload(self) -> str:
        return self.config.workload

    @property
    def size_elements(self) -> int:
        return self.config.size_elements

    @property
    def threads(self) -> int:
        return self.config.threads

    @property
    def bandwidth_bytes_per_s(self) -> float:
        return (self.bytes_read + self.bytes_written) / self.median_time_s

    @property
    def elements_per_s(self) -> float:
        return self.size_elements / self.median_time_s

    @property
    def time_per_element_s(self) -> float:
        return self.median_time_s / self.size_elements

    def csv_row(self) -> str:
        return (f"{self.workload},{self.size_elements},{self.threads},{self.median_time_s:.9e},"
                f"{self.bytes_read},{self.bytes_written},{self.bandwidth_bytes_per_s:.6e},"
                f"{self.elements_per_s:.6e},{self.eviction_mode}")


# ---------------------------------------------------------------- protocol


def median_protocol(sample: Callable[[int], float], min_runtime: float, repetitions: int,
                    clock: Callable[[], float] = time.perf_counter) -> tuple[float, list[float], int]:
    """Median per-iteration time over ``repetitions`` runs.

    ``sample(k)`` runs k iterations and returns their summed timed seconds
    (eviction excluded). Each repetition runs until ``min_runtime`` seconds
    of ``clock`` time have passed. Returns (median, per-rep means, iterations
    of the last repetition).
    """
    t0 = clock()
    sample(1)  # warm-up: compilation, page faults
    warm = max(clock() - t0, 1e-9)
    chunk = int(min(MAX_CHUNK, max(1, min_runtime / (20 * warm))))
    means, iters = [], 0
    for _ in range(repetitions):
        timed, iters = 0.0, 0
        start = clock()
        while True:
            timed += sample(chunk)
            iters += chunk
            if clock() - start >= min_runtime:
                break
        means.append(timed / iters)
    return statistics.median(means), means, iters


def resolve_eviction(mode: str) -> str:
    if mode == "auto":
        return "clflush" if wl.clflush_available() else "thrash"
    if mode == "clflush" and not wl.clflush_available():
        raise RuntimeError("clflush is not available on this CPU; use eviction 'thrash'")
    return mode


def _thrash_buffer(mode: str, topology: CacheTopology | None) -> np.ndarray:
    if mode != "thrash":
        return np.zeros(1, np.float32)
    topology = topology or detect_cache_topology()
    return np.ones(4 * topology.llc_bytes // 4, np.float32)


def _serial_sampler(name, buf, params, mode, scratch):
    drive = wl.serial_driver(name)
    hz = wl.tsc_hz()
    u, a = params.unroll_factor, params.accumulator_count
    line = wl.CACHE_LINE // buf.y.itemsize
    code = EVICTION_MODES.index(mode) + 1 if mode != "none" else 0

    def sample(k):
        cycles, _ = drive(buf.x, buf.y, buf.sc, u, a, k, code, line, scratch)
        return cycles / hz

    return sample


def _pin_worker(counter=[0], lock=threading.Lock()):  # noqa: B006 - shared across pool threads
    # affinity hint: one logical CPU per worker, where the OS allows it
    if not hasattr(os, "sched_setaffinity"):
        return
    with lock:
        idx = counter[0]
        counter[0] += 1
    cpus = sorted(os.sched_getaffinity(0))
    try:
        os.sched_setaffinity(0, {cpus[idx % len(cpus)]})
    except OSError:
        pass


def _parallel_sampler(name, buf, params, threads, mode, scratch, pool, timer):
    u, a = params.unroll_factor, params.accumulator_count
    line = wl.CACHE_LINE // buf.y.itemsize
    body = wl.BODIES[name]
    chunks = [(buf.x[s:e], buf.y[s:e]) for s, e in chunk_bounds(buf.x.size, threads)]
    alg = Algorithm(name.removeprefix("softmax_")) if name in wl.SOFTMAX_WORKLOADS else None

    def once():
        if alg is not None:
            softmax_parallel(buf.x, buf.y, alg, threads, params, executor=pool)
        else:
            list(pool.map(lambda c: body(c[0], c[1], buf.sc, u, a), chunks))

    def sample(k):
        total = 0.0
        for _ in range(k):
            t0 = timer()
            once()
            total += timer() - t0
            buf.sc[5] = -buf.sc[5]
            if mode == "clflush":
                wl.flush_buffer(buf.y, line)
            elif mode == "thrash":
                wl.thrash(scratch)
        return total

    return sample


def run_benchmark(config: BenchConfig, topology: CacheTopology | None = None,
                  timer: Callable[[], float] | None = None,
                  clock: Callable[[], float] = time.perf_counter) -> BenchRecord:
    """Time one workload at one size and thread count.

    ``timer`` forces the Python-timed path (used for threads > 1, and by
    tests injecting a fake clock); otherwise serial runs are timed with the
    CPU cycle counter inside the compiled loop.
    """
    work = wl.get_workload(config.workload)
    mode = resolve_eviction(config.eviction)
    params = tuning.resolve(_tuning_kernel(config.workload), config.params)
    try:
        buf = wl.make_buffers(work, int(config.size_elements), config.seed)
        scratch = _thrash_buffer(mode, topology)
    except MemoryError as exc:
        raise MemoryError(f"cannot allocate buffers for {config.workload} at N={config.size_elements}") from exc

    pool = None
    if config.threads > 1 or timer is not None:
        pool = ThreadPoolExecutor(max_workers=config.threads, initializer=_pin_worker,
                                  thread_name_prefix="bench")
        sample = _parallel_sampler(config.workload, buf, params, config.threads, mode, scratch, pool,
                                   timer or time.perf_counter)
    else:
        sample = _serial_sampler(config.workload, buf, params, mode, scratch)
    try:
        median, means, iters = median_protocol(sample, config.min_runtime_seconds, config.repetitions, clock)
    finally:
        if pool is not None:
            pool.shutdown()
    read, written = work.cost(int(config.size_elements))
    return BenchRecord(config, median, read, written, mode, iters, tuple(means))


def _tuning_kernel(workload: str) -> str:
    if workload in wl.SOFTMAX_WORKLOADS:
        return workload
    if workload.startswith("two_pass"):
        return "softmax_two_pass"
    if workload.endswith("recompute"):
        return "softmax_recompute"
    return "softmax_reload"


# ---------------------------------------------------------------- sweeps


def parse_size(text: str | int, topology: CacheTopology | None = None, workload: str | None = None) -> int:
    """Element count from '4096', '16M', '1.5K' or '4xLLC' (LLC multiples need the topology)."""
    if isinstance(text, int):
        return text
    s = str(text).strip()
    low = s.lower()
    if low.endswith("llc"):
        mult = float(low[:-3].rstrip("x*") or 1)
        topology = topology or detect_cache_topology()
        esize = wl.get_workload(workload).element_bytes if workload else 4
        return int(mult * topology.llc_bytes // esize)
    units = {"k": 1 << 10, "m": 1 << 20, "g": 1 << 30}
    if low and low[-1] in units:
        return int(float(low[:-1]) * units[low[-1]])
    value = float(s)
    if value != int(value):
        raise ValueError(f"size must be an integer element count, got {text!r}")
    return int(value)


def geometric_sizes(min_size: int, max_size: int, per_octave: int = 2) -> list[int]:
    """Geometric element counts from min_size to max_size inclusive, distinct and ascending."""
    if not 1 <= min_size <= max_size:
        raise ValueError("need 1 <= min_size <= max_size")
    steps = max(1, math.ceil(math.log2(max_size / min_size) * per_octave)) if max_size > min_size else 0
    sizes = {min_size, max_size}
    for k in range(steps + 1):
        sizes.add(int(round(min_size * (max_size / min_size) ** (k / max(steps, 1)))))
    return sorted(sizes)


def default_sweep_sizes(topology: CacheTopology, per_octave: int = 2, elem_bytes: int = 4,
                        min_size: int = 256, beyond_llc: int = 3) -> list[int]:
    """Sweep crossing every cache boundary and ending with ``beyond_llc`` sizes at >= 4x LLC.

    The out-of-cache tail is spaced by sqrt(2) whatever ``per_octave`` is, to
    bound memory use.
    """
    llc4 = 4 * topology.llc_bytes // elem_bytes
    below = [s for s in geometric_sizes(min_size, llc4, per_octave) if s < llc4]
    tail = [int(llc4 * 2 ** (k / 2)) for k in range(beyond_llc)]
    return below + tail


def run_size_sweep(workloads: Sequence[str], sizes: Iterable[int], *, threads: int = 1,
                   min_runtime_seconds: float = 5.0, repetitions: int = 25, eviction: str = "auto",
                   topology: CacheTopology | None = None, seed: int = 0,
                   progress: Callable[[BenchRecord], None] | None = None) -> list[BenchRecord]:
    """Measure every workload at one size before moving to the next.

    Workloads compared at a size then run back to back, under the same host
    conditions. Records come back grouped by workload, then size.
    """
    records = []
    sizes = sorted(set(int(s) for s in sizes))
    for n in sizes:
        for name in workloads:
            cfg = BenchConfig(name, n, threads, min_runtime_seconds, repetitions, eviction, seed=seed)
            rec = run_benchmark(cfg, topology)
            records.append(rec)
            if progress:
                progress(rec)
    order = {name: i for i, name in enumerate(workloads)}
    return sorted(records, key=lambda r: (order[r.workload], r.size_elements))


def scaling_thread_counts(topology: CacheTopology, extra: Iterable[int] = ()) -> list[int]:
    return sorted({1, topology.core_count, topology.logical_cpu_count, *extra})


def run_thread_scaling(workloads: Sequence[str], threads: Iterable[int], *, size: int | None = None,
                       topology: CacheTopology | None = None, min_runtime_seconds: float = 5.0,
                       repetitions: int = 25, eviction: str = "auto", seed: int = 0,
                       progress: Callable[[BenchRecord], None] | None = None) -> list[BenchRecord]:
    """Fixed total size (default 4x LLC), partitioned across each thread count."""
    topology = topology or detect_cache_topology()
    records = []
    for name in workloads:
        n = size or parse_size("4xLLC", topology, name)
        for t in sorted(set(threads)):
            cfg = BenchConfig(name, n, t, min_runtime_seconds, repetitions, eviction, seed=seed)
            rec = run_benchmark(cfg, topology)
            records.append(rec)
            if progress:
                progress(rec)
    return records


def two_pass_ratio(records: Iterable[BenchRecord], min_size: int) -> float | None:
    """Median over sizes >= min_size of time(two_pass) / time(reload) per element."""
    by = {}
    for r in records:
        if r.size_elements >= min_size and r.threads == 1:
            by.setdefault(r.size_elements, {})[r.workload] = r.median_time_s
    ratios = [v["softmax_two_pass"] / v["softmax_reload"] for v in by.values()
              if "softmax_two_pass" in v and "softmax_reload" in v]
    return statistics.median(ratios) if ratios else None


# ---------------------------------------------------------------- cost model


ALGORITHM_WORKLOAD = {Algorithm.RECOMPUTE: "softmax_recompute", Algorithm.RELOAD: "softmax_reload",
                      Algorithm.TWO_PASS: "softmax_two_pass"}


def verify_cost_model(workload: Algorithm | str, n: int, seed: int = 0) -> tuple[int, int]:
    """Exact element (reads, writes) from the counting build of the algorithm."""
    name = str(getattr(workload, "value", workload))
    alg = Algorithm(name.removeprefix("softmax_").removeprefix("three_pass_"))
    t = instrumented.count(alg, n, seed)
    return t.reads, t.writes


# ---------------------------------------------------------------- output


def write_csv(records: Iterable[BenchRecord], out) -> None:
    out.write(CSV_HEADER + "\n")
    for r in records:
        out.write(r.csv_row() + "\n")


def write_plot_data(records: Iterable[BenchRecord], out, topology: CacheTopology | None = None) -> None:
    """Whitespace-separated columns, one gnuplot data block per workload; cache boundaries as comments."""
    records = list(records)
    out.write("# " + CSV_HEADER.replace(",", " ") + "\n")
    if topology is not None:
        for label, size in topology.boundaries():
            out.write(f"# boundary {label} bytes={size} f32_elements={size // 4} f64_elements={size // 8}\n")
    names = list(dict.fromkeys(r.workload for r in records))
    for i, name in enumerate(names):
        if i:
            out.write("\n\n")
        out.write(f"# workload {name}\n")
        for r in records:
            if r.workload == name:
                out.write(r.csv_row().replace(",", " ") + "\n")


def frequency_scaling_warnings(root: Path = Path("/sys/devices/system/cpu")) -> list[str]:
    """Reasons to distrust timings: non-performance governor, turbo enabled, or unknown state."""
    msgs = []
    gov = root / "cpu0" / "cpufreq" / "scaling_governor"
    if gov.exists():
        g = gov.read_text().strip()
        if g != "performance":
            msgs.append(f"CPU frequency governor is '{g}', not 'performance'; timings may vary")
    else:
        msgs.append("CPU frequency scaling state is not visible; cannot confirm a fixed clock")
    no_turbo = root / "intel_pstate" / "no_turbo"
    boost = root / "cpufreq" / "boost"
    if no_turbo.exists() and no_turbo.read_text().strip() == "0":
        msgs.append("turbo boost is enabled (intel_pstate/no_turbo = 0)")
    elif boost.exists() and boost.read_text().strip() == "1":
        msgs.append("frequency boost is enabled (cpufreq/boost = 1)")
    return msgs
