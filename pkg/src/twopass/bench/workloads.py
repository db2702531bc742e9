"""Benchmark workloads, their memory-cost model, and compiled timing drivers.

Each workload is a numba ``body(x, y, sc, unroll, acc) -> float`` doing one
iteration of work; ``sc`` carries precomputed scalars for pass-level
workloads (mu, sigma, m_sum, n_sum). Drivers time each body call with the
cycle counter and evict the written buffer between calls, outside the timed
region.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numba import njit

from .._intrinsics import clflush_element, read_cycle_counter
from ..softmax import (_exp_store_sum_kernel, _ext_accumulate_kernel, _ext_normalize_kernel, _max_kernel,
                       _scale_exp_kernel, _scale_inplace_kernel, _sum_exp_kernel)

CACHE_LINE = 64


@dataclass(frozen=True)
class Workload:
    name: str
    reads: int  # element reads per input element
    writes: int  # element writes per input element
    dtype: type
    inplace: bool = False  # operates on the output buffer only

    @property
    def element_bytes(self) -> int:
        return np.dtype(self.dtype).itemsize

    def cost(self, n: int) -> tuple[int, int]:
        """(bytes_read, bytes_written) for one iteration over n elements."""
        return self.reads * n * self.element_bytes, self.writes * n * self.element_bytes


_F32, _F64 = np.float32, np.float64
WORKLOADS = {w.name: w for w in (
    Workload("softmax_recompute", 3, 1, _F32),
    Workload("softmax_reload", 3, 2, _F32),
    Workload("softmax_two_pass", 2, 1, _F32),
    Workload("pass1_max", 1, 0, _F32),
    Workload("pass2_recompute", 1, 0, _F32),
    Workload("pass2_reload", 1, 1, _F32),
    Workload("pass3_recompute", 1, 1, _F32),
    Workload("pass3_reload", 1, 1, _F32, inplace=True),
    Workload("two_pass_p1", 1, 0, _F32),
    Workload("two_pass_p2", 1, 1, _F32),
    Workload("stream_copy", 1, 1, _F64),
    Workload("stream_scale", 1, 1, _F64),
    Workload("stream_scale_inplace", 1, 1, _F64, inplace=True),
)}
SOFTMAX_WORKLOADS = ("softmax_recompute", "softmax_reload", "softmax_two_pass")
STREAM_WORKLOADS = ("stream_copy", "stream_scale", "stream_scale_inplace")
STREAM_SCALAR = 3.0


def get_workload(name: str) -> Workload:
    try:
        return WORKLOADS[name]
    except KeyError:
        raise ValueError(f"unknown workload {name!r}; choose from {', '.join(WORKLOADS)}") from None


# ---------------------------------------------------------------- bodies


@njit(nogil=True, cache=True)
def _b_softmax_recompute(x, y, sc, u, a):
    mu = _max_kernel(x, u, a)
    s, c = _sum_exp_kernel(x, mu, u, a)
    _scale_exp_kernel(x, y, mu, s + c, u)
    return 0.0


@njit(nogil=True, cache=True)
def _b_softmax_reload(x, y, sc, u, a):
    mu = _max_kernel(x, u, a)
    s, c = _exp_store_sum_kernel(x, y, mu, u, a)
    _scale_inplace_kernel(y, s + c, u)
    return 0.0


@njit(nogil=True, cache=True)
def _b_softmax_two_pass(x, y, sc, u, a):
    m, c, n = _ext_accumulate_kernel(x, u, a)
    _ext_normalize_kernel(x, y, m + c, n, u)
    return 0.0


@njit(nogil=True, cache=True)
def _b_pass1_max(x, y, sc, u, a):
    return _max_kernel(x, u, a)


@njit(nogil=True, cache=True)
def _b_pass2_recompute(x, y, sc, u, a):
    s, c = _sum_exp_kernel(x, sc[0], u, a)
    return s + c


@njit(nogil=True, cache=True)
def _b_pass2_reload(x, y, sc, u, a):
    s, c = _exp_store_sum_kernel(x, y, sc[0], u, a)
    return s + c


@njit(nogil=True, cache=True)
def _b_pass3_recompute(x, y, sc, u, a):
    _scale_exp_kernel(x, y, sc[0], sc[1], u)
    return 0.0


@njit(nogil=True, cache=True)
def _b_pass3_reload(x, y, sc, u, a):
    # sigma = 1 keeps repeated in-place iterations from drifting to zero
    _scale_inplace_kernel(y, sc[4], u)
    return 0.0


@njit(nogil=True, cache=True)
def _b_two_pass_p1(x, y, sc, u, a):
    m, c, n = _ext_accumulate_kernel(x, u, a)
    return m + c


@njit(nogil=True, cache=True)
def _b_two_pass_p2(x, y, sc, u, a):
    _ext_normalize_kernel(x, y, sc[2], sc[3], u)
    return 0.0


@njit(nogil=True, cache=True)
def _b_stream_copy(x, y, sc, u, a):
    for i in range(x.size):
        y[i] = x[i]
    return 0.0


@njit(nogil=True, cache=True)
def _b_stream_scale(x, y, sc, u, a):
    q = STREAM_SCALAR
    for i in range(x.size):
        y[i] = q * x[i]
    return 0.0


@njit(nogil=True, cache=True)
def _b_stream_scale_inplace(x, y, sc, u, a):
    # alternating q and 1/q keeps values bounded over many iterations
    q = STREAM_SCALAR if sc[5] > 0 else 1.0 / STREAM_SCALAR
    for i in range(y.size):
        y[i] = q * y[i]
    return 0.0


BODIES = {name: globals()[f"_b_{name}"] for name in WORKLOADS}


# ---------------------------------------------------------------- buffers


@dataclass
class Buffers:
    x: np.ndarray
    y: np.ndarray
    sc: np.ndarray


def make_buffers(workload: Workload, n: int, seed: int = 0) -> Buffers:
    """Allocate and fill inputs (which also pre-touches every page once)."""
    rng = np.random.default_rng(seed)
    if workload.dtype is _F64:
        x = rng.random(n)
        y = rng.random(n) if workload.inplace else np.zeros(n)
        return Buffers(x, y, np.array([0, 1, 1, 0, 1, 1], np.float32))
    x = rng.normal(0.0, 10.0, n).astype(np.float32)
    y = np.empty(n, np.float32)
    mu = np.float32(x.max())
    s, c = _sum_exp_kernel(x, mu, 4, 2)
    m, mc, e = _ext_accumulate_kernel(x, 4, 2)
    sc = np.array([mu, np.float32(s) + np.float32(c), np.float32(m) + np.float32(mc), e, 1.0, 1.0], np.float32)
    if workload.inplace:
        _exp_store_sum_kernel(x, y, mu, 4, 2)
    else:
        y[:] = 0.0
    return Buffers(x, y, sc)


# ---------------------------------------------------------------- eviction


@njit(nogil=True, cache=True)
def flush_buffer(buf, line_elems):
    for k in range(0, buf.size, line_elems):
        clflush_element(buf, k)
    if buf.size:
        clflush_element(buf, buf.size - 1)


@njit(nogil=True, cache=True)
def thrash(scratch):
    # streaming overwrite of a buffer much larger than the LLC
    for k in range(scratch.size):
        scratch[k] = scratch[k] + 1.0


@lru_cache(maxsize=1)
def clflush_available() -> bool:
    try:
        with open("/proc/cpuinfo") as f:
            flags = next((ln for ln in f if ln.startswith("flags")), "")
        if " clflush" not in flags:
            return False
        flush_buffer(np.zeros(64, np.float32), CACHE_LINE // 4)
        return True
    except Exception:
        return False


# ---------------------------------------------------------------- drivers


@lru_cache(maxsize=None)
def serial_driver(name: str):
    """Compiled loop: run the body ``iters`` times; returns total timed cycles."""
    body = BODIES[name]

    @njit(nogil=True)
    def drive(x, y, sc, u, a, iters, mode, line_elems, scratch):
        cycles = 0
        sink = 0.0
        for _ in range(iters):
            t0 = read_cycle_counter()
            sink += body(x, y, sc, u, a)
            t1 = read_cycle_counter()
            cycles += t1 - t0
            sc[5] = -sc[5]
            if mode == 1:
                flush_buffer(y, line_elems)
            elif mode == 2:
                thrash(scratch)
        return cycles, sink

    return drive


@njit(cache=True)
def _spin_cycles(seconds_hint):
    t0 = read_cycle_counter()
    acc = 0.0
    for i in range(int(seconds_hint * 2e8)):
        acc += math.sqrt(i)
    return read_cycle_counter() - t0, acc


@lru_cache(maxsize=1)
def tsc_hz() -> float:
    """Cycle-counter frequency, calibrated against the monotonic clock."""
    _spin_cycles(1e-4)
    best = []
    for _ in range(3):
        t0 = time.perf_counter()
        cyc, _ = _spin_cycles(0.05)
        best.append(cyc / (time.perf_counter() - t0))
    return float(np.median(best))
