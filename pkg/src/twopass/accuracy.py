"""Reference oracles and ULP metrology.

The exp oracle is the platform's binary64 ``exp`` (53-bit significand, error
below one binary64 ulp), which resolves binary32 results to ~2**-29 ULP. The
softmax oracle runs the shifted formula in binary64 with exactly rounded
summation (``math.fsum``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .vector_exp import exp_scalar

F32 = np.float32


def oracle_exp(x) -> float:
    return math.exp(float(F32(x)))


def oracle_softmax(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float32).reshape(-1)
    if x.size == 0:
        raise ValueError("empty input")
    d = x.astype(np.float64) - np.float64(x.max())
    e = np.exp(d)
    return e / math.fsum(e.tolist())


def ulp_of(b) -> float:
    """Spacing of binary32 numbers at magnitude ``|b|`` (subnormal spacing below FLT_MIN)."""
    b = abs(float(b))
    if b == 0.0 or not math.isfinite(b):
        return 2.0**-149
    _, e = math.frexp(b)
    return math.ldexp(1.0, max(e - 1, -126) - 23)


def ulp_distance(a, b) -> float:
    """``|a - b|`` in units of the binary32 ULP at ``b``; ``b`` is the exact reference."""
    return abs(float(a) - float(b)) / ulp_of(b)


def ulp_distance_array(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _, e = np.frexp(np.abs(b))
    ulp = np.ldexp(1.0, np.maximum(e - 1, -126) - 23)
    return np.abs(a - b) / ulp


def float32_ulp_diff(a, b) -> np.ndarray:
    """Number of binary32 values between ``a`` and ``b`` (0 iff bitwise equal up to +-0)."""
    ai = np.asarray(a, dtype=np.float32).view(np.int32).astype(np.int64)
    bi = np.asarray(b, dtype=np.float32).view(np.int32).astype(np.int64)
    ai = np.where(ai < 0, -(ai & 0x7FFFFFFF), ai)
    bi = np.where(bi < 0, -(bi & 0x7FFFFFFF), bi)
    return np.abs(ai - bi)


@dataclass
class UlpReport:
    max_ulp: float
    mean_ulp: float
    worst_input: float
    sample_count: int
    lo: float = field(default=float("nan"))
    hi: float = field(default=float("nan"))
    mode: str = "sampled"

    CSV_HEADER = "lo,hi,mode,sample_count,max_ulp,mean_ulp,worst_input"

    def combine(self, other: UlpReport) -> UlpReport:
        n = self.sample_count + other.sample_count
        worst = self if self.max_ulp >= other.max_ulp else other
        mean = (self.mean_ulp * self.sample_count + other.mean_ulp * other.sample_count) / max(n, 1)
        return UlpReport(worst.max_ulp, mean, worst.worst_input, n,
                         min(self.lo, other.lo), max(self.hi, other.hi), self.mode)

    def to_csv_row(self) -> str:
        return (f"{float(self.lo)!r},{float(self.hi)!r},{self.mode},{self.sample_count},"
                f"{self.max_ulp:.6f},{self.mean_ulp:.6f},{float(self.worst_input).hex()}")


@njit(nogil=True, cache=True)
def _exp_ulp_scan(x):
    worst = 0.0
    worst_x = x[0] if x.size else F32(0.0)
    total = 0.0
    for i in range(x.size):
        y = exp_scalar(x[i])
        ref = math.exp(np.float64(x[i]))
        _, e = math.frexp(ref)
        err = abs(np.float64(y) - ref) / math.ldexp(1.0, max(e - 1, -126) - 23)
        total += err
        if err > worst:
            worst = err
            worst_x = x[i]
    return worst, total, worst_x


@njit(nogil=True, cache=True)
def _exp_ulp_scan_bits(lo_ord, hi_ord):
    # Enumerate binary32 values by ordinal (sign-magnitude mapped to a line).
    worst = 0.0
    worst_x = F32(0.0)
    total = 0.0
    buf = np.empty(1, np.int32)
    view = buf.view(np.float32)
    for o in range(lo_ord, hi_ord + 1):
        buf[0] = o if o >= 0 else np.int32(-o) | np.int32(-2147483648)
        x = view[0]
        y = exp_scalar(x)
        ref = math.exp(np.float64(x))
        _, e = math.frexp(ref)
        err = abs(np.float64(y) - ref) / math.ldexp(1.0, max(e - 1, -126) - 23)
        total += err
        if err > worst:
            worst = err
            worst_x = x
    return worst, total, worst_x


def float32_ordinal(x) -> int:
    i = int(np.array([x], dtype=np.float32).view(np.int32)[0])
    return i if i >= 0 else -(i & 0x7FFFFFFF)


def stratified_samples(lo: float, hi: float, count: int, seed: int = 0) -> np.ndarray:
    """Half the points stratified uniformly in value, half uniformly over binary32 ordinals.

    The ordinal half covers every binade of the interval, including the
    small-magnitude ones a value-uniform sample would almost never hit.
    """
    rng = np.random.default_rng(seed)
    n_val = count // 2
    n_ord = count - n_val
    edges = np.linspace(lo, hi, n_val + 1)
    vals = edges[:-1] + rng.random(n_val) * np.diff(edges)
    o_lo, o_hi = float32_ordinal(lo), float32_ordinal(hi)
    ords = rng.integers(o_lo, o_hi + 1, size=n_ord, dtype=np.int64)
    bits = np.where(ords >= 0, ords, (-ords) | 0x80000000).astype(np.uint32)
    out = np.concatenate([vals.astype(np.float32), bits.view(np.float32)])
    return np.clip(out, np.float32(lo), np.float32(hi))


def sweep_exp_accuracy(lo: float, hi: float, mode: str = "sampled", count: int = 10**7,
                       seed: int = 0, chunk: int = 1 << 24) -> UlpReport:
    """Max/mean ULP error of ``exp`` against the oracle over ``[lo, hi]``.

    ``mode="exhaustive"`` visits every binary32 value in the interval.
    """
    lo, hi = float(F32(lo)), float(F32(hi))
    if not lo < hi:
        raise ValueError(f"need lo < hi, got [{lo}, {hi}]")
    report = None
    if mode == "sampled":
        x = stratified_samples(lo, hi, count, seed)
        for s in range(0, x.size, chunk):
            w, tot, wx = _exp_ulp_scan(x[s:s + chunk])
            n = min(chunk, x.size - s)
            part = UlpReport(w, tot / n, float(wx), n, lo, hi, mode)
            report = part if report is None else report.combine(part)
    elif mode == "exhaustive":
        o_lo, o_hi = float32_ordinal(lo), float32_ordinal(hi)
        for s in range(o_lo, o_hi + 1, chunk):
            e = min(s + chunk - 1, o_hi)
            w, tot, wx = _exp_ulp_scan_bits(s, e)
            n = e - s + 1
            part = UlpReport(w, tot / n, float(wx), n, lo, hi, mode)
            report = part if report is None else report.combine(part)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    report.lo, report.hi, report.mode = lo, hi, mode
    return report


# ---------------------------------------------------------------- softmax suite

CROSS_ULP_LIMIT = 8
ABS_ERROR_LIMIT = 2.0**-17
SUM_TOLERANCE_PER_ELEMENT = 2.0**-20
FLT_MIN = 2.0**-126


def random_logits(rng: np.random.Generator, n: int, trial: int) -> np.ndarray:
    """Test vectors alternating between N(0, 10) and U(-100, 100) draws."""
    if trial % 2:
        return rng.normal(0.0, 10.0, n).astype(np.float32)
    return rng.uniform(-100.0, 100.0, n).astype(np.float32)


def cross_ulp(a, b) -> np.ndarray:
    """Ordinal distance, ignoring pairs where both values lie below FLT_MIN (flush-to-zero region)."""
    big = np.maximum(np.abs(a), np.abs(b)) >= FLT_MIN
    return np.where(big, float32_ulp_diff(a, b), 0)


@dataclass
class SoftmaxReport:
    n: int
    trials: int = 0
    max_cross_ulp: int = 0
    max_oracle_ulp: float = 0.0
    max_abs_error: float = 0.0
    max_sum_deviation: float = 0.0
    nonfinite: int = 0

    CSV_HEADER = "n,trials,max_cross_ulp,max_oracle_ulp,max_abs_error,max_sum_deviation,nonfinite"

    @property
    def sum_tolerance(self) -> float:
        return self.n * SUM_TOLERANCE_PER_ELEMENT

    @property
    def passed(self) -> bool:
        return (self.nonfinite == 0 and self.max_cross_ulp <= CROSS_ULP_LIMIT
                and self.max_abs_error <= ABS_ERROR_LIMIT and self.max_sum_deviation <= self.sum_tolerance)

    def to_csv_row(self) -> str:
        return (f"{self.n},{self.trials},{self.max_cross_ulp},{self.max_oracle_ulp:.4f},"
                f"{self.max_abs_error:.3e},{self.max_sum_deviation:.3e},{self.nonfinite}")


def softmax_suite(n: int, trials: int, seed: int = 0, algorithms=None) -> SoftmaxReport:
    """Run every algorithm on ``trials`` random vectors of length ``n`` against the oracle and each other.

    Oracle ULP is measured where the oracle is at least FLT_MIN; the absolute
    error and the sum check cover every element.
    """
    from .softmax import SERIAL, Algorithm

    algorithms = [Algorithm(a) for a in (algorithms or list(Algorithm))]
    rng = np.random.default_rng(seed)
    rep = SoftmaxReport(n)
    for t in range(trials):
        x = random_logits(rng, n, t)
        ref = oracle_softmax(x)
        normal = ref >= FLT_MIN
        outs = []
        for alg in algorithms:
            y = np.empty_like(x)
            SERIAL[alg](x, y)
            outs.append(y)
            rep.nonfinite += int(np.count_nonzero(~np.isfinite(y)))
            rep.max_abs_error = max(rep.max_abs_error, float(np.max(np.abs(y - ref))))
            if normal.any():
                rep.max_oracle_ulp = max(rep.max_oracle_ulp, float(ulp_distance_array(y[normal], ref[normal]).max()))
            rep.max_sum_deviation = max(rep.max_sum_deviation, abs(math.fsum(y.astype(np.float64).tolist()) - 1.0))
        for i in range(len(outs)):
            for j in range(i + 1, len(outs)):
                rep.max_cross_ulp = max(rep.max_cross_ulp, int(cross_ulp(outs[i], outs[j]).max()))
        rep.trials += 1
    return rep
