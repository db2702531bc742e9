"""Three-Pass (recompute, reload) and Two-Pass softmax over contiguous float32 arrays.

Reductions run over ``accumulator_count * VECTOR_WIDTH`` independent lanes;
element ``i + j`` of a main-loop block goes to lane ``j % lanes`` and the
scalar tail continues the same assignment. Lanes are combined by a pairwise
tree (lane ``l`` absorbs lane ``l + w`` for ``w = lanes/2, ..., 1``).

Sums are compensated: each lane carries the exact rounding error of its
additions (TwoSum) in a second float32, folded in once at the end.
"""

from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from numba import njit

from . import tuning
from ._intrinsics import fma32
from .ext_float import _accumulate_compensated_py, accumulate_compensated, pow2_nonpositive, two_sum
from .vector_exp import VECTOR_WIDTH, TuningParams, exp_shifted_scalar, ext_exp_scalar

F32 = np.float32
_ZERO = F32(0.0)
_ONE = F32(1.0)
_NEG_INF = F32(-np.inf)


class EmptyInputError(ValueError):
    def __init__(self):
        super().__init__("empty input")


class Algorithm(str, enum.Enum):
    RECOMPUTE = "recompute"
    RELOAD = "reload"
    TWO_PASS = "two_pass"


# ---------------------------------------------------------------- kernels


# Loop shape matters for numba/LLVM: inner loops run over fresh slice views of
# one lane-row (or one block), which the vectorizer handles far better than
# offset indexing into the full array.


@njit(nogil=True, cache=True)
def _max_kernel(x, unroll, acc):
    lanes = acc * VECTOR_WIDTH
    step = unroll * VECTOR_WIDTH
    n = x.size
    a = np.full(lanes, x[0])
    i = 0
    while i + step <= n:
        for b in range(i, i + step, lanes):
            row = x[b:b + lanes]
            for l in range(lanes):
                a[l] = row[l] if row[l] > a[l] else a[l]
        i += step
    for k in range(i, n):
        l = (k - i) % lanes
        a[l] = x[k] if x[k] > a[l] else a[l]
    w = lanes // 2
    while w >= 1:
        for l in range(w):
            a[l] = a[l] if a[l] > a[l + w] else a[l + w]
        w //= 2
    return a[0]


@njit(inline="always", cache=True)
def _tree_sum(s, c):
    # pairwise over lanes; every addition keeps its rounding error in c
    w = s.size // 2
    while w >= 1:
        for l in range(w):
            hi, lo = two_sum(s[l], s[l + w])
            c[l] = c[l] + c[l + w] + lo
            s[l] = hi
        w //= 2
    return s[0], c[0]


@njit(nogil=True, cache=True)
def _sum_exp_kernel(x, mu, unroll, acc):
    """Compensated sum of exp(x - mu); returns (sum, error term)."""
    lanes = acc * VECTOR_WIDTH
    step = unroll * VECTOR_WIDTH
    n = x.size
    s = np.zeros(lanes, np.float32)
    c = np.zeros(lanes, np.float32)
    i = 0
    while i + step <= n:
        for b in range(i, i + step, lanes):
            row = x[b:b + lanes]
            for l in range(lanes):
                s[l], err = two_sum(s[l], exp_shifted_scalar(row[l], mu))
                c[l] += err
        i += step
    for k in range(i, n):
        l = (k - i) % lanes
        s[l], err = two_sum(s[l], exp_shifted_scalar(x[k], mu))
        c[l] += err
    return _tree_sum(s, c)


@njit(nogil=True, cache=True)
def _exp_store_sum_kernel(x, y, mu, unroll, acc):
    lanes = acc * VECTOR_WIDTH
    step = unroll * VECTOR_WIDTH
    n = x.size
    s = np.zeros(lanes, np.float32)
    c = np.zeros(lanes, np.float32)
    i = 0
    while i + step <= n:
        for b in range(i, i + step, lanes):
            row = x[b:b + lanes]
            out = y[b:b + lanes]
            for l in range(lanes):
                e = exp_shifted_scalar(row[l], mu)
                out[l] = e
                s[l], err = two_sum(s[l], e)
                c[l] += err
        i += step
    for k in range(i, n):
        l = (k - i) % lanes
        e = exp_shifted_scalar(x[k], mu)
        y[k] = e
        s[l], err = two_sum(s[l], e)
        c[l] += err
    return _tree_sum(s, c)


@njit(inline="always", cache=True)
def _quotient(a, b, rb):
    # a / b from the reciprocal rb = 1/b: q = a*rb plus one FMA residual correction
    q = a * rb
    r = fma32(-q, b, a)
    return fma32(r, rb, q)


_UP = F32(2.0**64)
_DOWN = F32(2.0**-64)


@njit(inline="always", cache=True)
def _quotient_small(a, b, rb):
    # For a possibly near FLT_MIN: the residual would be subnormal (slow on x86).
    # Power-of-two pre/post scaling is exact, so normal results are unchanged.
    return _quotient(a * _UP, b, rb) * _DOWN


@njit(nogil=True, cache=True)
def _scale_exp_kernel(x, y, mu, sigma, unroll):
    lam = _ONE / sigma
    step = unroll * VECTOR_WIDTH
    n = x.size
    blocks = n // step
    for blk in range(blocks):
        xb = x[blk * step:(blk + 1) * step]
        yb = y[blk * step:(blk + 1) * step]
        for j in range(step):
            yb[j] = _quotient_small(exp_shifted_scalar(xb[j], mu), sigma, lam)
    for k in range(blocks * step, n):
        y[k] = _quotient_small(exp_shifted_scalar(x[k], mu), sigma, lam)


@njit(nogil=True, cache=True)
def _scale_inplace_kernel(y, sigma, unroll):
    lam = _ONE / sigma
    step = unroll * VECTOR_WIDTH
    n = y.size
    blocks = n // step
    for blk in range(blocks):
        yb = y[blk * step:(blk + 1) * step]
        for j in range(step):
            yb[j] = _quotient_small(yb[j], sigma, lam)
    for k in range(blocks * step, n):
        y[k] = _quotient_small(y[k], sigma, lam)


@njit(nogil=True, cache=True)
def _ext_accumulate_kernel(x, unroll, acc):
    """Compensated (m, n) reduction of ext_exp(x); returns (m_sum, c_sum, n_sum)."""
    lanes = acc * VECTOR_WIDTH
    step = unroll * VECTOR_WIDTH
    n = x.size
    am = np.zeros(lanes, np.float32)
    ac = np.zeros(lanes, np.float32)
    an = np.full(lanes, _NEG_INF)
    i = 0
    while i + step <= n:
        for b in range(i, i + step, lanes):
            row = x[b:b + lanes]
            for l in range(lanes):
                m, e = ext_exp_scalar(row[l])
                am[l], ac[l], an[l] = accumulate_compensated(am[l], ac[l], an[l], m, _ZERO, e)
        i += step
    for k in range(i, n):
        l = (k - i) % lanes
        m, e = ext_exp_scalar(x[k])
        am[l], ac[l], an[l] = accumulate_compensated(am[l], ac[l], an[l], m, _ZERO, e)
    w = lanes // 2
    while w >= 1:
        for l in range(w):
            am[l], ac[l], an[l] = accumulate_compensated(am[l], ac[l], an[l], am[l + w], ac[l + w], an[l + w])
        w //= 2
    return am[0], ac[0], an[0]


@njit(inline="always", cache=True)
def _normalized(xv, m_sum, lam, n_sum):
    m, e = ext_exp_scalar(xv)
    return _quotient(m, m_sum, lam) * pow2_nonpositive(e - n_sum)


@njit(nogil=True, cache=True)
def _ext_normalize_kernel(x, y, m_sum, n_sum, unroll):
    lam = _ONE / m_sum
    step = unroll * VECTOR_WIDTH
    n = x.size
    blocks = n // step
    for blk in range(blocks):
        xb = x[blk * step:(blk + 1) * step]
        yb = y[blk * step:(blk + 1) * step]
        for j in range(step):
            yb[j] = _normalized(xb[j], m_sum, lam, n_sum)
    for k in range(blocks * step, n):
        y[k] = _normalized(x[k], m_sum, lam, n_sum)


# ---------------------------------------------------------------- argument checks


def _check(x, y, validate: bool):
    if not isinstance(x, np.ndarray) or x.dtype != np.float32 or x.ndim != 1 or not x.flags.c_contiguous:
        raise TypeError("X must be a 1-D C-contiguous float32 ndarray")
    if not isinstance(y, np.ndarray) or y.dtype != np.float32 or y.ndim != 1 or not y.flags.c_contiguous:
        raise TypeError("Y must be a 1-D C-contiguous float32 ndarray")
    if x.size == 0:
        raise EmptyInputError()
    if y.size != x.size:
        raise ValueError(f"X has {x.size} elements but Y has {y.size}")
    if np.shares_memory(x, y):
        raise ValueError("X and Y must not overlap")
    if validate and not np.isfinite(x).all():
        raise ValueError("X contains NaN or infinity")


# ---------------------------------------------------------------- serial entry points


def max_reduce(x, params: TuningParams | None = None) -> np.float32:
    x = np.ascontiguousarray(x, dtype=np.float32).reshape(-1)
    if x.size == 0:
        raise EmptyInputError()
    p = tuning.resolve("softmax_reload", params)
    return F32(_max_kernel(x, p.unroll_factor, p.accumulator_count))


def softmax_three_pass_recompute(x, y, params: TuningParams | None = None, validate: bool = False) -> None:
    """Max pass, sum-of-exp pass, then a pass that recomputes exp and scales it."""
    _check(x, y, validate)
    p = tuning.resolve("softmax_recompute", params)
    u, a = p.unroll_factor, p.accumulator_count
    mu = F32(_max_kernel(x, u, a))
    sigma = finish_sum([_sum_exp_kernel(x, mu, u, a)])
    _scale_exp_kernel(x, y, mu, sigma, u)


def softmax_three_pass_reload(x, y, params: TuningParams | None = None, validate: bool = False) -> None:
    """Max pass, exp pass storing into Y, then Y is scaled in place."""
    _check(x, y, validate)
    p = tuning.resolve("softmax_reload", params)
    u, a = p.unroll_factor, p.accumulator_count
    mu = F32(_max_kernel(x, u, a))
    sigma = finish_sum([_exp_store_sum_kernel(x, y, mu, u, a)])
    _scale_inplace_kernel(y, sigma, u)


def softmax_two_pass(x, y, params: TuningParams | None = None, validate: bool = False) -> None:
    """Accumulate (m, n) pairs in one pass, normalize in the second. No max pass needed."""
    _check(x, y, validate)
    p = tuning.resolve("softmax_two_pass", params)
    m_sum, n_sum = finish_ext([_ext_accumulate_kernel(x, p.unroll_factor, p.accumulator_count)])
    _ext_normalize_kernel(x, y, m_sum, n_sum, p.unroll_factor)


SERIAL = {
    Algorithm.RECOMPUTE: softmax_three_pass_recompute,
    Algorithm.RELOAD: softmax_three_pass_reload,
    Algorithm.TWO_PASS: softmax_two_pass,
}


def softmax(x, algorithm: Algorithm | str = Algorithm.TWO_PASS, params: TuningParams | None = None) -> np.ndarray:
    """Convenience wrapper returning a fresh output array."""
    x = np.ascontiguousarray(x, dtype=np.float32).reshape(-1)
    y = np.empty_like(x)
    SERIAL[Algorithm(algorithm)](x, y, params)
    return y


# ---------------------------------------------------------------- partitioned parallel


def chunk_bounds(n: int, parts: int) -> list[tuple[int, int]]:
    """``parts`` contiguous ranges whose sizes differ by at most one; empty ranges dropped."""
    q, r = divmod(n, parts)
    bounds, start = [], 0
    for i in range(parts):
        size = q + (1 if i < r else 0)
        if size:
            bounds.append((start, start + size))
        start += size
    return bounds


def _pairwise(items, combine):
    while len(items) > 1:
        nxt = [combine(items[i], items[i + 1]) for i in range(0, len(items) - 1, 2)]
        if len(items) % 2:
            nxt.append(items[-1])
        items = nxt
    return items[0]


def _two_sum_pair(a, b):
    hi = a[0] + b[0]
    bp = hi - a[0]
    lo = (a[0] - (hi - bp)) + (b[0] - bp)
    return hi, a[1] + b[1] + lo


def finish_sum(parts) -> np.float32:
    """Combine compensated partial sums ``(s, c)`` pairwise and round once.

    numba hands float32 results back as Python floats, so everything is
    re-pinned to float32 here before it reaches another kernel.
    """
    s, c = _pairwise([(F32(p[0]), F32(p[1])) for p in parts], _two_sum_pair)
    return F32(s + c)


def finish_ext(parts) -> tuple[np.float32, np.float32]:
    """Combine compensated ``(m, c, n)`` partials with the max-exponent rule."""
    def combine(a, b):
        return tuple(F32(v) for v in _accumulate_compensated_py(*a, *b))

    m, c, n = _pairwise([tuple(F32(v) for v in p) for p in parts], combine)
    return F32(m + c), n


def softmax_parallel(x, y, algorithm: Algorithm | str, threads: int,
                     params: TuningParams | None = None, validate: bool = False,
                     executor: ThreadPoolExecutor | None = None) -> None:
    """Partition X into ``threads`` contiguous chunks; barrier between passes.

    Chunk partials are combined by max and a pairwise compensated sum
    (Three-Pass) or by the max-exponent merge rule (Two-Pass). With one thread
    the result is bit-identical to the serial function.
    """
    if threads < 1:
        raise ValueError("threads must be >= 1")
    _check(x, y, validate)
    algorithm = Algorithm(algorithm)
    p = tuning.resolve(f"softmax_{algorithm.value}", params)
    u, a = p.unroll_factor, p.accumulator_count
    chunks = [(x[s:e], y[s:e]) for s, e in chunk_bounds(x.size, threads)]
    own = executor is None
    pool = executor or ThreadPoolExecutor(max_workers=threads, thread_name_prefix="softmax")
    try:
        def each(fn):
            return list(pool.map(lambda c: fn(*c), chunks))

        if algorithm is Algorithm.TWO_PASS:
            m_sum, n_sum = finish_ext(each(lambda xc, yc: _ext_accumulate_kernel(xc, u, a)))
            each(lambda xc, yc: _ext_normalize_kernel(xc, yc, m_sum, n_sum, u))
            return
        mu = F32(max(each(lambda xc, yc: _max_kernel(xc, u, a))))
        if algorithm is Algorithm.RECOMPUTE:
            sigma = finish_sum(each(lambda xc, yc: _sum_exp_kernel(xc, mu, u, a)))
            each(lambda xc, yc: _scale_exp_kernel(xc, yc, mu, sigma, u))
        else:
            sigma = finish_sum(each(lambda xc, yc: _exp_store_sum_kernel(xc, yc, mu, u, a)))
            each(lambda xc, yc: _scale_inplace_kernel(yc, sigma, u))
    finally:
        if own:
            pool.shutdown()
