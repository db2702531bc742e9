"""Counting build of the softmax passes: pure Python, same arithmetic, tallied memory traffic.

Every logical element load or store of X and Y goes through a CountingArray.
The per-element arithmetic calls the compiled scalar helpers and follows the
kernels' lane assignment and combine order, so outputs are bit-identical to
the fast path (checked by the tests). Meant for small N only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ext_float import _accumulate_compensated_py, _pow2_nonpositive_py
from .softmax import Algorithm, EmptyInputError, finish_ext, finish_sum
from .vector_exp import (VECTOR_WIDTH, TuningParams, DEFAULT_PARAMS, _exp_shifted_py, _ext_exp_py,
                         _fma_py)

F32 = np.float32
_ONE = F32(1.0)
_UP = F32(2.0**64)
_DOWN = F32(2.0**-64)


class CountingArray:
    """1-D float32 buffer that counts scalar reads and writes."""

    def __init__(self, data):
        self.data = np.array(data, dtype=np.float32).reshape(-1)
        self.reads = 0
        self.writes = 0

    def __len__(self):
        return self.data.size

    def __getitem__(self, i):
        self.reads += 1
        return self.data[i]

    def __setitem__(self, i, v):
        self.writes += 1
        self.data[i] = F32(v)


@dataclass(frozen=True)
class Traffic:
    reads: int
    writes: int

    @property
    def total(self) -> int:
        return self.reads + self.writes


def _two_sum(a, b):
    s = F32(a + b)
    bp = F32(s - a)
    return s, F32(F32(a - F32(s - bp)) + F32(b - bp))


def _tree(values, combine):
    vals = list(values)
    w = len(vals) // 2
    while w >= 1:
        for l in range(w):
            vals[l] = combine(vals[l], vals[l + w])
        w //= 2
    return vals[0]


def _lanes_of(n, p):
    """Lane index of every element, in kernel visiting order."""
    lanes, step = p.lanes, p.block
    main = (n // step) * step
    return [(k % step) % lanes if k < main else (k - main) % lanes for k in range(n)]


def _max_pass(x, n, p):
    a = [None] * p.lanes
    for k, l in enumerate(_lanes_of(n, p)):
        v = x[k]
        a[l] = v if a[l] is None or v > a[l] else a[l]
    a = [v if v is not None else a[0] for v in a]
    return _tree(a, lambda u, v: u if u > v else v)


def _sum_pass(x, y, n, p, mu):
    s = [F32(0)] * p.lanes
    c = [F32(0)] * p.lanes
    for k, l in enumerate(_lanes_of(n, p)):
        e = F32(_exp_shifted_py(x[k], mu))
        if y is not None:
            y[k] = e
        s[l], err = _two_sum(s[l], e)
        c[l] = F32(c[l] + err)

    def comb(a, b):
        hi, lo = _two_sum(a[0], b[0])
        return hi, F32(F32(a[1] + b[1]) + lo)

    return _tree(list(zip(s, c)), comb)


def _quotient(a, b, rb):
    q = F32(a * rb)
    r = F32(_fma_py(-q, b, a))
    return F32(_fma_py(r, rb, q))


def _ext_pass(x, n, p):
    st = [(F32(0), F32(0), F32(-np.inf))] * p.lanes
    for k, l in enumerate(_lanes_of(n, p)):
        m, e = _ext_exp_py(x[k])
        st[l] = tuple(F32(v) for v in _accumulate_compensated_py(*st[l], F32(m), F32(0), F32(e)))
    return _tree(st, lambda a, b: tuple(F32(v) for v in _accumulate_compensated_py(*a, *b)))


def run(algorithm: Algorithm | str, data, params: TuningParams = DEFAULT_PARAMS):
    """Execute one algorithm on counting buffers; returns (output, Traffic)."""
    algorithm = Algorithm(algorithm)
    x = CountingArray(data)
    n = len(x)
    if n == 0:
        raise EmptyInputError()
    y = CountingArray(np.zeros(n, np.float32))
    p = params
    if algorithm is Algorithm.TWO_PASS:
        m_sum, n_sum = finish_ext([_ext_pass(x, n, p)])
        lam = _ONE / m_sum
        for k in range(n):
            m, e = _ext_exp_py(x[k])
            q = _quotient(F32(m), m_sum, lam)
            y[k] = F32(q * F32(_pow2_nonpositive_py(F32(F32(e) - n_sum))))
    else:
        mu = _max_pass(x, n, p)
        if algorithm is Algorithm.RECOMPUTE:
            sigma = finish_sum([_sum_pass(x, None, n, p, mu)])
            lam = _ONE / sigma
            for k in range(n):
                e = F32(_exp_shifted_py(x[k], mu))
                y[k] = F32(_quotient(F32(e * _UP), sigma, lam) * _DOWN)
        else:
            sigma = finish_sum([_sum_pass(x, y, n, p, mu)])
            lam = _ONE / sigma
            for k in range(n):
                y[k] = F32(_quotient(F32(y[k] * _UP), sigma, lam) * _DOWN)
    return y.data, Traffic(x.reads + y.reads, x.writes + y.writes)


def count(algorithm: Algorithm | str, n: int, seed: int = 0) -> Traffic:
    """Element reads/writes for one run on N random inputs."""
    if n < 1:
        raise EmptyInputError()
    data = np.random.default_rng(seed).normal(0.0, 10.0, n).astype(np.float32)
    return run(algorithm, data)[1]
