"""Extended-dynamic-range values ``m * 2**n`` with both parts stored as binary32.

The pair widens the exponent range, not the precision: ``m`` is an ordinary
float32 and ``n`` is an integer-valued float32 that may lie far outside the
float32 exponent range. Sums of such values are formed by rescaling to the
larger exponent, so mantissas are only ever scaled down and never overflow.

The scalar helpers here are numba functions shared by the softmax kernels;
the dataclasses and module-level functions are the Python-facing API.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from numba import njit

from ._intrinsics import bits_to_f32, f32_to_bits, fma32

F32 = np.float32

_NEG127 = F32(-127.0)
_ZERO = F32(0.0)
_NEG_INF = F32(-np.inf)
# k + 2**23 + 127 puts (k + 127) in the low mantissa bits for integer k in [-127, 0]
_POW2_BIAS = F32(8388735.0)
_SHIFT = np.int32(23)
_EXP_BIAS = np.int32(127)


@njit(inline="always", cache=True)
def pow2_nonpositive(k):
    """2**k for integer-valued float32 ``k <= 0``; 0 for ``k < -126`` or -inf/NaN."""
    k = k if k > _NEG127 else _NEG127
    return bits_to_f32(f32_to_bits(k + _POW2_BIAS) << _SHIFT)


@njit(inline="always", cache=True)
def _pow2_int(k):
    # k: integer in [-126, 127]
    return bits_to_f32((np.int32(k) + _EXP_BIAS) << _SHIFT)


@njit(cache=True)
def scale_by_pow2_scalar(x, k):
    # Split into three exact power-of-two factors so every factor is a normal
    # float32 for |k| <= 378; beyond that the result is 0 or overflows anyway.
    if not (k > F32(-378.0)):
        k = F32(-378.0)
    elif k > F32(381.0):
        k = F32(381.0)
    ki = np.int32(k)
    k1 = ki // 3
    k2 = (ki - k1) // 2
    k3 = ki - k1 - k2
    return x * _pow2_int(k1) * _pow2_int(k2) * _pow2_int(k3)


@njit(inline="always", cache=True)
def accumulate_scalar(m_sum, n_sum, m, n):
    """Add ``m * 2**n`` into the running ``(m_sum, n_sum)``; returns the new pair.

    Only the operand with the smaller exponent is rescaled, by 2**-|n - n_sum|,
    so the update is a single fused multiply-add.
    """
    d = n - n_sum
    s = pow2_nonpositive(-abs(d))
    if d <= _ZERO:
        m_new = fma32(m, s, m_sum)
    else:
        m_new = fma32(m_sum, s, m)
    n_new = n if n > n_sum else n_sum
    return m_new, n_new


@njit(inline="always", cache=True)
def two_sum(a, b):
    """s + err == a + b exactly (Knuth's branch-free TwoSum)."""
    s = a + b
    bp = s - a
    err = (a - (s - bp)) + (b - bp)
    return s, err


@njit(inline="always", cache=True)
def accumulate_compensated(m_sum, c_sum, n_sum, m, c, n):
    """accumulate_scalar carrying a running rounding-error term.

    The state represents ``(m_sum + c_sum) * 2**n_sum``. Scaling by a power of
    two is exact, so TwoSum captures the whole rounding error of each update.
    """
    d = n - n_sum
    s = pow2_nonpositive(-abs(d))
    keep = d <= _ZERO
    big_m = m_sum if keep else m
    big_c = c_sum if keep else c
    small_m = m if keep else m_sum
    small_c = c if keep else c_sum
    hi, lo = two_sum(big_m, small_m * s)
    return hi, big_c + fma32(small_c, s, lo), n if n > n_sum else n_sum


@njit(cache=True)
def _accumulate_compensated_py(m_sum, c_sum, n_sum, m, c, n):
    return accumulate_compensated(m_sum, c_sum, n_sum, m, c, n)


@njit(cache=True)
def _accumulate_py(m_sum, n_sum, m, n):
    return accumulate_scalar(m_sum, n_sum, m, n)


@njit(cache=True)
def _pow2_nonpositive_py(k):
    return pow2_nonpositive(k)


@dataclass(frozen=True)
class ExtFloat:
    """The value ``m * 2**n``; ``n`` is integral (or -inf for zero)."""

    m: np.float32
    n: np.float32

    def __post_init__(self):
        object.__setattr__(self, "m", F32(self.m))
        object.__setattr__(self, "n", F32(self.n))

    def to_fraction(self) -> Fraction:
        """Exact rational value (0 when ``n`` is -inf)."""
        if np.isneginf(self.n) or self.m == 0:
            return Fraction(0)
        return Fraction(float(self.m)) * Fraction(2) ** int(self.n)

    def to_float(self) -> float:
        """Value as a binary64; may overflow to inf or underflow to 0."""
        if np.isneginf(self.n):
            return 0.0
        n = int(self.n)
        if n > 2000:
            return float("inf") if self.m > 0 else 0.0
        if n < -2000:
            return 0.0
        return float(np.ldexp(np.float64(self.m), n))


@dataclass(frozen=True)
class ReductionState:
    """Running sum of ExtFloat terms; the identity is ``(0, -inf)``."""

    m_sum: np.float32 = _ZERO
    n_sum: np.float32 = _NEG_INF

    def __post_init__(self):
        object.__setattr__(self, "m_sum", F32(self.m_sum))
        object.__setattr__(self, "n_sum", F32(self.n_sum))

    @classmethod
    def identity(cls) -> ReductionState:
        return cls(_ZERO, _NEG_INF)

    def as_ext(self) -> ExtFloat:
        return ExtFloat(self.m_sum, self.n_sum)

    def to_fraction(self) -> Fraction:
        return self.as_ext().to_fraction()


def accumulate(state: ReductionState, e: ExtFloat) -> ReductionState:
    m, n = _accumulate_py(state.m_sum, state.n_sum, e.m, e.n)
    return ReductionState(m, n)


def merge(a: ReductionState, b: ReductionState) -> ReductionState:
    """Combine two partial sums with the same max-exponent rescaling rule."""
    m, n = _accumulate_py(a.m_sum, a.n_sum, b.m_sum, b.n_sum)
    return ReductionState(m, n)


def merge_all(states) -> ReductionState:
    """Pairwise merge tree over a sequence of states (left-to-right pairing)."""
    items = list(states)
    if not items:
        return ReductionState.identity()
    while len(items) > 1:
        nxt = [merge(items[i], items[i + 1]) for i in range(0, len(items) - 1, 2)]
        if len(items) % 2:
            nxt.append(items[-1])
        items = nxt
    return items[0]


def scale_by_pow2(x, k) -> np.float32:
    """``x * 2**k`` rounded to binary32; ``k = -inf`` gives 0 for any finite ``x``.

    Results in the subnormal range may be flushed to zero.
    """
    return F32(scale_by_pow2_scalar(F32(x), F32(k)))
