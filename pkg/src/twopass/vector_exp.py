"""Table-free, branch-free, division-free binary32 exponential.

    n = rne(x * log2(e))                 (magic-bias FMA: one rounding of the exact product)
    t = x - n*ln2_hi - n*ln2_lo - n*ln2_tail   (Cody-Waite, three FMAs)
    p = 1 + t*(c1 + t*(c2 + t*(c3 + t*(c4 + t*c5))))   (Horner, FMAs)
    exp(x) = p * 2**n                    (scale built in the exponent field, flush-to-zero)

``ext_exp`` stops before the last step and returns the pair ``(p, n)``.
Scalar functions are numba-compiled; batch kernels inline the same scalar
code, so vectorized and scalar results are bit-identical.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from numba import njit

from ._intrinsics import bits_to_f32, fma32
from .ext_float import ExtFloat

F32 = np.float32

VECTOR_WIDTH = 16
"""binary32 lanes per vector step of the batch kernels (one 512-bit register)."""


@dataclass(frozen=True)
class ExpCoefficients:
    log2_e: float
    ln2_hi: float
    ln2_lo: float
    c1: float
    c2: float
    c3: float
    c4: float
    c5: float
    # third split term keeps t accurate for |n| up to 2**22 (ext_exp of large |x|)
    ln2_tail: float = 0.0

    def __post_init__(self):
        for name in self.__dataclass_fields__:
            object.__setattr__(self, name, float(F32(getattr(self, name))))

    @property
    def poly(self) -> tuple[float, float, float, float, float]:
        return (self.c1, self.c2, self.c3, self.c4, self.c5)


# Degree-5 minimax fit of exp on [-ln2/2, ln2/2] in units of binary32 ULPs,
# then rounded to binary32 and locally re-optimized against end-to-end ULP error.
# Regenerate with scripts/fit_exp_coefficients.py.
DEFAULT_COEFFICIENTS = ExpCoefficients(
    log2_e=float.fromhex("0x1.715476p+0"),
    # 8 significant bits: n * ln2_hi is exact for |n| <= 2**16
    ln2_hi=float.fromhex("0x1.630000p-1"),
    ln2_lo=float.fromhex("-0x1.bd0106p-13"),
    ln2_tail=float.fromhex("0x1.cf79acp-40"),
    c1=float.fromhex("0x1.fffff0p-1"),
    c2=float.fromhex("0x1.fffdbep-2"),
    c3=float.fromhex("0x1.555cbcp-3"),
    c4=float.fromhex("0x1.573c9cp-5"),
    c5=float.fromhex("0x1.0edba0p-7"),
)

_C = DEFAULT_COEFFICIENTS
_LOG2E = F32(_C.log2_e)
_NEG_LN2_HI = F32(-_C.ln2_hi)
_NEG_LN2_LO = F32(-_C.ln2_lo)
_NEG_LN2_TAIL = F32(-_C.ln2_tail)
_C1, _C2, _C3, _C4, _C5 = (F32(c) for c in _C.poly)
_ONE = F32(1.0)
_ZERO = F32(0.0)
# 1.5 * 2**23: adding it rounds to an integer for |v| < 2**22
_MAGIC = F32(12582912.0)

EXT_EXP_LIMIT = F32(2.0**21)
"""ext_exp clamps its argument to +-2**21 so that |n| < 2**22 (exact in binary32)."""
EXP_MIN_ARG = F32(-104.0)
EXP_MAX_ARG = F32(89.0)
FLT_MIN = F32(2.0**-126)

_NEG127 = F32(-127.0)
_POS128 = F32(128.0)
_SHIFT = np.int32(23)
_EXP_BIAS = np.int32(127)


@njit(inline="always", cache=True)
def _reduce(x):
    vn = fma32(x, _LOG2E, _MAGIC)
    n = vn - _MAGIC
    t = fma32(n, _NEG_LN2_HI, x)
    t = fma32(n, _NEG_LN2_LO, t)
    t = fma32(n, _NEG_LN2_TAIL, t)
    return n, t


@njit(inline="always", cache=True)
def _poly(t):
    p = fma32(t, _C5, _C4)
    p = fma32(t, p, _C3)
    p = fma32(t, p, _C2)
    p = fma32(t, p, _C1)
    return fma32(t, p, _ONE)


@njit(inline="always", cache=True)
def _poly_with(t, c1, c2, c3, c4, c5):
    p = fma32(t, c5, c4)
    p = fma32(t, p, c3)
    p = fma32(t, p, c2)
    p = fma32(t, p, c1)
    return fma32(t, p, _ONE)


@njit(inline="always", cache=True)
def _pow2_clamped(n):
    # 2**n for n in [-126, 127]; 0 for n <= -127; +inf for n >= 128
    k = n if n > _NEG127 else _NEG127
    k = k if k < _POS128 else _POS128
    return bits_to_f32((np.int32(k) + _EXP_BIAS) << _SHIFT)


@njit(inline="always", cache=True)
def range_reduce_scalar(x):
    x = min(max(x, -EXT_EXP_LIMIT), EXT_EXP_LIMIT)
    return _reduce(x)


@njit(inline="always", cache=True)
def ext_exp_scalar(x):
    """(m, n) with m in [sqrt(2)/2, sqrt(2)] and m * 2**n ~= e**x, for any finite x."""
    n, t = range_reduce_scalar(x)
    return _poly(t), n


@njit(inline="always", cache=True)
def exp_shifted_scalar(x, shift):
    """e**(x - shift) with the subtraction error carried into the reduced argument."""
    d = x - shift
    # TwoSum: d + err == x - shift exactly
    bb = d - x
    err = (x - (d - bb)) + (-shift - bb)
    err = err if d > EXP_MIN_ARG else _ZERO
    d = min(max(d, EXP_MIN_ARG), EXP_MAX_ARG)
    n, t = _reduce(d)
    t = t + err
    y = _poly(t) * _pow2_clamped(n)
    return y if y >= FLT_MIN else _ZERO


@njit(inline="always", cache=True)
def exp_scalar(x):
    return exp_shifted_scalar(x, _ZERO)


# Python-callable entry points (the inline="always" versions above are for kernels).


@njit(cache=True)
def _exp_py(x):
    return exp_scalar(x)


@njit(cache=True)
def _exp_shifted_py(x, shift):
    return exp_shifted_scalar(x, shift)


@njit(cache=True)
def _ext_exp_py(x):
    return ext_exp_scalar(x)


@njit(cache=True)
def _range_reduce_py(x):
    return range_reduce_scalar(x)


@njit(cache=True)
def _poly_py(t, c1, c2, c3, c4, c5):
    return _poly_with(t, c1, c2, c3, c4, c5)


@njit(cache=True)
def _fma_py(a, b, c):
    return fma32(a, b, c)


@dataclass(frozen=True)
class TuningParams:
    """Loop-structure meta-parameters for the batch and softmax kernels.

    ``unroll_factor`` counts vector steps of VECTOR_WIDTH elements handled per
    main-loop iteration; ``accumulator_count`` counts independent vector
    accumulators in reductions (each VECTOR_WIDTH lanes wide).
    """

    unroll_factor: int = 4
    accumulator_count: int = 2

    def __post_init__(self):
        u, a = self.unroll_factor, self.accumulator_count
        if u not in UNROLL_CHOICES:
            raise ValueError(f"unroll_factor must be one of {UNROLL_CHOICES}, got {u}")
        if a not in ACCUMULATOR_CHOICES:
            raise ValueError(f"accumulator_count must be one of {ACCUMULATOR_CHOICES}, got {a}")
        if a > u:
            raise ValueError(f"accumulator_count ({a}) may not exceed unroll_factor ({u})")

    @property
    def block(self) -> int:
        return self.unroll_factor * VECTOR_WIDTH

    @property
    def lanes(self) -> int:
        return self.accumulator_count * VECTOR_WIDTH


UNROLL_CHOICES = (1, 2, 4, 8, 16, 32)
ACCUMULATOR_CHOICES = (1, 2, 4, 8)
SEARCH_SPACE = tuple(
    TuningParams(u, a) for u, a in itertools.product(UNROLL_CHOICES, ACCUMULATOR_CHOICES) if a <= u
)
DEFAULT_PARAMS = TuningParams()


@njit(nogil=True, cache=True)
def exp_batch_kernel(x, y, unroll):
    n = x.size
    step = unroll * VECTOR_WIDTH
    blocks = n // step
    for blk in range(blocks):
        # slice views per block vectorize better than offset indexing
        xb = x[blk * step:(blk + 1) * step]
        yb = y[blk * step:(blk + 1) * step]
        for j in range(step):
            yb[j] = exp_scalar(xb[j])
    for k in range(blocks * step, n):
        y[k] = exp_scalar(x[k])


@njit(nogil=True, cache=True)
def ext_exp_batch_kernel(x, m, e, unroll):
    n = x.size
    step = unroll * VECTOR_WIDTH
    blocks = n // step
    for blk in range(blocks):
        xb = x[blk * step:(blk + 1) * step]
        mb = m[blk * step:(blk + 1) * step]
        eb = e[blk * step:(blk + 1) * step]
        for j in range(step):
            mb[j], eb[j] = ext_exp_scalar(xb[j])
    for k in range(blocks * step, n):
        m[k], e[k] = ext_exp_scalar(x[k])


def _as_f32(a) -> np.ndarray:
    a = np.asarray(a)
    if a.dtype != np.float32 or not a.flags.c_contiguous:
        a = np.ascontiguousarray(a, dtype=np.float32)
    return a.reshape(-1)


def _out_buffer(out, n: int, name: str) -> np.ndarray:
    if out is None:
        return np.empty(n, dtype=np.float32)
    if not isinstance(out, np.ndarray) or out.dtype != np.float32 or not out.flags.c_contiguous:
        raise TypeError(f"{name} must be a C-contiguous float32 ndarray")
    if out.size != n:
        raise ValueError(f"{name} has {out.size} elements, input has {n}")
    return out.reshape(-1)


def range_reduce(x) -> tuple[np.float32, np.float32]:
    """Return ``(n, t)`` with ``x = n*ln2 + t``, ``n`` integral, ``|t| <= ln2/2`` (+ rounding)."""
    n, t = _range_reduce_py(F32(x))
    return F32(n), F32(t)


def poly_eval(t, coeffs: ExpCoefficients = DEFAULT_COEFFICIENTS) -> np.float32:
    """Degree-5 Horner/FMA approximation of e**t on the reduced range."""
    return F32(_poly_py(F32(t), *(F32(c) for c in coeffs.poly)))


def exp(x) -> np.float32:
    """e**x in binary32 for x <= 0 (max error under 2 ULP; sub-FLT_MIN results are 0).

    Positive arguments are outside the accuracy contract and saturate to +inf.
    """
    return F32(_exp_py(F32(x)))


def ext_exp(x) -> ExtFloat:
    """e**x as the pair ``(m, n)``, free of overflow for any finite x."""
    m, n = _ext_exp_py(F32(x))
    return ExtFloat(m, n)


def exp_batch(x, out=None, params: TuningParams | None = None) -> np.ndarray:
    x = _as_f32(x)
    y = _out_buffer(out, x.size, "out")
    params = params or DEFAULT_PARAMS
    exp_batch_kernel(x, y, params.unroll_factor)
    return y


def ext_exp_batch(x, m_out=None, n_out=None, params: TuningParams | None = None):
    """Elementwise ext_exp; returns the mantissa and exponent arrays."""
    x = _as_f32(x)
    m = _out_buffer(m_out, x.size, "m_out")
    n = _out_buffer(n_out, x.size, "n_out")
    params = params or DEFAULT_PARAMS
    ext_exp_batch_kernel(x, m, n, params.unroll_factor)
    return m, n
