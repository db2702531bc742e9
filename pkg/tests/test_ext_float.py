from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from twopass.ext_float import (ExtFloat, ReductionState, accumulate, merge, merge_all, pow2_nonpositive,
                               scale_by_pow2, _pow2_nonpositive_py)
from twopass.vector_exp import ext_exp

F32 = np.float32
NEG_INF = float("-inf")
M_LO, M_HI = F32(np.sqrt(0.5)), F32(np.sqrt(2.0))


def state(m, n):
    return ReductionState(m, n)


def as_tuple(s):
    return float(s.m_sum), float(s.n_sum)


class TestAccumulate:
    def test_identity_absorbs(self):
        assert as_tuple(accumulate(ReductionState.identity(), ExtFloat(1.0, 5))) == (1.0, 5.0)

    def test_equal_exponents_add(self):
        assert as_tuple(accumulate(state(1.0, 3), ExtFloat(1.0, 3))) == (2.0, 3.0)

    def test_smaller_term_rescaled(self):
        assert as_tuple(accumulate(state(1.5, 10), ExtFloat(1.0, 0))) == (1.5009765625, 10.0)

    def test_larger_term_rescales_state(self):
        assert as_tuple(accumulate(state(1.0, 0), ExtFloat(1.5, 10))) == (1.5009765625, 10.0)

    def test_far_smaller_term_vanishes(self):
        assert as_tuple(accumulate(state(1.0, 500), ExtFloat(1.25, 0))) == (1.0, 500.0)

    def test_huge_exponents_no_overflow(self):
        s = ReductionState.identity()
        for n in (1e7, 1e7 - 1, 3.0, 1e7):
            s = accumulate(s, ExtFloat(1.4, n))
        assert np.isfinite(s.m_sum) and float(s.n_sum) == 1e7


class TestMerge:
    def test_identity_left_and_right(self):
        s = state(1.2345, -17)
        assert merge(ReductionState.identity(), s) == s
        assert merge(s, ReductionState.identity()) == s

    def test_equal(self):
        assert as_tuple(merge(state(1.0, 0), state(1.0, 0))) == (2.0, 0.0)

    def test_distant_exponents_round_to_larger(self):
        assert as_tuple(merge(state(1.0, 128), state(1.0, -128))) == (1.0, 128.0)

    def test_merge_all_pairwise(self):
        parts = [state(1.0, 2), state(1.0, 2), state(1.0, 3), ReductionState.identity()]
        assert as_tuple(merge_all(parts)) == (2.0, 3.0)
        assert merge_all([]) == ReductionState.identity()


class TestScaleByPow2:
    @pytest.mark.parametrize("x,k,expected", [
        (1.5, 2, 6.0),
        (1.0, NEG_INF, 0.0),
        (0.0, NEG_INF, 0.0),
        (1.0, -160, 0.0),
        (1.0, -126, 2.0**-126),
        (1.0, 127, 2.0**127),
        (-3.0, -1, -1.5),
        (1.25, 300, float("inf")),
    ])
    def test_values(self, x, k, expected):
        assert float(scale_by_pow2(x, k)) == expected

    def test_pow2_nonpositive_matches_ldexp(self):
        for k in range(-126, 1):
            assert float(_pow2_nonpositive_py(F32(k))) == 2.0**k
        assert float(_pow2_nonpositive_py(F32(-127))) == 0.0
        assert float(_pow2_nonpositive_py(F32(NEG_INF))) == 0.0
        assert callable(pow2_nonpositive)


class TestExtFloat:
    def test_fraction_and_float(self):
        e = ExtFloat(1.5, -3)
        assert e.to_fraction() == Fraction(3, 16)
        assert e.to_float() == 0.1875
        assert ExtFloat(0.0, NEG_INF).to_fraction() == 0
        assert ExtFloat(1.0, 5000).to_float() == float("inf")

    def test_fields_pinned_to_float32(self):
        e = ExtFloat(0.1, 2)
        assert isinstance(e.m, np.float32) and isinstance(e.n, np.float32)


ext_terms = st.builds(lambda x: ext_exp(F32(x)), st.floats(-1e4, 1e4, width=32))


@settings(max_examples=200, deadline=None)
@given(st.lists(ext_terms, min_size=1, max_size=40))
def test_nsum_is_max_and_finite(terms):
    s = ReductionState.identity()
    for t in terms:
        s = accumulate(s, t)
    assert float(s.n_sum) == max(float(t.n) for t in terms)
    assert np.isfinite(s.m_sum) and s.m_sum > 0
    assert s.m_sum <= len(terms) * np.sqrt(2) * (1 + 2**-20)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.floats(float(M_LO), float(M_HI), width=32), st.integers(-10**7, 10**7)),
                min_size=1, max_size=64))
def test_overflowing_sums_stay_finite(terms):
    s = ReductionState.identity()
    for m, n in terms:
        s = accumulate(s, ExtFloat(m, n))
    assert np.isfinite(s.m_sum) and float(s.n_sum) == max(n for _, n in terms)


def _ulp(v):
    return float(np.spacing(F32(abs(v))))


@settings(max_examples=300, deadline=None)
@given(st.floats(float(M_LO), float(M_HI), width=32), st.integers(-50, 50),
       st.floats(float(M_LO), float(M_HI), width=32), st.integers(-50, 50))
def test_accumulate_matches_rational_oracle(m1, n1, m2, n2):
    s = accumulate(state(m1, n1), ExtFloat(m2, n2))
    exact = Fraction(float(F32(m1))) * Fraction(2) ** n1 + Fraction(float(F32(m2))) * Fraction(2) ** n2
    got = s.to_fraction()
    scale = Fraction(2) ** int(s.n_sum)
    assert abs(float((got - exact) / scale)) <= 2 * _ulp(s.m_sum)


@settings(max_examples=300, deadline=None)
@given(st.floats(0.0, 100.0, width=32), st.integers(-50, 50),
       st.floats(0.0, 100.0, width=32), st.integers(-50, 50))
def test_merge_commutes_within_one_ulp(m1, n1, m2, n2):
    a, b = state(m1, n1), state(m2, n2)
    ab, ba = merge(a, b), merge(b, a)
    assert ab.n_sum == ba.n_sum
    assert abs(float(ab.m_sum) - float(ba.m_sum)) <= _ulp(ab.m_sum)
