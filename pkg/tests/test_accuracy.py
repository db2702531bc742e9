import math

import numpy as np
import pytest

from twopass import exp
from twopass.accuracy import (UlpReport, float32_ordinal, oracle_exp, oracle_softmax, softmax_suite,
                              stratified_samples, sweep_exp_accuracy, ulp_distance, ulp_distance_array, ulp_of)

F32 = np.float32


class TestOracles:
    def test_exp_values(self):
        assert oracle_exp(0) == 1.0
        assert oracle_exp(1) == pytest.approx(2.718281828459045, rel=1e-15)
        # mpmath at 200 bits
        assert oracle_exp(-50) == pytest.approx(1.928749847963917783e-22, rel=1e-15)

    def test_softmax_values(self):
        assert oracle_softmax([0, 0]).tolist() == [0.5, 0.5]
        assert oracle_softmax([7]).tolist() == [1.0]
        ref = [0.090030573170380457998, 0.24472847105479765247, 0.66524095577482188953]
        assert oracle_softmax([1, 2, 3]) == pytest.approx(ref, rel=1e-15)

    def test_softmax_empty(self):
        with pytest.raises(ValueError, match="empty input"):
            oracle_softmax([])

    def test_softmax_sums_to_one(self, rng):
        for n in (1, 10, 10**4, 10**6):
            y = oracle_softmax(rng.uniform(-100, 100, n))
            assert abs(math.fsum(y.tolist()) - 1.0) <= n * 2.0**-52


class TestUlp:
    def test_basics(self):
        assert ulp_distance(1.0, 1.0) == 0
        assert ulp_distance(np.nextafter(F32(1), F32(2)), 1.0) == 1
        assert ulp_distance(np.nextafter(F32(1), F32(0)), 1.0) == 0.5

    def test_sign_symmetry(self):
        b = 0.3
        up, dn = b + 3 * ulp_of(b), b - 3 * ulp_of(b)
        assert ulp_distance(up, b) == ulp_distance(dn, b) == pytest.approx(3)

    @pytest.mark.parametrize("k", [-126, -20, -1, 0, 1, 20, 127])
    def test_binade_boundaries(self, k):
        p = 2.0**k
        assert ulp_of(p) == 2.0 ** (k - 23)
        below = float(np.nextafter(F32(p), F32(0)))
        assert ulp_of(below) == 2.0 ** (max(k - 1, -126) - 23)
        assert ulp_distance(below, p) == pytest.approx(0.5 if k > -126 else 1.0)

    def test_array_matches_scalar(self, rng):
        a = rng.uniform(0, 1, 100).astype(F32)
        b = rng.uniform(0, 1, 100)
        assert ulp_distance_array(a, b) == pytest.approx([ulp_distance(x, y) for x, y in zip(a, b)])


class TestReport:
    def test_combine(self):
        a = UlpReport(1.5, 0.5, -1.0, 10, -2.0, -1.0)
        b = UlpReport(0.5, 0.1, -3.0, 30, -4.0, -2.0)
        c = a.combine(b)
        assert (c.max_ulp, c.worst_input, c.sample_count, c.lo, c.hi) == (1.5, -1.0, 40, -4.0, -1.0)
        assert c.mean_ulp == pytest.approx((5 + 3) / 40)

    def test_csv_row(self):
        r = UlpReport(1.25, 0.125, -0.5, 3, -1.0, 0.0, "exhaustive")
        assert r.to_csv_row() == "-1.0,0.0,exhaustive,3,1.250000,0.125000,-0x1.0000000000000p-1"
        assert UlpReport.CSV_HEADER.split(",") == ["lo", "hi", "mode", "sample_count", "max_ulp", "mean_ulp",
                                                   "worst_input"]


class TestSweep:
    def test_exhaustive_small_interval(self):
        r = sweep_exp_accuracy(-0.5, -0.49, "exhaustive")
        assert r.sample_count == float32_ordinal(-0.49) - float32_ordinal(-0.5) + 1
        assert r.max_ulp <= 2 and r.max_ulp >= r.mean_ulp >= 0
        assert -0.5 <= r.worst_input <= -0.49

    def test_near_identity(self):
        r = sweep_exp_accuracy(-0.001, 0.0, "sampled", count=10**6)
        assert r.max_ulp <= 1

    def test_worst_input_is_evaluated(self):
        r = sweep_exp_accuracy(-10, 0, "sampled", count=10**5, seed=3)
        assert ulp_distance(exp(r.worst_input), oracle_exp(r.worst_input)) == pytest.approx(r.max_ulp)

    def test_errors(self):
        with pytest.raises(ValueError):
            sweep_exp_accuracy(0, -1)
        with pytest.raises(ValueError):
            sweep_exp_accuracy(-1, 0, "bogus")

    def test_stratified_samples(self):
        x = stratified_samples(-87.33, 0.0, 10001, seed=1)
        assert x.dtype == np.float32 and x.size == 10001
        assert x.min() >= F32(-87.33) and x.max() <= 0
        # the ordinal half reaches tiny magnitudes
        assert (np.abs(x) < 1e-20).any()
        assert np.array_equal(x, stratified_samples(-87.33, 0.0, 10001, seed=1))


def test_softmax_suite_report():
    rep = softmax_suite(50, 10, seed=7)
    assert rep.trials == 10 and rep.passed
    assert rep.to_csv_row().startswith("50,10,")
