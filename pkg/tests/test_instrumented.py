import numpy as np
import pytest

from twopass import Algorithm, EmptyInputError, TuningParams, softmax
from twopass.instrumented import CountingArray, Traffic, count, run

EXPECTED = {Algorithm.RECOMPUTE: (3, 1), Algorithm.RELOAD: (3, 2), Algorithm.TWO_PASS: (2, 1)}


@pytest.mark.parametrize("alg", list(Algorithm))
@pytest.mark.parametrize("n", [1, 2, 17, 33, 1024])
def test_counts(alg, n):
    r, w = EXPECTED[alg]
    assert count(alg, n) == Traffic(r * n, w * n)


@pytest.mark.parametrize("alg", list(Algorithm))
@pytest.mark.parametrize("n", [1, 17, 67, 300])
@pytest.mark.parametrize("params", [TuningParams(1, 1), TuningParams(4, 2), TuningParams(8, 8)])
def test_mirror_is_bit_exact(alg, n, params, rng):
    x = rng.normal(0, 10, n).astype(np.float32)
    y, _ = run(alg, x, params)
    assert np.array_equal(y.view(np.int32), softmax(x, alg, params).view(np.int32))


def test_counting_array():
    a = CountingArray([1, 2, 3])
    _ = a[0] + a[2]
    a[1] = 5
    assert (a.reads, a.writes, len(a)) == (2, 1, 3)
    assert Traffic(3, 2).total == 5


def test_empty():
    with pytest.raises(EmptyInputError):
        run("two_pass", [])
    with pytest.raises(EmptyInputError):
        count("reload", 0)
