"""Two-Pass softmax on binary32 vectors, with Three-Pass baselines and a measurement harness.

The Two-Pass algorithm keeps each exponential as an unreconstructed ``m * 2**n``
pair, so the normalizer can be accumulated without a separate max pass.
"""

from .accuracy import UlpReport, oracle_exp, oracle_softmax, sweep_exp_accuracy, ulp_distance
from .ext_float import ExtFloat, ReductionState, accumulate, merge, merge_all, scale_by_pow2
from .softmax import (Algorithm, EmptyInputError, max_reduce, softmax, softmax_parallel,
                      softmax_three_pass_recompute, softmax_three_pass_reload, softmax_two_pass)
from .vector_exp import (DEFAULT_PARAMS, SEARCH_SPACE, TuningParams, exp, exp_batch, ext_exp, ext_exp_batch,
                         poly_eval, range_reduce)

__version__ = "0.1.0"

__all__ = [
    "Algorithm", "DEFAULT_PARAMS", "EmptyInputError", "ExtFloat", "ReductionState", "SEARCH_SPACE",
    "TuningParams", "UlpReport", "accumulate", "exp", "exp_batch", "ext_exp", "ext_exp_batch", "max_reduce",
    "merge", "merge_all", "oracle_exp", "oracle_softmax", "poly_eval", "range_reduce", "scale_by_pow2",
    "softmax", "softmax_parallel", "softmax_three_pass_recompute", "softmax_three_pass_reload",
    "softmax_two_pass", "sweep_exp_accuracy", "ulp_distance",
]
