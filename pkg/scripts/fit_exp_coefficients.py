#!/usr/bin/env python3
"""Regenerate the degree-5 exp polynomial coefficients.

1. Linear-programming minimax fit of p(t) = 1 + t*q(t) to e**t on
   [-ln2/2, ln2/2], with the error weighted by 1/ulp(e**t) so the fit
   minimizes the error in binary32 ULPs rather than the relative error.
2. Round to binary32, then coordinate-descent over neighbouring binary32
   values, scoring each candidate by the end-to-end max ULP error of the
   real kernel (same range reduction, FMA Horner) on stratified samples.

Prints the coefficients as hex literals for twopass/vector_exp.py.
Needs scipy (not a runtime dependency of the package).
"""

import argparse
import math

import numpy as np
from numba import njit
from scipy.optimize import linprog

from twopass.vector_exp import _poly_with, range_reduce_scalar

F32 = np.float32


def lp_fit(grid_points: int = 8001) -> np.ndarray:
    a = math.log(2) / 2 * 1.00001
    t = np.linspace(-a, a, grid_points)
    et = np.exp(t)
    ulp = np.where(et < 1, 2.0**-24, 2.0**-23)
    phi = np.stack([t ** (k + 1) for k in range(5)], 1) / ulp[:, None]
    g = (et - 1) / ulp
    ones = np.ones((t.size, 1))
    a_ub = np.vstack([np.hstack([phi, -ones]), np.hstack([-phi, -ones])])
    b_ub = np.concatenate([g, -g])
    res = linprog(np.r_[np.zeros(5), 1.0], A_ub=a_ub, b_ub=b_ub,
                  bounds=[(None, None)] * 5 + [(0, None)], method="highs")
    print(f"LP minimax error: {res.x[-1]:.4f} ulp")
    return res.x[:5]


@njit
def max_ulp_error(x, c):
    worst = 0.0
    for i in range(x.size):
        n, t = range_reduce_scalar(x[i])
        p = _poly_with(t, c[0], c[1], c[2], c[3], c[4])
        ref = math.exp(np.float64(x[i]) - np.float64(n) * 0.6931471805599453)
        _, e = math.frexp(ref)
        err = abs(np.float64(p) - ref) / math.ldexp(1.0, e - 24)
        if err > worst:
            worst = err
    return worst


def _step(c: F32, k: int) -> F32:
    return np.array([c], F32).view(np.int32)[0].__add__(k).astype(np.int32).view(F32)


def refine(c0: np.ndarray, x: np.ndarray) -> np.ndarray:
    cur = c0.astype(F32)
    best = max_ulp_error(x, cur)
    print(f"rounded start: {best:.4f} ulp")
    improved = True
    while improved:
        improved = False
        for k in range(5):
            for step in (-8, -4, -2, -1, 1, 2, 4, 8):
                cand = cur.copy()
                cand[k] = _step(cur[k], step)
                err = max_ulp_error(x, cand)
                if err < best - 1e-4:
                    best, cur, improved = err, cand, True
                    print(f"  c{k + 1} {step:+d} -> {best:.4f} ulp")
    return cur


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--samples", type=int, default=3_000_000)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    x = np.concatenate([
        rng.uniform(-87.33, 0.0, args.samples * 2 // 3),
        rng.uniform(-1.0, 1.0, args.samples // 3),
    ]).astype(F32)
    c = refine(lp_fit(), x)
    for i, v in enumerate(c, 1):
        print(f'c{i}=float.fromhex("{float(v).hex()}"),')


if __name__ == "__main__":
    main()
