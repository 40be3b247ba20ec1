"""Shared noise-budget model (log2 domain).

High-probability canonical-style growth estimates, mirrored by both backends
so the clear backend exhausts exactly when the real one would.  Estimates
are validated empirically against measured RLWE noise in the test suite.
"""

from __future__ import annotations

import math

import numpy as np

SIGMA = 3.2


def log2add(a: float, b: float) -> float:
    return float(np.logaddexp2(a, b))


def fresh_bits(params) -> float:
    # e1 + e*u + e2*s with ternary u, s (~ sigma*sqrt(2N)) plus the
    # floor(q/p) rounding term, which scales with the message and can
    # reach q mod p
    base = math.log2(SIGMA) + 0.5 * math.log2(2 * params.n) + 2.0
    rt = params.q % params.p
    return log2add(base, math.log2(max(rt, 1))) + 0.5


def add_ct_bits(n1: float, n2: float) -> float:
    return log2add(n1, n2)


def add_pt_bits(params, n1: float) -> float:
    # plaintext add can inject a (q mod p)-scaled wrap term
    rt = params.q % params.p
    return log2add(n1, math.log2(max(rt, 1)))


def mul_pt_bits(params, n1: float, max_coeff: int) -> float:
    return n1 + 0.5 * math.log2(params.n) + math.log2(max(int(max_coeff), 1)) + 1.0


def relin_bits(params) -> float:
    # sum of limb-decomposed products with the switching-key errors
    return (math.log2(params.limbs) + 30.0 + math.log2(SIGMA)
            + 0.5 * math.log2(params.n) + 1.0)


def mul_ct_bits(params, n1: float, n2: float) -> float:
    # growth pad calibrated against measured depth-2 chains (tests hold the
    # estimate above the measurement with a few bits to spare)
    grow = (math.log2(params.p) + 0.5 * math.log2(3 * params.n) + 5.0
            + log2add(n1, n2))
    return log2add(grow, relin_bits(params))
