"""Negacyclic number-theoretic transforms over NTT-friendly primes.

Transforms are length-N over Z_prime with X^N + 1 reduction folded in via
powers of a primitive 2N-th root of unity (forward: Cooley-Tukey with
bit-reversed output; inverse: Gentleman-Sande).  Pointwise products of two
forward transforms correspond to negacyclic polynomial products, which is
exactly the slot algebra the SIMD scheme needs.  Tables are cached per
(prime, N).

Primes up to 30 bits use direct uint64 products; wider primes (the plaintext
modulus is ~37 bits) go through a split multiplier so intermediates stay
below 2^63.
"""

from __future__ import annotations

import numpy as np

_TABLES: dict = {}


def _pow_mod(base: int, exp: int, mod: int) -> int:
    return pow(base, exp, mod)


def _find_generator(p: int) -> int:
    # factor p-1 (small prime sets here: p-1 = 2^a * odd with small factors)
    n = p - 1
    factors = set()
    d = 2
    m = n
    while d * d <= m:
        while m % d == 0:
            factors.add(d)
            m //= d
        d += 1
    if m > 1:
        factors.add(m)
    g = 2
    while True:
        if all(_pow_mod(g, n // f, p) != 1 for f in factors):
            return g
        g += 1


def _bit_reverse(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


class NttPlan:
    """Cached twiddle tables for one (prime, N)."""

    def __init__(self, prime: int, n: int):
        if (prime - 1) % (2 * n) != 0:
            raise ValueError(f"prime {prime} is not 1 mod 2N for N={n}")
        self.prime = prime
        self.n = n
        self.wide = prime.bit_length() > 30
        g = _find_generator(prime)
        psi = _pow_mod(g, (prime - 1) // (2 * n), prime)
        if _pow_mod(psi, n, prime) != prime - 1:
            raise ValueError("not a primitive 2N-th root")
        psi_inv = _pow_mod(psi, 2 * n - 1, prime)
        rev = _bit_reverse(n)
        powers = np.array([_pow_mod(psi, int(i), prime) for i in range(n)],
                          dtype=np.uint64)
        ipowers = np.array([_pow_mod(psi_inv, int(i), prime) for i in range(n)],
                           dtype=np.uint64)
        self.psi_rev = powers[rev]
        self.ipsi_rev = ipowers[rev]
        self.n_inv = np.uint64(_pow_mod(n, prime - 2, prime))

    # -- modular product helpers (vectorized) -----------------------------
    def _mul(self, a, b):
        p = np.uint64(self.prime)
        if not self.wide:
            return (a * b) % p
        # split b = hi*2^19 + lo so partial products stay under 2^63
        hi = b >> np.uint64(19)
        lo = b & np.uint64((1 << 19) - 1)
        part = ((a * hi) % p) << np.uint64(19)
        return (part + a * lo) % p

    def forward(self, coeffs: np.ndarray) -> np.ndarray:
        """Coefficients -> NTT values (bit-reversed order)."""
        p = np.uint64(self.prime)
        a = np.ascontiguousarray(coeffs % p, dtype=np.uint64).copy()
        n = self.n
        t = n
        m = 1
        while m < n:
            t >>= 1
            view = a.reshape(m, 2, t)
            s = self.psi_rev[m:2 * m].reshape(m, 1)
            u = view[:, 0, :]
            v = self._mul(view[:, 1, :], s)
            lo = (u + v) % p
            hi = (u + p - v) % p
            view[:, 0, :] = lo
            view[:, 1, :] = hi
            m <<= 1
        return a

    def inverse(self, values: np.ndarray) -> np.ndarray:
        """NTT values (bit-reversed order) -> coefficients."""
        p = np.uint64(self.prime)
        a = np.ascontiguousarray(values % p, dtype=np.uint64).copy()
        n = self.n
        t = 1
        m = n
        while m > 1:
            h = m >> 1
            view = a.reshape(h, 2, t)
            s = self.ipsi_rev[h:m].reshape(h, 1)
            u = view[:, 0, :]
            v = view[:, 1, :]
            lo = (u + v) % p
            hi = self._mul((u + p - v) % p, s)
            view[:, 0, :] = lo
            view[:, 1, :] = hi
            t <<= 1
            m = h
        return self._mul(a, self.n_inv)

    def pointwise(self, x, y):
        return self._mul(np.asarray(x, dtype=np.uint64), np.asarray(y, dtype=np.uint64))


def get_plan(prime: int, n: int) -> NttPlan:
    key = (prime, n)
    plan = _TABLES.get(key)
    if plan is None:
        plan = NttPlan(prime, n)
        _TABLES[key] = plan
    return plan


def negacyclic_mul_int(a_coeffs, b_coeffs, aux_primes, n: int):
    """Exact integer negacyclic product of two big-integer coefficient
    vectors via CRT over ``aux_primes`` (product must exceed twice the
    magnitude bound of the result)."""
    residues = []
    for pr in aux_primes:
        plan = get_plan(pr, n)
        ar = np.asarray(a_coeffs % pr, dtype=np.uint64)
        br = np.asarray(b_coeffs % pr, dtype=np.uint64)
        residues.append(plan.inverse(plan.pointwise(plan.forward(ar), plan.forward(br))))
    return crt_reconstruct_centered(residues, aux_primes)


def crt_reconstruct_centered(residues, primes):
    """Combine per-prime residue vectors into centered big integers."""
    import math

    M = math.prod(int(p) for p in primes)
    acc = np.zeros(len(residues[0]), dtype=object)
    for r, p in zip(residues, primes):
        mi = M // int(p)
        gi = (mi * pow(mi, -1, int(p))) % M
        acc = acc + r.astype(object) * gi
    acc %= M
    half = M >> 1
    return np.where(acc > half, acc - M, acc)
