"""Clear backend: the HE surface over unencrypted slot vectors.

Slot math is bit-identical to what the RLWE backend decrypts to; the noise
budget is the mirrored estimate.  Used as the differential-testing oracle
and as the fast lane for CI and desk-scale cost runs.
"""

from __future__ import annotations

import numpy as np

from . import (HEADER_BYTES, KeyMismatch, MalformedBytes, MissingRelinKey,
               NoiseExhausted, ct_bytes, noise_budget_bits, pack_header,
               parse_header)
from ..params import HeParams
from . import noise

BACKEND_ID = 0
_SPLIT = np.uint64(19)
_LOWMASK = np.uint64((1 << 19) - 1)


def mulmod_vec(a, b, p: int):
    """(a * b) mod p for vectors with p up to ~44 bits."""
    p64 = np.uint64(p)
    a = np.asarray(a, dtype=np.uint64)
    b = np.asarray(b, dtype=np.uint64)
    hi = b >> _SPLIT
    lo = b & _LOWMASK
    return (((a * hi) % p64 << _SPLIT) + a * lo) % p64


class ClearPublicKey:
    def __init__(self, owner: str):
        self.owner = owner
        self.has_relin = True

    def to_bytes(self) -> bytes:
        return b"CLRK" + self.owner.encode()

    @classmethod
    def from_bytes(cls, data: bytes):
        if data[:4] != b"CLRK":
            raise MalformedBytes("bad clear public key blob")
        return cls(data[4:5].decode())


class ClearKeyPair:
    def __init__(self, owner: str):
        self.owner = owner
        self.public = ClearPublicKey(owner)


class ClearCiphertext:
    __slots__ = ("slots", "owner", "noise_bits", "ncomp")

    def __init__(self, slots, owner, noise_bits, ncomp=2):
        self.slots = np.asarray(slots, dtype=np.uint64)
        self.owner = owner
        self.noise_bits = float(noise_bits)
        self.ncomp = ncomp


class ClearBackend:
    kind = "clear"

    def __init__(self, params: HeParams, rng=None):
        self.params = params
        self.rng = rng or np.random.default_rng()

    # -- keys ---------------------------------------------------------------
    def keygen(self, owner: str) -> ClearKeyPair:
        return ClearKeyPair(owner)

    # -- core ops -------------------------------------------------------------
    def encrypt(self, slots, public: ClearPublicKey) -> ClearCiphertext:
        v = np.zeros(self.params.n, dtype=np.uint64)
        src = np.asarray(slots, dtype=np.uint64).ravel()
        v[:src.size] = src
        return ClearCiphertext(v, public.owner, noise.fresh_bits(self.params))

    def decrypt(self, ct: ClearCiphertext, keypair: ClearKeyPair) -> np.ndarray:
        if ct.owner != keypair.owner:
            raise KeyMismatch(f"ciphertext owned by {ct.owner}, key is {keypair.owner}")
        if noise_budget_bits(self.params, ct.noise_bits) <= 0:
            raise NoiseExhausted("noise budget exhausted")
        return ct.slots.copy()

    def add_ct(self, x: ClearCiphertext, y: ClearCiphertext) -> ClearCiphertext:
        self._same_owner(x, y)
        p = np.uint64(self.params.p)
        return ClearCiphertext((x.slots + y.slots) % p, x.owner,
                               noise.add_ct_bits(x.noise_bits, y.noise_bits))

    def neg_ct(self, x: ClearCiphertext) -> ClearCiphertext:
        p = np.uint64(self.params.p)
        return ClearCiphertext((p - x.slots) % p, x.owner, x.noise_bits)

    def add_pt(self, x: ClearCiphertext, slots) -> ClearCiphertext:
        p = np.uint64(self.params.p)
        v = self._pad(slots)
        return ClearCiphertext((x.slots + v) % p, x.owner,
                               noise.add_pt_bits(self.params, x.noise_bits))

    def sub_pt(self, x: ClearCiphertext, slots) -> ClearCiphertext:
        p = np.uint64(self.params.p)
        v = self._pad(slots)
        return ClearCiphertext((x.slots + p - v) % p, x.owner,
                               noise.add_pt_bits(self.params, x.noise_bits))

    def mul_pt(self, x: ClearCiphertext, slots) -> ClearCiphertext:
        v = self._pad(slots)
        out = mulmod_vec(x.slots, v, self.params.p)
        # centered plaintext magnitude drives the growth estimate
        half = self.params.p >> 1
        centered = np.where(v.astype(object) > half,
                            self.params.p - v.astype(object), v.astype(object))
        maxc = int(max(centered.max(), 1)) if centered.size else 1
        return ClearCiphertext(out, x.owner,
                               noise.mul_pt_bits(self.params, x.noise_bits, maxc))

    def mul_ct(self, x: ClearCiphertext, y: ClearCiphertext,
               public: ClearPublicKey) -> ClearCiphertext:
        self._same_owner(x, y)
        if not getattr(public, "has_relin", False):
            raise MissingRelinKey("relinearization key required for ct*ct")
        out = mulmod_vec(x.slots, y.slots, self.params.p)
        nb = noise.mul_ct_bits(self.params, x.noise_bits, y.noise_bits)
        if noise_budget_bits(self.params, nb) <= 0:
            raise NoiseExhausted("multiplication would exhaust the noise budget")
        return ClearCiphertext(out, x.owner, nb)

    def square(self, x: ClearCiphertext, public: ClearPublicKey) -> ClearCiphertext:
        return self.mul_ct(x, x, public)

    # -- wire format ---------------------------------------------------------
    def serialize(self, ct: ClearCiphertext) -> bytes:
        total = ct_bytes(self.params, ct.ncomp)
        head = pack_header(self.params, ct.ncomp, ct.owner, BACKEND_ID, ct.noise_bits)
        body = ct.slots.astype("<u8").tobytes()
        pad = total - len(head) - len(body)
        if pad < 0:
            raise MalformedBytes("slot payload exceeds wire size")
        return head + body + b"\x00" * pad

    def deserialize(self, data: bytes) -> ClearCiphertext:
        ncomp, owner, backend_id, noise_bits = parse_header(data, self.params)
        if backend_id != BACKEND_ID:
            raise MalformedBytes("ciphertext from a different backend")
        if len(data) != ct_bytes(self.params, ncomp):
            raise MalformedBytes("truncated or padded ciphertext stream")
        n = self.params.n
        slots = np.frombuffer(data, dtype="<u8", count=n, offset=HEADER_BYTES).copy()
        return ClearCiphertext(slots, owner, noise_bits, ncomp)

    # -- helpers ---------------------------------------------------------------
    def _pad(self, slots) -> np.ndarray:
        v = np.zeros(self.params.n, dtype=np.uint64)
        src = np.asarray(slots, dtype=np.uint64).ravel()
        v[:src.size] = src
        return v

    def _same_owner(self, x, y):
        if x.owner != y.owner:
            raise KeyMismatch("ciphertexts under different keys")
