"""SIMD lattice HE core.

Exactly the operation surface the protocols need: KeyGen, Encrypt, Decrypt,
ciphertext+plaintext add/sub, ciphertext*plaintext multiply,
ciphertext*ciphertext multiply, and Square.  There is deliberately no
rotation anywhere in this API.

Two interchangeable backends implement the surface: ``rlwe`` (a real
RLWE/NTT scheme with exact plaintext semantics mod p) and ``clear``
(plaintext slot vectors with a mirrored noise-budget model) for fast oracle
testing.  Both serialize ciphertexts to the identical wire format and byte
size, so cost accounting is backend-independent.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from ..params import HeParams, ParamError

CT_MAGIC = b"PBC1"
HEADER_BYTES = 16


class KeyMismatch(ValueError):
    pass


class MissingRelinKey(ValueError):
    pass


class NoiseExhausted(RuntimeError):
    pass


class MalformedBytes(ValueError):
    pass


@dataclass
class SimdPlaintext:
    """A packed vector of N slots over Z_p; unused tail slots are zero."""

    slots: np.ndarray

    @classmethod
    def pack(cls, values, params: HeParams) -> "SimdPlaintext":
        v = np.asarray(values, dtype=np.uint64).ravel()
        if v.size > params.n:
            raise ParamError(f"{v.size} values exceed {params.n} slots")
        if v.size and int(v.max()) >= params.p:
            raise ParamError("slot values must be < p")
        out = np.zeros(params.n, dtype=np.uint64)
        out[:v.size] = v
        return cls(out)


def ct_bytes(params: HeParams, n_components: int = 2) -> int:
    """Serialized ciphertext size; identical for both backends."""
    return HEADER_BYTES + n_components * params.limbs * params.n * 4


def pack_header(params: HeParams, n_components: int, owner: str,
                backend_id: int, noise_bits: float) -> bytes:
    return (CT_MAGIC + params.param_hash()
            + struct.pack(">BBBB", n_components, ord(owner), backend_id, 0)
            + struct.pack(">f", noise_bits))


def parse_header(data: bytes, params: HeParams):
    if len(data) < HEADER_BYTES or data[:4] != CT_MAGIC:
        raise MalformedBytes("bad ciphertext magic")
    if data[4:8] != params.param_hash():
        raise MalformedBytes("ciphertext was built under different parameters")
    ncomp, owner, backend_id, _ = struct.unpack(">BBBB", data[8:12])
    (noise_bits,) = struct.unpack(">f", data[12:16])
    return ncomp, chr(owner), backend_id, noise_bits


def noise_budget_bits(params: HeParams, noise_bits: float) -> float:
    """Remaining headroom before decryption becomes unreliable."""
    return params.q_bits - params.p.bit_length() - 1 - noise_bits


def create_backend(params: HeParams, kind: str, rng: np.random.Generator | None = None):
    if kind == "clear":
        from .clear import ClearBackend
        return ClearBackend(params, rng)
    if kind == "rlwe":
        from .rlwe import RlweBackend
        return RlweBackend(params, rng)
    raise ParamError(f"unknown HE backend {kind!r}")
