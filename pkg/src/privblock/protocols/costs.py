"""Closed-form byte accounting for every protocol.

Each formula reproduces, exactly, the bytes a run records on the channel:
serialized ciphertext batches (one 8-byte frame per labeled group), raw
share arrays, and the per-element gadget charges from the cost table.
The test suite holds recorded totals equal to these numbers; the benchmark
CLI prints both.
"""

from __future__ import annotations

from ..channel import FRAME_OVERHEAD
from ..hecore import ct_bytes
from ..params import Config


def _blocks(n_values: int, n_slots: int) -> int:
    return -(-n_values // n_slots)


def _gadget(cfg: Config, entry: str, n: int) -> int:
    total, _, _ = cfg.gadget_costs.cost(entry, n)
    return total


def matmul_bytes(cfg: Config, m: int, n: int, h: int) -> dict:
    ct = ct_bytes(cfg.he)
    d = _blocks(m * h, cfg.he.n)
    return {
        "inputs": FRAME_OVERHEAD + n * d * ct,
        "masked_product": FRAME_OVERHEAD + d * ct,
    }


def matmul_shared_bytes(cfg: Config, m: int, n: int, h: int) -> dict:
    out = {}
    for sub, val in matmul_bytes(cfg, m, n, h).items():
        out[f"cross_ab/{sub}"] = val
        out[f"cross_ba/{sub}"] = val
    out["local_term"] = FRAME_OVERHEAD + m * h * 8
    return out


def softmax_bytes(cfg: Config, m: int, d: int, normalize: str = "none") -> dict:
    ct = ct_bytes(cfg.he)
    blocks = _blocks(m * d, cfg.he.n)
    vec = _blocks(m, cfg.he.n)
    out = {}
    if normalize == "max":
        out["gadget:rowmax"] = _gadget(cfg, "rowmax", m * d)
    out["gadget:rexp"] = _gadget(cfg, "rexp", m * d)
    out["exp_share"] = FRAME_OVERHEAD + blocks * ct
    out["masked_exp"] = FRAME_OVERHEAD + (blocks + vec) * ct
    out["denominator"] = FRAME_OVERHEAD + (vec + blocks) * ct
    out["result"] = FRAME_OVERHEAD + blocks * ct
    return out


def ln_bytes(cfg: Config, m: int, n: int) -> dict:
    ct = ct_bytes(cfg.he)
    blocks = _blocks(m * n, cfg.he.n)
    vec = _blocks(m, cfg.he.n)
    return {
        "gadget:trunc": _gadget(cfg, "trunc", m * n),
        "gadget:convert": _gadget(cfg, "convert", m * n) + _gadget(cfg, "convert", m),
        "gadget:invsqrt": _gadget(cfg, "invsqrt", m),
        "ashare": FRAME_OVERHEAD + blocks * ct,
        "masked_square": FRAME_OVERHEAD + (blocks + vec) * ct,
        "masked_rowsum": FRAME_OVERHEAD + vec * ct,
        "invsqrt_share": FRAME_OVERHEAD + blocks * ct,
        "masked_ratio": FRAME_OVERHEAD + 2 * blocks * ct,
        "result": FRAME_OVERHEAD + blocks * ct,
    }


def gelu_bytes(cfg: Config, m: int, w: int, with_wrapper: bool = True,
               n_segments: int = 3, n_cubes: int = 2, n_quartics: int = 2) -> dict:
    ct = ct_bytes(cfg.he)
    blocks = _blocks(m * w, cfg.he.n)
    n_vals = m * w
    out = {}
    if with_wrapper:
        out["encrypt_input"] = FRAME_OVERHEAD + blocks * ct
    out["gadget:convert"] = _gadget(cfg, "convert", n_vals)
    out["gadget:lt"] = 4 * _gadget(cfg, "lt", n_vals)
    out["gadget:b2a"] = 5 * _gadget(cfg, "b2a", n_vals)
    out["input_and_squares"] = FRAME_OVERHEAD + (1 + n_segments) * blocks * ct
    out["selector_and_square_shares"] = FRAME_OVERHEAD + (5 + n_segments) * blocks * ct
    out["masked_powers"] = FRAME_OVERHEAD + (n_cubes + n_quartics) * blocks * ct
    out["power_shares"] = FRAME_OVERHEAD + (n_cubes + n_quartics) * blocks * ct
    out["result"] = FRAME_OVERHEAD + blocks * ct
    return out


def total(breakdown: dict) -> int:
    return sum(breakdown.values())
