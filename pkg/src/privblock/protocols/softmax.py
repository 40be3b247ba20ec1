"""Secure row-wise softmax over ring shares.

Both parties run the shared-exponential gadget, re-encrypt the exponent
shares into one SIMD batch, and reduce the denominator through a masked
row-sum plus a multiplicatively masked reciprocal: the masked denominator
sum is decrypted as an exact fixed-point integer, its real-valued
reciprocal re-enters at guard-extended scale, and one ciphertext*ciphertext
product lands the quotient.  Output shares are field-domain at scale
2s + SOFTMAX_GUARD_BITS.
"""

from __future__ import annotations

import numpy as np

from ..sharing import RING, Share
from .common import PartyCtx, ProtocolOutputShares, ShapeMismatch

SOFTMAX_GUARD_BITS = 11


def _row_sums_mod(flat: np.ndarray, m: int, d: int, mod: int) -> np.ndarray:
    return np.asarray(flat.reshape(m, d).astype(object).sum(axis=1) % mod,
                      dtype=np.uint64)


def mask_band(ctx: PartyCtx, d: int) -> tuple:
    """Multiplicative mask range for the reciprocal step: large enough to
    blind the denominator, small enough that the masked product stays an
    exact integer and the reciprocal keeps its precision."""
    s, g = ctx.fp.s, SOFTMAX_GUARD_BITS
    vmax = max((1 << (s + g - 8)) // d, 2)
    return max(1, vmax // 2), vmax


def pi_softmax(ctx: PartyCtx, x_share: Share, shape: tuple,
               normalize: str = "none", label: str = "softmax") -> ProtocolOutputShares:
    """Row-wise softmax on ring shares at scale s (entries must be <= 0
    unless ``normalize='max'`` subtracts the row maximum first)."""
    m, d = shape
    if x_share.domain != RING:
        raise ShapeMismatch("softmax expects ring shares")
    if x_share.payload.size != m * d:
        raise ShapeMismatch("share length does not match shape")
    s = ctx.fp.s
    g = SOFTMAX_GUARD_BITS
    p = ctx.fp.p
    out_scale = 2 * s + g
    sess = ctx.session
    sess.push_phase(label)
    try:
        if normalize == "max":
            mx = ctx.provider.row_max(x_share, d)
            spread = np.repeat(mx.payload, d)
            ring_mod = ctx.fp.ring_mod
            x_share = x_share.like(
                (x_share.payload.astype(object) - spread.astype(object)) % ring_mod)
        e_sh = ctx.provider.rexp(x_share)  # field shares of encode(e^x, s)
        n_vals = m * d
        blocks = ctx.n_blocks(n_vals)
        vec_blocks = ctx.n_blocks(m)
        if ctx.role == "B":
            ctx.send_cts("exp_share", ctx.encrypt_blocks(e_sh.payload, "B"))
            got = ctx.recv_cts("masked_exp")
            ct_er, ct_sr = got[:blocks], got[blocks:]
            er = ctx.decrypt_blocks(ct_er, n_vals)
            sums = _row_sums_mod(er, m, d, p)
            ct_sum = ctx.blockwise(ctx.backend.add_pt,
                                   [ctx.backend.neg_ct(c) for c in ct_sr], sums)
            lo, hi = mask_band(ctx, d)
            v = ctx.rng.integers(lo, hi + 1, size=m, dtype=np.uint64)
            ct_sumv = ctx.blockwise(ctx.backend.mul_pt, ct_sum, v)
            vhat = np.repeat(v, d)
            ct_vhat = ctx.encrypt_blocks(vhat, "B")
            ctx.send_cts("denominator", ct_sumv + ct_vhat)
            share = ctx.decrypt_blocks(ctx.recv_cts("result"), n_vals)
            return ProtocolOutputShares(ctx.field_share(share), shape, out_scale, label)
        # party A
        ct_e = ctx.blockwise(ctx.backend.add_pt, ctx.recv_cts("exp_share"),
                             e_sh.payload)
        r = ctx.rand_field(n_vals)
        ct_er = ctx.blockwise(ctx.backend.add_pt, ct_e, r)
        sr = _row_sums_mod(r, m, d, p)
        ctx.send_cts("masked_exp", ct_er + ctx.encrypt_blocks(sr, "A"))
        got = ctx.recv_cts("denominator")
        ct_sumv, ct_vhat = got[:vec_blocks], got[vec_blocks:]
        u = ctx.decrypt_blocks(ct_sumv, m)  # exact integers: sum(E) * v < p
        recip = np.array([((1 << out_scale) + int(x) // 2) // max(int(x), 1)
                          for x in u], dtype=np.uint64)
        ct_recip = ctx.blockwise(ctx.backend.mul_pt, ct_vhat, np.repeat(recip, d))
        pub_b = ctx.public_of("B")
        ct_y = [ctx.backend.mul_ct(a, b, pub_b) for a, b in zip(ct_e, ct_recip)]
        mask = ctx.rand_field(n_vals)
        ctx.send_cts("result", ctx.blockwise(ctx.backend.sub_pt, ct_y, mask))
        return ProtocolOutputShares(ctx.field_share(mask), shape, out_scale, label)
    finally:
        sess.pop_phase()
