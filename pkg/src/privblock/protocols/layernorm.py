"""Secure layernorm over ring shares.

Re-centering is free on shares (a_ij = n*x_ij - sum_j x_ij is linear), the
squared row norm comes from one homomorphic squaring plus a masked row-sum,
and the inverse square root is the imported gadget.  The normalized ratio is
rescaled at the masked-decrypt step before the weight party applies
gamma*sqrt(n) and beta.  Output shares are field-domain at scale LN_OUT_SCALE.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..sharing import RING, DomainError, Share
from .common import (DegenerateRow, PartyCtx, ProtocolOutputShares,
                     ShapeMismatch, lift_masked, trunc_nonneg)

RATIO_BITS = 30       # centered scale + 1/sqrt precision, fixed budget
RATIO_SCALE = 15      # normalized ratio after decrypt-side rescale
GAMMA_SCALE = 17
LN_OUT_SCALE = RATIO_SCALE + GAMMA_SCALE
X_BOUND = 8.0         # |x| domain bound the scale budget assumes


@dataclass
class LnParams:
    """Affine normalization parameters, held by party B, encoded lazily."""

    gamma: np.ndarray
    beta: np.ndarray

    def check(self, n: int):
        if len(self.gamma) != n or len(self.beta) != n:
            raise ShapeMismatch("gamma/beta length must match the row width")


def centered_scale(fp, n: int) -> tuple:
    """(centered scale, 1/sqrt output scale): the squared row sum must stay
    below p/4, and their sum is pinned at RATIO_BITS so the masked-ratio
    lift always has the same field headroom."""
    adaptive = math.floor(0.5 * (fp.p.bit_length() - 2 - math.log2(n)
                                 - 2 * math.log2(2 * n * X_BOUND)))
    sa = min(adaptive, fp.s - 2)
    s_inv = min(RATIO_BITS - sa, 27)
    return sa, s_inv


def pi_ln(ctx: PartyCtx, x_share: Share, shape: tuple, params: LnParams | None,
          label: str = "ln") -> ProtocolOutputShares:
    """Row-wise layernorm on ring shares at scale s; gamma/beta live at B."""
    m, n = shape
    if x_share.domain != RING:
        raise ShapeMismatch("layernorm expects ring shares")
    if x_share.payload.size != m * n:
        raise ShapeMismatch("share length does not match shape")
    if ctx.role == "B":
        if params is None:
            raise ShapeMismatch("party B must supply gamma/beta")
        params.check(n)
    s = ctx.fp.s
    p = ctx.fp.p
    ring_mod = ctx.fp.ring_mod
    sa, s_inv = centered_scale(ctx.fp, n)
    sess = ctx.session
    sess.push_phase(label)
    try:
        # re-center locally: a = n*x - row_sum(x), still ring shares at scale s
        xs = x_share.payload.reshape(m, n).astype(object)
        a = (n * xs - xs.sum(axis=1, keepdims=True)) % ring_mod
        a_sh = x_share.like(np.asarray(a.ravel(), dtype=np.uint64))
        # fused rescale (s -> sa) + exact conversion into the field
        a_f = ctx.provider.ring_to_field_strict_trunc(a_sh, s - sa)
        blocks = ctx.n_blocks(m * n)
        vec_blocks = ctx.n_blocks(m)
        if ctx.role == "B":
            ctx.send_cts("ashare", ctx.encrypt_blocks(a_f.payload, "B"))
            got = ctx.recv_cts("masked_square")
            ct_a2r, ct_sr = got[:blocks], got[blocks:]
            a2r = ctx.decrypt_blocks(ct_a2r, m * n)
            sums = np.asarray(a2r.reshape(m, n).astype(object).sum(axis=1) % p,
                              dtype=np.uint64)
            ct_k = ctx.blockwise(ctx.backend.add_pt,
                                 [ctx.backend.neg_ct(c) for c in ct_sr], sums)
            v = ctx.rand_field(m)
            ctx.send_cts("masked_rowsum", ctx.blockwise(ctx.backend.sub_pt, ct_k, v))
            k_share = ctx.field_share(v)
            inv = _invsqrt(ctx, k_share, sa, s_inv)
            tiled = np.repeat(inv.payload, n)
            ctx.send_cts("invsqrt_share", ctx.encrypt_blocks(tiled, "B"))
            got = ctx.recv_cts("masked_ratio")
            ct_wr, ct_strunc = got[:blocks], got[blocks:]
            w = ctx.decrypt_blocks(ct_wr, m * n)
            shift = sa + s_inv - RATIO_SCALE
            lifted = lift_masked(w, ctx.fp, sa + s_inv + 1)
            off = 1 << (sa + s_inv - shift)
            t_b = np.asarray([((int(x) >> shift) - off) % p for x in lifted],
                             dtype=np.uint64)
            ct_ratio = ctx.blockwise(ctx.backend.add_pt, ct_strunc, t_b)
            gs = np.asarray(
                np.round(params.gamma * math.sqrt(n) * (1 << GAMMA_SCALE)).astype(object)
                % p, dtype=np.uint64)
            bs = np.asarray(
                np.round(params.beta * float(1 << LN_OUT_SCALE)).astype(object)
                % p, dtype=np.uint64)
            ct_y = ctx.blockwise(ctx.backend.mul_pt, ct_ratio, np.tile(gs, m))
            ct_y = ctx.blockwise(ctx.backend.add_pt, ct_y, np.tile(bs, m))
            mask = ctx.rand_field(m * n)
            ctx.send_cts("result", ctx.blockwise(ctx.backend.sub_pt, ct_y, mask))
            return ProtocolOutputShares(ctx.field_share(mask), shape,
                                        LN_OUT_SCALE, label)
        # party A
        ct_a = ctx.blockwise(ctx.backend.add_pt, ctx.recv_cts("ashare"), a_f.payload)
        pub_b = ctx.public_of("B")
        ct_a2 = [ctx.backend.square(c, pub_b) for c in ct_a]
        r = ctx.rand_field(m * n)
        ct_a2r = ctx.blockwise(ctx.backend.add_pt, ct_a2, r)
        sr = np.asarray(r.reshape(m, n).astype(object).sum(axis=1) % p,
                        dtype=np.uint64)
        ctx.send_cts("masked_square", ct_a2r + ctx.encrypt_blocks(sr, "A"))
        k_share = ctx.field_share(ctx.decrypt_blocks(ctx.recv_cts("masked_rowsum"), m))
        inv = _invsqrt(ctx, k_share, sa, s_inv)
        tiled = np.repeat(inv.payload, n)
        ct_inv = ctx.blockwise(ctx.backend.add_pt, ctx.recv_cts("invsqrt_share"),
                               tiled)
        ct_ratio = [ctx.backend.mul_ct(x, y, pub_b) for x, y in zip(ct_a, ct_inv)]
        # statistically-masked decrypt-side rescale of the ratio
        off_vec = np.full(m * n, np.uint64(1 << (sa + s_inv)))
        ct_off = ctx.blockwise(ctx.backend.add_pt, ct_ratio, off_vec)
        smask = ctx.rng.integers(0, p - (1 << (sa + s_inv + 1)), size=m * n,
                                 dtype=np.uint64)
        shift = sa + s_inv - RATIO_SCALE
        strunc = np.asarray([(int(v) >> shift) for v in smask], dtype=np.uint64)
        ctx.send_cts("masked_ratio",
                     ctx.blockwise(ctx.backend.sub_pt, ct_off, smask)
                     + ctx.encrypt_blocks(strunc, "A"))
        share = ctx.decrypt_blocks(ctx.recv_cts("result"), m * n)
        return ProtocolOutputShares(ctx.field_share(share), shape,
                                    LN_OUT_SCALE, label)
    finally:
        sess.pop_phase()


def _invsqrt(ctx: PartyCtx, k_share: Share, sa: int, s_inv: int) -> Share:
    # the gadget runs over the ring; charge the domain switch of its input
    ctx.provider.charge("convert", len(k_share))
    try:
        return ctx.provider.invsqrt(k_share, scale=2 * sa, out_scale=s_inv)
    except DomainError as e:
        raise DegenerateRow(f"zero-variance row: {e}") from e
