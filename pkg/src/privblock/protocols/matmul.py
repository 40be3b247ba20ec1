"""Rotation-free secure matrix multiplication.

The data party flattens its left matrix by rows and replicates each row
entry across the output columns; the weight party replicates its right
matrix down the output rows.  Slot-aligned ciphertext*plaintext products
accumulated over the inner dimension then land the full product, row-major,
in the output slots: one ciphertext batch in, one masked batch back, and no
slot rotation anywhere.
"""

from __future__ import annotations

import numpy as np

from ..sharing import FIELD, Share
from .common import PartyCtx, ProtocolOutputShares, ShapeMismatch

_SPLIT = 19
_MASK = (1 << _SPLIT) - 1


def matmod(a: np.ndarray, b: np.ndarray, p: int) -> np.ndarray:
    """Exact (a @ b) mod p for uint64 matrices with entries < 2^37."""
    ah = (a >> np.uint64(_SPLIT)).astype(np.int64)
    al = (a & np.uint64(_MASK)).astype(np.int64)
    bh = (b >> np.uint64(_SPLIT)).astype(np.int64)
    bl = (b & np.uint64(_MASK)).astype(np.int64)
    hh = ah @ bh
    hl = ah @ bl
    lh = al @ bh
    ll = al @ bl
    comb = (hh.astype(object) << (2 * _SPLIT)) + ((hl + lh).astype(object) << _SPLIT) + ll
    return np.asarray(comb % p, dtype=np.uint64)


def expand_left(mat: np.ndarray, h: int) -> list:
    """Row j of the expanded left operand: entry (i*h + c) = mat[i, j]."""
    return [np.repeat(mat[:, j], h) for j in range(mat.shape[1])]


def expand_right(mat: np.ndarray, m: int) -> list:
    """Row j of the expanded right operand: entry (i*h + c) = mat[j, c]."""
    return [np.tile(mat[j, :], m) for j in range(mat.shape[0])]


def pi_matmul(ctx: PartyCtx, mat, shape: tuple, data_party: str = "A",
              label: str = "matmul", scale: int | None = None) -> ProtocolOutputShares:
    """Two-party product C = L (x) R with L held by ``data_party`` and R by
    the other party.  Outputs additive field shares of C at scale
    scale(L)+scale(R); the data party ends with C - R_mask, the weight party
    with R_mask.  Exact mod p."""
    m, n, h = shape
    if min(m, n, h) < 1:
        raise ShapeMismatch("all dimensions must be >= 1")
    out_scale = 2 * ctx.fp.s if scale is None else scale
    sess = ctx.session
    sess.push_phase(label)
    try:
        out_len = m * h
        blocks = ctx.n_blocks(out_len)
        if ctx.role == data_party:
            mat = np.asarray(mat, dtype=np.uint64)
            if mat.shape != (m, n):
                raise ShapeMismatch(f"left matrix is {mat.shape}, expected {(m, n)}")
            cts = []
            for row in expand_left(mat, h):
                cts.extend(ctx.encrypt_blocks(row, ctx.role))
            ctx.send_cts("inputs", cts)
            got = ctx.recv_cts("masked_product")
            share = ctx.decrypt_blocks(got, out_len)
            return ProtocolOutputShares(ctx.field_share(share), (m, h), out_scale, label)
        mat = np.asarray(mat, dtype=np.uint64)
        if mat.shape != (n, h):
            raise ShapeMismatch(f"right matrix is {mat.shape}, expected {(n, h)}")
        cts = ctx.recv_cts("inputs")
        if len(cts) != n * blocks:
            raise ShapeMismatch("unexpected ciphertext count from data party")
        nslots = ctx.he_params.n
        acc = [None] * blocks
        rows = expand_right(mat, m)
        for j in range(n):
            for b in range(blocks):
                term = ctx.backend.mul_pt(cts[j * blocks + b],
                                          rows[j][b * nslots:(b + 1) * nslots])
                acc[b] = term if acc[b] is None else ctx.backend.add_ct(acc[b], term)
        mask = ctx.rand_field(out_len)
        out = ctx.blockwise(ctx.backend.sub_pt, acc, mask)
        ctx.send_cts("masked_product", out)
        return ProtocolOutputShares(ctx.field_share(mask), (m, h), out_scale, label)
    finally:
        sess.pop_phase()


def pi_matmul_shared(ctx: PartyCtx, q_share: Share, k_share: Share,
                     q_shape: tuple, k_shape: tuple, transpose_right: bool = True,
                     label: str = "mmshared",
                     scale: int | None = None) -> ProtocolOutputShares:
    """Product of two secret-shared matrices, assembled from two local share
    products, two cross-term matmul invocations with swapped data parties,
    and a single masked exchange of the weight party's local term."""
    m, n = q_shape
    if transpose_right:
        h, n2 = k_shape
    else:
        n2, h = k_shape
    if n2 != n:
        raise ShapeMismatch(f"inner dimensions differ: {n} vs {n2}")
    if q_share.domain != FIELD or k_share.domain != FIELD:
        raise ShapeMismatch("shared matmul expects field shares")
    out_scale = 2 * ctx.fp.s if scale is None else scale
    p = ctx.fp.p
    q_mat = q_share.payload.reshape(q_shape)
    k_mat = k_share.payload.reshape(k_shape)
    rt = k_mat.T.copy() if transpose_right else k_mat
    sess = ctx.session
    sess.push_phase(label)
    try:
        local = matmod(q_mat, rt, p)
        # cross term 1: A's q-share against B's k-share
        mine = q_mat if ctx.role == "A" else rt
        c1 = pi_matmul(ctx, mine, (m, n, h), data_party="A", label="cross_ab")
        # cross term 2: B's q-share against A's k-share
        mine = rt if ctx.role == "A" else q_mat
        c2 = pi_matmul(ctx, mine, (m, n, h), data_party="B", label="cross_ba")
        if ctx.role == "B":
            mask = ctx.rand_field(m * h)
            ctx.send_array("local_term", (local.ravel().astype(object) - mask.astype(object)) % p)
            total = (mask.astype(object) + c1.share.payload.astype(object)
                     + c2.share.payload.astype(object)) % p
        else:
            peer_local = ctx.recv_array("local_term")
            total = (local.ravel().astype(object) + peer_local.astype(object)
                     + c1.share.payload.astype(object)
                     + c2.share.payload.astype(object)) % p
        share = ctx.field_share(np.asarray(total, dtype=np.uint64))
        return ProtocolOutputShares(share, (m, h), out_scale, label)
    finally:
        sess.pop_phase()
