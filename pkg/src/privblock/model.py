"""Transformer-block orchestration over the two-party protocols.

Party A holds the (pre-embedded) input activations, party B holds all block
weights.  One block = multi-head attention (per-head projections, scaled
scores, softmax, value mixing, output projection), residual + layernorm,
then the two-layer feed-forward with the piecewise gelu, residual +
layernorm.  Every stage's output shares are rescaled back to scale s before
the next stage.  A double-precision reference evaluator drives all
equivalence tests.
"""

from __future__ import annotations

import io
import math
import struct
from dataclasses import dataclass

import numpy as np

from . import fixedpoint as fp
from .approx import gelu_exact
from .protocols import (LnParams, PartyCtx, pi_gelu, pi_ln, pi_matmul,
                        pi_matmul_shared, pi_softmax)
from .protocols.common import ProtocolOutputShares, ShapeMismatch
from .protocols.matmul import matmod
from .sharing import FIELD, Share

WEIGHT_MAGIC = b"PBW1"


class ParseError(ValueError):
    pass


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class BlockConfig:
    """Block dimensions; hidden size must equal heads * head width."""

    d_s: int = 128
    d_m: int = 768
    h: int = 12
    d_k: int = 64
    d_f: int = 3072

    def __post_init__(self):
        if self.d_m != self.h * self.d_k:
            raise ShapeError("d_m must equal h * d_k")

    def to_tuple(self):
        return (self.d_s, self.d_m, self.h, self.d_k, self.d_f)


def toy_block_config() -> BlockConfig:
    return BlockConfig(d_s=8, d_m=16, h=2, d_k=8, d_f=32)


WEIGHT_SHAPES = {
    "wq": ("h", "d_m", "d_k"),
    "wk": ("h", "d_m", "d_k"),
    "wv": ("h", "d_m", "d_k"),
    "wo": ("d_m", "d_m"),
    "wf1": ("d_m", "d_f"),
    "bf1": ("d_f",),
    "wf2": ("d_f", "d_m"),
    "bf2": ("d_m",),
    "ln1_g": ("d_m",),
    "ln1_b": ("d_m",),
    "ln2_g": ("d_m",),
    "ln2_b": ("d_m",),
}


class BlockWeights:
    """Named float64 weight tensors with config-consistent shapes."""

    def __init__(self, config: BlockConfig, tensors: dict):
        self.config = config
        dims = {"h": config.h, "d_m": config.d_m, "d_k": config.d_k,
                "d_f": config.d_f, "d_s": config.d_s}
        for name, spec in WEIGHT_SHAPES.items():
            if name not in tensors:
                raise ShapeError(f"missing weight tensor {name!r}")
            want = tuple(dims[d] for d in spec)
            got = np.asarray(tensors[name], dtype=np.float64)
            if got.shape != want:
                raise ShapeError(f"{name}: shape {got.shape}, expected {want}")
            tensors[name] = got
        self.tensors = tensors

    def __getitem__(self, name):
        return self.tensors[name]

    @classmethod
    def random(cls, config: BlockConfig, rng: np.random.Generator,
               weight_std: float | None = None) -> "BlockWeights":
        std = weight_std if weight_std is not None else 0.5 / math.sqrt(config.d_m)
        dims = {"h": config.h, "d_m": config.d_m, "d_k": config.d_k,
                "d_f": config.d_f}
        tensors = {}
        for name, spec in WEIGHT_SHAPES.items():
            shape = tuple(dims[d] for d in spec)
            if name.endswith("_g"):
                tensors[name] = rng.uniform(0.5, 1.5, size=shape)
            elif name.startswith("b") or name.endswith("_b"):
                tensors[name] = rng.uniform(-0.5, 0.5, size=shape)
            else:
                tensors[name] = rng.normal(0.0, std, size=shape)
        return cls(config, tensors)


def dump_weights(weights: BlockWeights, path: str):
    cfg = weights.config
    buf = io.BytesIO()
    buf.write(WEIGHT_MAGIC)
    buf.write(struct.pack(">HIIIII", 1, *cfg.to_tuple()))
    for name in sorted(weights.tensors):
        arr = weights.tensors[name]
        blob = name.encode()
        buf.write(struct.pack(">H", len(blob)))
        buf.write(blob)
        buf.write(struct.pack(">B", arr.ndim))
        buf.write(struct.pack(f">{arr.ndim}I", *arr.shape))
        buf.write(arr.astype("<f8").tobytes())
    with open(path, "wb") as f:
        f.write(buf.getvalue())


def load_weights(path: str) -> BlockWeights:
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != WEIGHT_MAGIC:
        raise ParseError("not a weight container")
    try:
        version, d_s, d_m, h, d_k, d_f = struct.unpack(">HIIIII", data[4:26])
    except struct.error as e:
        raise ParseError(f"bad header: {e}") from e
    if version != 1:
        raise ParseError(f"unsupported container version {version}")
    try:
        config = BlockConfig(d_s, d_m, h, d_k, d_f)
    except ShapeError as e:
        raise ShapeError(f"inconsistent dimensions in header: {e}") from e
    off = 26
    tensors = {}
    while off < len(data):
        (nlen,) = struct.unpack(">H", data[off:off + 2])
        off += 2
        name = data[off:off + nlen].decode()
        off += nlen
        ndim = data[off]
        off += 1
        shape = struct.unpack(f">{ndim}I", data[off:off + 4 * ndim])
        off += 4 * ndim
        count = int(np.prod(shape))
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=off)
        off += 8 * count
        tensors[name] = arr.reshape(shape).copy()
    return BlockWeights(config, tensors)


# ---------------------------------------------------------------------------
# double-precision reference
# ---------------------------------------------------------------------------

def oracle_softmax(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def oracle_layernorm(x: np.ndarray, gamma, beta) -> np.ndarray:
    mu = x.mean(axis=-1, keepdims=True)
    sd = np.sqrt(((x - mu) ** 2).mean(axis=-1, keepdims=True))
    return gamma * (x - mu) / sd + beta


def oracle_attention(q, k, v):
    d_k = q.shape[-1]
    return oracle_softmax(q @ k.T / math.sqrt(d_k)) @ v


def oracle_block(x: np.ndarray, weights: BlockWeights,
                 config: BlockConfig) -> np.ndarray:
    heads = []
    for i in range(config.h):
        q = x @ weights["wq"][i]
        k = x @ weights["wk"][i]
        v = x @ weights["wv"][i]
        heads.append(oracle_attention(q, k, v))
    mh = np.concatenate(heads, axis=1) @ weights["wo"]
    h1 = oracle_layernorm(x + mh, weights["ln1_g"], weights["ln1_b"])
    ffn = gelu_exact(h1 @ weights["wf1"] + weights["bf1"]) @ weights["wf2"] + weights["bf2"]
    return oracle_layernorm(h1 + ffn, weights["ln2_g"], weights["ln2_b"])


# ---------------------------------------------------------------------------
# two-party block driver
# ---------------------------------------------------------------------------

def _rescale(ctx: PartyCtx, out: ProtocolOutputShares,
             to_scale: int) -> ProtocolOutputShares:
    shift = out.scale - to_scale
    if shift == 0:
        return out
    sh = ctx.provider.rescale_field(out.share, shift)
    return ProtocolOutputShares(sh, out.shape, to_scale, out.label)


def _matmul_shared_plain(ctx: PartyCtx, x_sh: Share, w_enc, shape,
                         label: str) -> ProtocolOutputShares:
    """Shared activations times B-held plaintext weights: one matmul
    invocation on A's share plus B's local product folded into its share."""
    m, n, h = shape
    out = pi_matmul(ctx, x_sh.payload.reshape(m, n) if ctx.role == "A" else w_enc,
                    shape, data_party="A", label=label)
    if ctx.role == "B":
        local = matmod(x_sh.payload.reshape(m, n), w_enc, ctx.fp.p)
        merged = (out.share.payload.astype(object)
                  + local.ravel().astype(object)) % ctx.fp.p
        out = ProtocolOutputShares(ctx.field_share(np.asarray(merged, dtype=np.uint64)),
                                   out.shape, out.scale, out.label)
    return out


def _add_shares(ctx: PartyCtx, a: ProtocolOutputShares,
                b: ProtocolOutputShares) -> ProtocolOutputShares:
    if a.scale != b.scale or a.shape != b.shape:
        raise ShapeMismatch("residual operands disagree")
    merged = (a.share.payload.astype(object) + b.share.payload.astype(object)) % ctx.fp.p
    return ProtocolOutputShares(ctx.field_share(np.asarray(merged, dtype=np.uint64)),
                                a.shape, a.scale, a.label)


def _mul_public(ctx: PartyCtx, a: ProtocolOutputShares, const_enc: int,
                added_scale: int) -> ProtocolOutputShares:
    from .hecore.clear import mulmod_vec
    pay = mulmod_vec(a.share.payload, np.full(a.share.payload.size,
                                              np.uint64(const_enc)), ctx.fp.p)
    return ProtocolOutputShares(ctx.field_share(pay), a.shape,
                                a.scale + added_scale, a.label)


def infer_block(ctx: PartyCtx, x_or_shares, weights: BlockWeights | None,
                config: BlockConfig) -> ProtocolOutputShares:
    """Run one block; party A supplies the input matrix (or its share),
    party B supplies the weights.  Returns field shares at scale s."""
    s = ctx.fp.s
    p = ctx.fp.p
    d_s, d_m, h, d_k, d_f = config.to_tuple()
    enc = lambda mat, scale=s: fp.encode_int(mat, ctx.fp, FIELD, scale)

    if ctx.role == "A":
        arr = np.asarray(x_or_shares)
        x_enc = arr if arr.dtype == np.uint64 else enc(arr.astype(np.float64))
        if x_enc.shape != (d_s, d_m):
            raise ShapeError(f"input is {x_enc.shape}, expected {(d_s, d_m)}")
        x_sh = ProtocolOutputShares(ctx.field_share(x_enc.ravel()), (d_s, d_m), s, "input")
        w = {}
    else:
        if weights is None:
            raise ShapeError("party B must supply weights")
        w = {name: enc(weights[name]) for name in ("wo", "wf1", "wf2")}
        w["wq"] = [enc(weights["wq"][i]) for i in range(h)]
        w["wk"] = [enc(weights["wk"][i]) for i in range(h)]
        w["wv"] = [enc(weights["wv"][i]) for i in range(h)]
        x_sh = ProtocolOutputShares(ctx.field_share(np.zeros(d_s * d_m, dtype=np.uint64)),
                                    (d_s, d_m), s, "input")

    sess = ctx.session
    inv_sqrt_dk = int(round((1 << s) / math.sqrt(d_k)))
    head_outs = []
    for i in range(h):
        sess.push_phase(f"head{i}")
        try:
            qkv = {}
            for name in ("wq", "wk", "wv"):
                mat = x_sh.matrix() if ctx.role == "A" else w[name][i]
                out = pi_matmul(ctx, mat, (d_s, d_m, d_k), label=name)
                qkv[name] = _rescale(ctx, out, s)
            scores = pi_matmul_shared(ctx, qkv["wq"].share, qkv["wk"].share,
                                      (d_s, d_k), (d_s, d_k), transpose_right=True,
                                      label="scores")
            scores = _rescale(ctx, scores, s)
            scores = _rescale(ctx, _mul_public(ctx, scores, inv_sqrt_dk, s), s)
            ring_sh = ctx.provider.field_to_ring(scores.share)
            sm = pi_softmax(ctx, ring_sh, (d_s, d_s), normalize="max")
            sm = _rescale(ctx, sm, s)
            mixed = pi_matmul_shared(ctx, sm.share, qkv["wv"].share,
                                     (d_s, d_s), (d_s, d_k), transpose_right=False,
                                     label="mix")
            head_outs.append(_rescale(ctx, mixed, s))
        finally:
            sess.pop_phase()

    concat = np.concatenate([o.matrix() for o in head_outs], axis=1)
    h_sh = ProtocolOutputShares(ctx.field_share(concat.ravel()), (d_s, d_m), s, "concat")

    sess.push_phase("proj")
    try:
        proj = _matmul_shared_plain(ctx, h_sh.share, w.get("wo"),
                                    (d_s, d_m, d_m), label="wo")
        proj = _rescale(ctx, proj, s)
    finally:
        sess.pop_phase()

    res1 = _add_shares(ctx, proj, x_sh)
    sess.push_phase("ln1")
    try:
        ring_sh = ctx.provider.field_to_ring(res1.share)
        ln1 = pi_ln(ctx, ring_sh, (d_s, d_m),
                    LnParams(weights["ln1_g"], weights["ln1_b"]) if ctx.role == "B" else None,
                    label="core")
        ln1 = _rescale(ctx, ln1, s)
    finally:
        sess.pop_phase()

    sess.push_phase("ffn1")
    try:
        u = _matmul_shared_plain(ctx, ln1.share, w.get("wf1"),
                                 (d_s, d_m, d_f), label="wf1")
        if ctx.role == "B":
            bias = np.tile(fp.encode_int(weights["bf1"], ctx.fp, FIELD, u.scale), d_s)
            merged = (u.share.payload.astype(object) + bias.astype(object)) % p
            u = ProtocolOutputShares(ctx.field_share(np.asarray(merged, dtype=np.uint64)),
                                     u.shape, u.scale, u.label)
        u = _rescale(ctx, u, s)
    finally:
        sess.pop_phase()

    sess.push_phase("act")
    try:
        g = pi_gelu(ctx, u.share, (d_s, d_f), label="core")
        g = _rescale(ctx, g, s)
    finally:
        sess.pop_phase()

    sess.push_phase("ffn2")
    try:
        z = _matmul_shared_plain(ctx, g.share, w.get("wf2"),
                                 (d_s, d_f, d_m), label="wf2")
        if ctx.role == "B":
            bias = np.tile(fp.encode_int(weights["bf2"], ctx.fp, FIELD, z.scale), d_s)
            merged = (z.share.payload.astype(object) + bias.astype(object)) % p
            z = ProtocolOutputShares(ctx.field_share(np.asarray(merged, dtype=np.uint64)),
                                     z.shape, z.scale, z.label)
        z = _rescale(ctx, z, s)
    finally:
        sess.pop_phase()

    res2 = _add_shares(ctx, z, ln1)
    sess.push_phase("ln2")
    try:
        ring_sh = ctx.provider.field_to_ring(res2.share)
        ln2 = pi_ln(ctx, ring_sh, (d_s, d_m),
                    LnParams(weights["ln2_g"], weights["ln2_b"]) if ctx.role == "B" else None,
                    label="core")
        ln2 = _rescale(ctx, ln2, s)
    finally:
        sess.pop_phase()
    return ln2


BLOCK_STAGES = ("head", "proj", "ln1", "ffn1", "act", "ffn2", "ln2")
