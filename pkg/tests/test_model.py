import math
import os

import numpy as np
import pytest

from privblock import fixedpoint as fp
from privblock.model import (BLOCK_STAGES, BlockConfig, BlockWeights,
                             ShapeError, dump_weights, infer_block,
                             load_weights, oracle_attention, oracle_block,
                             oracle_softmax, toy_block_config)
from privblock.sharing import reconstruct


def test_block_config_invariant():
    with pytest.raises(ShapeError):
        BlockConfig(d_s=8, d_m=16, h=3, d_k=8, d_f=32)


def test_weights_roundtrip(tmp_path):
    bc = toy_block_config()
    w = BlockWeights.random(bc, np.random.default_rng(0))
    path = os.path.join(tmp_path, "w.bin")
    dump_weights(w, path)
    loaded = load_weights(path)
    assert loaded.config == bc
    for name in w.tensors:
        assert np.array_equal(loaded[name], w[name])
    # dump of the load is bit-identical
    path2 = os.path.join(tmp_path, "w2.bin")
    dump_weights(loaded, path2)
    assert open(path, "rb").read() == open(path2, "rb").read()


def test_weights_bad_header(tmp_path):
    bc = toy_block_config()
    w = BlockWeights.random(bc, np.random.default_rng(1))
    path = os.path.join(tmp_path, "w.bin")
    dump_weights(w, path)
    blob = bytearray(open(path, "rb").read())
    blob[13] = 99  # corrupt d_m -> header dimensions become inconsistent
    bad = os.path.join(tmp_path, "bad.bin")
    open(bad, "wb").write(bytes(blob))
    with pytest.raises(ShapeError):
        load_weights(bad)


def test_weights_missing_tensor():
    bc = toy_block_config()
    w = BlockWeights.random(bc, np.random.default_rng(2))
    t = dict(w.tensors)
    t.pop("wo")
    with pytest.raises(ShapeError):
        BlockWeights(bc, t)


def test_oracle_softmax_rows_sum_to_one():
    rng = np.random.default_rng(3)
    y = oracle_softmax(rng.normal(size=(5, 7)))
    assert np.allclose(y.sum(axis=1), 1.0)


def test_oracle_gelu_zero():
    from privblock.approx import gelu_exact
    assert gelu_exact(0.0) == 0.0


def test_oracle_hand_computed_attention():
    """2x2 single-head attention against a by-hand softmax/mix computation."""
    q = np.eye(2)
    k = np.eye(2)
    v = np.array([[1.0, 2.0], [3.0, 4.0]])
    got = oracle_attention(q, k, v)
    w = math.exp(1 / math.sqrt(2)) / (math.exp(1 / math.sqrt(2)) + 1.0)
    want = np.array([
        [w * 1 + (1 - w) * 3, w * 2 + (1 - w) * 4],
        [(1 - w) * 1 + w * 3, (1 - w) * 2 + w * 4],
    ])
    assert np.allclose(got, want, atol=1e-12)


def test_oracle_attention_uniform_scores_row_mean():
    v = np.eye(4)
    got = oracle_attention(np.zeros((4, 3)), np.zeros((4, 3)), v)
    assert np.allclose(got, np.full((4, 4), 0.25))


def _run_block(cfg, pair_runner, x, weights, bc, seed=0, want_reports=False):
    out = pair_runner(cfg,
                      lambda ctx: infer_block(ctx, x, None, bc),
                      lambda ctx: infer_block(ctx, None, weights, bc),
                      seed=seed, want_reports=want_reports)
    if want_reports:
        ra, rb, rep, _ = out
    else:
        (ra, rb), rep = out, None
    y = fp.decode_int(reconstruct(ra.share, rb.share), cfg.fixedpoint,
                      "field", ra.scale).reshape(ra.shape)
    return y, rep


def test_toy_block_matches_oracle(toy_cfg, pair_runner):
    bc = toy_block_config()
    rng = np.random.default_rng(11)
    weights = BlockWeights.random(bc, rng)
    x = rng.normal(0, 1.0, size=(bc.d_s, bc.d_m))
    y, _ = _run_block(toy_cfg, pair_runner, x, weights, bc, seed=7)
    assert np.abs(y - oracle_block(x, weights, bc)).max() <= 2.0 ** -4


def test_toy_block_smoke_from_container(toy_cfg, pair_runner, tmp_path):
    bc = toy_block_config()
    w = BlockWeights.random(bc, np.random.default_rng(5))
    path = os.path.join(tmp_path, "w.bin")
    dump_weights(w, path)
    weights = load_weights(path)
    x = np.random.default_rng(6).normal(0, 1.0, size=(bc.d_s, bc.d_m))
    y, _ = _run_block(toy_cfg, pair_runner, x, weights, bc, seed=8)
    assert np.abs(y - oracle_block(x, weights, bc)).max() <= 2.0 ** -4


def test_zero_gammas_blank_the_input(toy_cfg, pair_runner):
    """With both layernorm gains zeroed the block output is the second bias
    row regardless of the input."""
    bc = toy_block_config()
    rng = np.random.default_rng(12)
    weights = BlockWeights.random(bc, rng)
    weights.tensors["ln1_g"] = np.zeros(bc.d_m)
    weights.tensors["ln2_g"] = np.zeros(bc.d_m)
    x = rng.normal(0, 1.0, size=(bc.d_s, bc.d_m))
    y, _ = _run_block(toy_cfg, pair_runner, x, weights, bc, seed=9)
    assert np.abs(y - weights["ln2_b"][None, :]).max() <= 2.0 ** -4


def test_block_cost_is_sum_of_stages(toy_cfg, pair_runner):
    bc = toy_block_config()
    rng = np.random.default_rng(13)
    weights = BlockWeights.random(bc, rng)
    x = rng.normal(0, 1.0, size=(bc.d_s, bc.d_m))
    _, rep = _run_block(toy_cfg, pair_runner, x, weights, bc, seed=10,
                        want_reports=True)
    stage_total = sum(rep.bytes_for(stage) for stage in BLOCK_STAGES)
    setup = rep.bytes_for("handshake") + rep.bytes_for("keyexchange")
    assert rep.total_bytes == stage_total + setup


def test_block_determinism(toy_cfg, pair_runner):
    bc = toy_block_config()
    rng = np.random.default_rng(14)
    weights = BlockWeights.random(bc, rng)
    x = rng.normal(0, 1.0, size=(bc.d_s, bc.d_m))

    def run():
        y, rep = _run_block(toy_cfg, pair_runner, x, weights, bc, seed=21,
                            want_reports=True)
        return y.tobytes(), rep.to_dict()

    assert run() == run()
