import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from privblock.channel import PROFILES, run_pair  # noqa: E402
from privblock.params import Config, toy_he_params  # noqa: E402
from privblock.protocols import make_party  # noqa: E402


@pytest.fixture(scope="session")
def toy_cfg():
    """Clear backend over small-degree lattice params; default field/ring."""
    return Config(he=toy_he_params(n=256, p=137438822401, limbs=6),
                  he_backend="clear")


@pytest.fixture(scope="session")
def rlwe_toy_cfg():
    return Config(he=toy_he_params(n=256, p=137438822401, limbs=6),
                  he_backend="rlwe")


def run_protocol_pair(cfg, fn_a, fn_b, seed=0, profile=None, want_reports=False,
                      want_transcript=False):
    """Drive two party functions behind fresh contexts; returns outputs."""
    def wrap(role, fn):
        def run(sess):
            ctx = make_party(role, sess, cfg, seed)
            out = fn(ctx)
            return out, sess.report(), sess.transcript_labels()
        return run

    (ra, rep_a, tr_a), (rb, rep_b, _) = run_pair(wrap("A", fn_a), wrap("B", fn_b),
                                                 profile or PROFILES["lan"])
    if want_transcript:
        return ra, rb, rep_a, tr_a
    if want_reports:
        return ra, rb, rep_a, rep_b
    return ra, rb


@pytest.fixture
def pair_runner():
    return run_protocol_pair


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
