import numpy as np
import pytest

from mpcprune import plainfx as fx
from mpcprune import reference as ref
from mpcprune.channel import Channel, CostLedger, Transcript
from mpcprune.dealer import DealerTape
from mpcprune.linear import reconstruct_matrix, share_matrix
from mpcprune.nonlinear import (approx_exp, gelu_shared, layernorm_shared,
                                reciprocal_shared, rsqrt_shared,
                                softmax_shared)
from mpcprune.ring import FixedPointParams, vdecode, vencode
from mpcprune.sharing import ProtocolContext, reconstruct, share

P = FixedPointParams()
RNG = np.random.default_rng(11)


def make_ctx(seed=0):
    return ProtocolContext(P, DealerTape(seed, P), Channel(CostLedger()), Transcript())


def dec(pair):
    return vdecode(reconstruct(pair, P), P)


# ---------------------------------------------------------------------------
# float reference oracles

def test_reference_exp_accuracy():
    # the iterated-squaring form (1 + x/64)^64 has a mean grid error of
    # ~2^-9.7 on [-13, 0]; assert the measured bound
    xs = np.linspace(-13, 0, 1024)
    err = np.abs(ref.approx_exp(xs, 6, -13.0) - np.exp(xs))
    assert err.mean() <= 2.0 ** -9.5
    assert err.max() <= 2.0 ** -7


def test_reference_exp_clips():
    assert ref.approx_exp(np.array([-20.0]), 6, -13.0)[0] == 0.0


def test_reference_gelu_continuity():
    # the published coefficients leave a small jump at each breakpoint
    # (largest ~0.033 at -5); branches still meet within that gap
    for brk in (-5.0, -1.97, 3.0):
        lo = ref.gelu_high(np.array([brk - 1e-9]))[0]
        hi = ref.gelu_high(np.array([brk + 1e-9]))[0]
        assert abs(lo - hi) < 0.05


def test_reference_gelu_tracks_exact():
    xs = np.linspace(-6, 6, 500)
    assert np.abs(ref.gelu_high(xs) - ref.gelu_exact(xs)).max() < 0.05


# ---------------------------------------------------------------------------
# shared protocols vs the float oracles

def test_shared_exp_matches_oracle():
    ctx = make_ctx()
    xs = np.linspace(-20, 0, 800)
    out = approx_exp(share(vencode(xs, P), RNG, P), 6, -13.0, ctx)
    assert np.abs(dec(out) - ref.approx_exp(xs, 6, -13.0)).max() <= 2.0 ** -9


def test_shared_exp_low_degree():
    ctx = make_ctx()
    xs = np.linspace(-8, 0, 300)
    out = approx_exp(share(vencode(xs, P), RNG, P), 3, -13.0, ctx)
    assert np.abs(dec(out) - ref.approx_exp(xs, 3, -13.0)).max() <= 2.0 ** -9


def test_reciprocal_relative_error():
    ctx = make_ctx()
    s = np.linspace(1.0, 128.0, 700)
    out = reciprocal_shared(share(vencode(s, P), RNG, P), 128.0, ctx)
    assert np.abs(dec(out) * s - 1.0).max() <= 2.0 ** -10


def test_rsqrt_relative_error():
    ctx = make_ctx()
    v = np.geomspace(64.0 / 4096, 64.0, 700)
    out = rsqrt_shared(share(vencode(v, P), RNG, P), 64.0, ctx)
    assert np.abs(dec(out) * np.sqrt(v) - 1.0).max() <= 2.0 ** -8


def test_rsqrt_tiny_variance_stays_bounded():
    ctx = make_ctx()
    v = np.full(8, 16.0 / P.scale)
    out = dec(rsqrt_shared(share(vencode(v, P), RNG, P), 64.0, ctx))
    assert np.all(out >= 0) and np.all(out <= 1.0 / np.sqrt(v[0]))


@pytest.mark.parametrize("high", [True, False])
def test_gelu_matches_oracle(high):
    ctx = make_ctx()
    xs = np.linspace(-6, 6, 900)
    out = gelu_shared(share(vencode(xs, P), RNG, P), high, ctx)
    want = ref.gelu_high(xs) if high else ref.gelu_low(xs)
    assert np.abs(dec(out) - want).max() <= 2.0 ** -8


def test_gelu_branch_bits_one_hot():
    ctx = make_ctx()
    xs = np.linspace(-8, 8, 600)
    _, bits = gelu_shared(share(vencode(xs, P), RNG, P), True, ctx,
                          return_branch_bits=True)
    vals = [reconstruct(b, P).astype(np.int64) for b in bits]
    # monotone selector chain: b1 >= b2 >= b3, each in {0, 1}
    for v in vals:
        assert set(np.unique(v)) <= {0, 1}
    assert np.all(vals[0] >= vals[1]) and np.all(vals[1] >= vals[2])
    # branch indicators derived from the chain are one-hot
    onehot = np.stack([1 - vals[0], vals[0] - vals[1],
                       vals[1] - vals[2], vals[2]])
    assert np.array_equal(onehot.sum(0), np.ones(xs.size, np.int64))


def test_softmax_rows_sum_to_one():
    ctx = make_ctx()
    sc = RNG.normal(0, 2, (10, 13))
    high = RNG.integers(0, 2, 10).astype(bool)
    out = softmax_shared(share_matrix(vencode(sc, P), RNG, P), high,
                         ref.PolyConfig(), ctx)
    got = vdecode(reconstruct_matrix(out, P), P)
    assert np.abs(got.sum(1) - 1.0).max() < 1e-3
    want = np.stack([ref.approx_softmax(sc[i], 6 if high[i] else 3, -13.0)
                     for i in range(10)])
    assert np.abs(got - want).max() < 1e-3


def test_softmax_single_column():
    ctx = make_ctx()
    out = softmax_shared(share_matrix(vencode(np.array([[0.7]]), P), RNG, P),
                         True, ref.PolyConfig(), ctx)
    assert abs(vdecode(reconstruct_matrix(out, P), P)[0, 0] - 1.0) < 1e-3


def test_layernorm_matches_float():
    ctx = make_ctx()
    x = RNG.normal(0, 1.5, (12, 16))
    g = RNG.normal(1, 0.1, 16)
    b = RNG.normal(0, 0.1, 16)
    out = layernorm_shared(share_matrix(vencode(x, P), RNG, P),
                           share_matrix(vencode(g.reshape(1, -1), P), RNG, P),
                           share_matrix(vencode(b.reshape(1, -1), P), RNG, P), ctx)
    want = ref.layernorm(x, g, b, 16.0 / P.scale)
    assert np.abs(vdecode(reconstruct_matrix(out, P), P) - want).max() < 1e-3


def test_layernorm_constant_row_returns_shift():
    ctx = make_ctx()
    x = np.full((1, 8), 0.37)
    g = RNG.normal(1, 0.1, 8)
    b = RNG.normal(0, 0.1, 8)
    out = layernorm_shared(share_matrix(vencode(x, P), RNG, P),
                           share_matrix(vencode(g.reshape(1, -1), P), RNG, P),
                           share_matrix(vencode(b.reshape(1, -1), P), RNG, P), ctx)
    assert np.abs(vdecode(reconstruct_matrix(out, P), P) - b).max() < 1e-3


# ---------------------------------------------------------------------------
# fixed-point plaintext mirrors track the shared protocols

def test_fx_mirrors_shared_softmax():
    ctx = make_ctx()
    sc = RNG.normal(0, 2, (6, 9))
    high = np.array([1, 0, 1, 1, 0, 0], bool)
    a = fx.fx_softmax(vencode(sc, P), high, ref.PolyConfig(), P)
    b = reconstruct_matrix(softmax_shared(share_matrix(vencode(sc, P), RNG, P),
                                          high, ref.PolyConfig(), ctx), P)
    assert np.abs(vdecode(a, P) - vdecode(b, P)).max() < 1e-4


def test_fx_mirrors_shared_gelu_and_layernorm():
    ctx = make_ctx()
    xs = np.linspace(-6, 6, 400)
    a = fx.fx_gelu(vencode(xs, P), True, P)
    b = reconstruct(gelu_shared(share(vencode(xs, P), RNG, P), True, ctx), P)
    assert np.abs(vdecode(a, P) - vdecode(b, P)).max() < 1e-4
    x = RNG.normal(0, 1, (5, 8))
    g, bt = RNG.normal(1, 0.1, 8), RNG.normal(0, 0.1, 8)
    fa = fx.fx_layernorm(vencode(x, P), vencode(g, P), vencode(bt, P), P)
    sb = layernorm_shared(share_matrix(vencode(x, P), RNG, P),
                          share_matrix(vencode(g.reshape(1, -1), P), RNG, P),
                          share_matrix(vencode(bt.reshape(1, -1), P), RNG, P), ctx)
    assert np.abs(vdecode(fa, P) - vdecode(reconstruct_matrix(sb, P), P)).max() < 1e-4
