import itertools

import numpy as np
import pytest

from mpcprune.channel import Channel, CostLedger, Transcript, audit_transcript
from mpcprune.dealer import DealerTape
from mpcprune.linear import SharedMatrix, reconstruct_matrix, share_matrix
from mpcprune.pruning import (BoundTokens, bind_and_count, bitonic_compact,
                              bitonic_gate_count, importance_scores,
                              oblivious_compact, prune_mask, reduction_mask,
                              strip_scores, truncate_and_strip)
from mpcprune.ring import FixedPointParams, vdecode, vencode, vsigned
from mpcprune.sharing import (ProtocolContext, apair, reconstruct, share)

P = FixedPointParams()
RNG = np.random.default_rng(17)


def make_ctx(seed=0):
    return ProtocolContext(P, DealerTape(seed, P), Channel(CostLedger()), Transcript())


def bound_from_mask(mask, payload, rng, scores=None):
    """Build BoundTokens with key = mask * 2^f directly (skip the compare)."""
    key = (np.asarray(mask, np.uint64) * np.uint64(P.scale))
    kb = share(key, rng, P)
    pb = share_matrix(np.asarray(payload, np.uint64), rng, P).pair()
    sc = share(np.asarray(scores, np.uint64), rng, P) if scores is not None else None
    return BoundTokens(key=kb, payload=pb, score=sc)


def test_importance_scores_column_mean():
    ctx = make_ctx()
    h, n = 3, 6
    heads_f = [RNG.uniform(0, 1, (n, n)) for _ in range(h)]
    heads = [share_matrix(vencode(a, P), RNG, P) for a in heads_f]
    got = vdecode(reconstruct(importance_scores(heads, ctx), P), P)
    want = sum(a.sum(axis=0) for a in heads_f) / (h * n)
    assert np.abs(got - want).max() < 1e-4
    assert ctx.channel.ledger.total_rounds() == 0


def test_importance_scores_requires_heads():
    with pytest.raises(ValueError):
        importance_scores([], make_ctx())


@pytest.mark.parametrize("holder", [0, 1])
def test_prune_mask_strict_greater(holder):
    ctx = make_ctx()
    s = np.array([0.1, 0.25, 0.25001, 0.5, 0.0, 0.3])
    bits = prune_mask(share(vencode(s, P), RNG, P), vencode(0.25, P), holder, ctx)
    got = (bits[0].bit ^ bits[1].bit).astype(bool)
    assert np.array_equal(got, vdecode(vencode(s, P), P) > 0.25)


def test_bind_and_count_opens_survivor_count():
    ctx = make_ctx()
    s = np.array([0.4, 0.1, 0.3, 0.05])
    payload = share_matrix(vencode(RNG.normal(0, 1, (4, 3)), P), RNG, P)
    sc = share(vencode(s, P), RNG, P)
    mask = prune_mask(sc, vencode(0.2, P), 0, ctx)
    bound, n_prime = bind_and_count(payload, sc, mask, ctx)
    assert n_prime == 2
    key = vsigned(reconstruct(bound.key, P), P)
    assert key.tolist() == [P.scale, 0, P.scale, 0]
    kinds = [r.kind for r in ctx.transcript.declared()]
    assert "count" in kinds


def stable_filter(mask, payload):
    return payload[np.asarray(mask, bool)]


@pytest.mark.parametrize("n", [2, 4, 6])
def test_compact_exhaustive_small(n):
    payload = (np.arange(n, dtype=np.uint64)[:, None] * np.uint64(7)
               + np.arange(3, dtype=np.uint64) + np.uint64(1))
    for bits in itertools.product((0, 1), repeat=n):
        mask = np.array(bits, np.uint64)
        ctx = make_ctx(int(sum(bits)))
        bound = bound_from_mask(mask, payload, RNG)
        m = n - int(mask.sum())
        swaps = oblivious_compact(bound, m, ctx)
        assert swaps == sum(n - k - 1 for k in range(m))
        kept = truncate_and_strip(bound, n - m)
        got = reconstruct_matrix(SharedMatrix(kept.s0, kept.s1), P)
        assert np.array_equal(got, stable_filter(mask, payload))


def test_compact_random_batch_lanes():
    n, d, lanes = 16, 5, 8
    payload = RNG.integers(0, 1 << 60, (lanes, n, d), dtype=np.uint64)
    mask = RNG.integers(0, 2, (lanes, n), dtype=np.uint64)
    # same survivor count per lane so the public schedule is shared
    for lane in range(lanes):
        idx = RNG.permutation(n)[:6]
        mask[lane] = 0
        mask[lane, idx] = 1
    ctx = make_ctx(3)
    bound = bound_from_mask(mask, payload, RNG)
    oblivious_compact(bound, n - 6, ctx)
    kept = truncate_and_strip(bound, 6)
    got = reconstruct_matrix(kept, P)
    for lane in range(lanes):
        assert np.array_equal(got[lane], stable_filter(mask[lane], payload[lane]))


def test_compact_scores_travel_with_tokens():
    ctx = make_ctx()
    n = 8
    payload = RNG.integers(0, 1 << 40, (n, 2), dtype=np.uint64)
    scores = np.arange(100, 100 + n, dtype=np.uint64)
    mask = np.array([0, 1, 0, 1, 1, 0, 0, 1], np.uint64)
    bound = bound_from_mask(mask, payload, RNG, scores=scores)
    oblivious_compact(bound, int(n - mask.sum()), ctx)
    got = reconstruct(strip_scores(bound, int(mask.sum())), P)
    assert np.array_equal(got, scores[mask.astype(bool)])


def test_truncate_and_strip_validates():
    bound = bound_from_mask(np.ones(4, np.uint64),
                            np.zeros((4, 2), np.uint64), RNG)
    with pytest.raises(ValueError):
        truncate_and_strip(bound, 5)
    with pytest.raises(ValueError):
        strip_scores(bound, 2)


@pytest.mark.parametrize("holder", [0, 1])
def test_reduction_mask_revealed(holder):
    ctx = make_ctx()
    s = np.array([0.5, 0.1, 0.35, 0.2])
    got = reduction_mask(share(vencode(s, P), RNG, P), vencode(0.3, P),
                         holder, ctx)
    assert got.tolist() == [True, False, True, False]
    assert [r.kind for r in ctx.transcript.declared()] == ["reduction_mask"]


def test_bitonic_gate_count_closed_form():
    assert bitonic_gate_count(2) == 1
    assert bitonic_gate_count(8) == 4 * 6
    assert bitonic_gate_count(128) == 1792
    with pytest.raises(ValueError):
        bitonic_gate_count(12)


def test_bitonic_compact_sorts_kept_first():
    n = 16
    payload = RNG.integers(0, 1 << 40, (n, 3), dtype=np.uint64)
    mask = RNG.integers(0, 2, n, dtype=np.uint64)
    ctx = make_ctx(9)
    bound = bound_from_mask(mask, payload, RNG)
    gates = bitonic_compact(bound, ctx)
    assert gates == bitonic_gate_count(n)
    kept = truncate_and_strip(bound, int(mask.sum()))
    got = reconstruct_matrix(kept, P)
    want = payload[mask.astype(bool)]
    # sorting is not stable: compare as multisets of rows
    assert sorted(map(tuple, got.tolist())) == sorted(map(tuple, want.tolist()))


def test_bitonic_rejects_non_power_of_two():
    bound = bound_from_mask(np.ones(6, np.uint64),
                            np.zeros((6, 1), np.uint64), RNG)
    with pytest.raises(ValueError):
        bitonic_compact(bound, make_ctx())


def test_full_prune_flow_leaks_only_declared_values():
    ctx = make_ctx(21)
    n = 10
    s = RNG.uniform(0, 1, n)
    payload = share_matrix(vencode(RNG.normal(0, 1, (n, 4)), P), RNG, P)
    sc = share(vencode(s, P), RNG, P)
    mask = prune_mask(sc, vencode(0.5, P), 0, ctx)
    bound, n_prime = bind_and_count(payload, sc, mask, ctx)
    oblivious_compact(bound, n - n_prime, ctx)
    reduction_mask(strip_scores(bound, n_prime), vencode(0.8, P), 0, ctx)
    rep = audit_transcript(ctx.transcript)
    assert rep["unclassified"] == []
    nonzero = {k for k, v in rep["counts"].items() if v}
    assert nonzero <= {"masked", "count", "reduction_mask"}
