"""Oblivious token pruning.

Tokens are scored from the attention probabilities, compared against a
threshold held by one party, bound to an encrypted 0/1 key, compacted to
the front with a fixed bubble pass schedule of oblivious compare-swaps,
and stripped down to the revealed survivor count.  A second, higher
threshold marks surviving tokens for reduced-degree non-linearities; that
mask is revealed by design.  The only values ever opened are the survivor
count, the reduction mask, and uniformly masked Beaver openings.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ring import FixedPointParams, vencode
from .linear import SharedMatrix
from .sharing import (APair, BPair, ProtocolContext, apair, add_local, b2a,
                      cmp_shared, msb_shared, mul_shared, open_bits,
                      open_shared, scale_local, trunc_shared)


@dataclass
class BoundTokens:
    """Token records carrying an oblivious sort key next to the payload.

    ``key`` has shape (..., n); ``payload`` has shape (..., n, d); an
    optional ``score`` column rides along so reduction decisions can be
    made after compaction.  Leading axes are independent batch lanes that
    share the same (n, pass-count) schedule.
    """

    key: APair
    payload: APair
    score: APair | None = None

    @property
    def n(self) -> int:
        return self.key[0].value.shape[-1]


@dataclass
class PruneReport:
    """Public per-layer accounting of one prune step."""

    layer: int
    n_in: int
    n_out: int
    swaps: int
    bytes: int
    reduced_count: int

    def to_dict(self) -> dict:
        return {
            "layer": self.layer,
            "n_in": self.n_in,
            "n_out": self.n_out,
            "swaps": self.swaps,
            "bytes": self.bytes,
            "reduced_count": self.reduced_count,
        }


@np.errstate(over="ignore")
def importance_scores(heads: list[SharedMatrix], ctx: ProtocolContext) -> APair:
    """Mean attention each token receives: S[i] = sum_h sum_j A_h[j,i] / (H*n).

    Column sums of the attention probability matrices; no communication.
    """
    if not heads:
        raise ValueError("need at least one attention head")
    p = ctx.params
    n = heads[0].shape[-1]
    m = np.uint64(p.mask)
    acc0 = np.zeros(heads[0].s0.shape[:-2] + (n,), np.uint64)
    acc1 = np.zeros_like(acc0)
    for h in heads:
        acc0 = (acc0 + h.s0.sum(axis=-2, dtype=np.uint64)) & m
        acc1 = (acc1 + h.s1.sum(axis=-2, dtype=np.uint64)) & m
    scaled = scale_local(apair(acc0, acc1), vencode(1.0 / (len(heads) * n), p), p)
    return trunc_shared(scaled, p.f, p)


@np.errstate(over="ignore")
def prune_mask(scores: APair, threshold, holder: int, ctx: ProtocolContext,
               width: int | None = None) -> BPair:
    """Keep-bit per token: [score > theta], theta private to ``holder``."""
    if width is None:
        width = min(ctx.params.ell, ctx.params.f + 4)
    return cmp_shared(scores, threshold, holder, ctx, width=width)


@np.errstate(over="ignore")
def bind_and_count(payload: SharedMatrix, scores: APair, mask: BPair,
                   ctx: ProtocolContext) -> tuple[BoundTokens, int]:
    """Attach key = bit * 2^f to each token and reveal the survivor count."""
    p = ctx.params
    b = b2a(mask, ctx)
    key = scale_local(b, np.uint64(p.scale), p)
    m = np.uint64(p.mask)
    total = apair(b[0].value.sum(axis=-1, dtype=np.uint64) & m,
                  b[1].value.sum(axis=-1, dtype=np.uint64) & m)
    n_prime = int(open_shared(total, ctx, "count"))
    return BoundTokens(key=key, payload=payload.pair(), score=scores), n_prime


@np.errstate(over="ignore")
def oblivious_compact(bound: BoundTokens, passes: int,
                      ctx: ProtocolContext) -> int:
    """Bubble surviving tokens to the front with a fixed gate schedule.

    Runs ``passes`` bubble passes; pass k walks i = 0 .. n-k-2 and swaps
    records i, i+1 whenever record i's key bit (bit f) is 0, i.e. the
    left record was pruned.  Each pass carries one pruned record to the
    settled tail, so ``passes`` must be at least the number of pruned
    tokens; kept records keep their relative order.  The schedule, and
    hence the executed swap count sum_k (n-k-1), depends only on public
    values.  Returns the number of compare-exchange gates executed.
    """
    p = ctx.params
    n = bound.n
    one = np.uint64(1)
    m = np.uint64(p.mask)
    swaps = 0
    for k in range(passes):
        for i in range(n - k - 1):
            ki = apair(bound.key[0].value[..., i].copy(),
                       bound.key[1].value[..., i].copy())
            keep = b2a(msb_shared(ki, p.f, ctx), ctx)
            # swap where the keep bit is 0
            swap_bit = apair((one - keep[0].value) & m,
                             (np.uint64(0) - keep[1].value) & m)
            _swap_pair(bound, i, i + 1, swap_bit, ctx)
            swaps += 1
    return swaps


def truncate_and_strip(bound: BoundTokens, n_prime: int) -> SharedMatrix:
    """Drop the key column and everything past the survivor count."""
    if not (0 <= n_prime <= bound.n):
        raise ValueError(f"survivor count {n_prime} out of range")
    return SharedMatrix(bound.payload[0].value[..., :n_prime, :].copy(),
                        bound.payload[1].value[..., :n_prime, :].copy())


def strip_scores(bound: BoundTokens, n_prime: int) -> APair:
    if bound.score is None:
        raise ValueError("tokens were bound without scores")
    return apair(bound.score[0].value[..., :n_prime].copy(),
                 bound.score[1].value[..., :n_prime].copy())


@np.errstate(over="ignore")
def reduction_mask(scores: APair, threshold, holder: int,
                   ctx: ProtocolContext) -> np.ndarray:
    """Public bool mask of tokens that keep full-degree non-linearities.

    True where score > beta; the mask is revealed by design, that reveal
    is part of the protocol's declared leakage.
    """
    bits = cmp_shared(scores, threshold, holder, ctx,
                      width=min(ctx.params.ell, ctx.params.f + 4))
    return open_bits(bits, ctx, "reduction_mask").astype(bool)


def bitonic_gate_count(n: int) -> int:
    """Compare-exchange gates of a full bitonic sorting network on n = 2^k."""
    k = n.bit_length() - 1
    if 1 << k != n:
        raise ValueError("bitonic network size must be a power of two")
    return (n // 2) * (k * (k + 1) // 2)


@np.errstate(over="ignore")
def bitonic_compact(bound: BoundTokens, ctx: ProtocolContext) -> int:
    """Descending bitonic sort on the key: the no-early-exit baseline.

    Runs the full data-independent network regardless of how few tokens
    were pruned.  Returns the gate count.
    """
    p = ctx.params
    n = bound.n
    if 1 << (n.bit_length() - 1) != n:
        raise ValueError("bitonic network size must be a power of two")
    m = np.uint64(p.mask)
    gates = 0
    span = 2
    while span <= n:
        step = span // 2
        while step >= 1:
            for i in range(n):
                j = i ^ step
                if j <= i:
                    continue
                descending = (i & span) == 0
                lo, hi = (i, j) if descending else (j, i)
                # swap when key[lo] < key[hi]
                d = apair((bound.key[0].value[..., lo] - bound.key[0].value[..., hi]) & m,
                          (bound.key[1].value[..., lo] - bound.key[1].value[..., hi]) & m)
                b = msb_shared(d, p.f + 1, ctx)
                ba = b2a(b, ctx)
                _swap_pair(bound, lo, hi, ba, ctx)
                gates += 1
            step //= 2
        span *= 2
    return gates


@np.errstate(over="ignore")
def _swap_pair(bound: BoundTokens, i: int, j: int, ba: APair,
               ctx: ProtocolContext) -> None:
    """Obliviously swap records i and j where the arithmetic bit is 1.

    All fields are packed into one flat Beaver multiplication.
    """
    p = ctx.params
    m = np.uint64(p.mask)
    fields = [bound.key]
    if bound.score is not None:
        fields.append(bound.score)
    d0 = np.concatenate(
        [((f[0].value[..., i] - f[0].value[..., j]) & m)[..., None] for f in fields]
        + [(bound.payload[0].value[..., i, :] - bound.payload[0].value[..., j, :]) & m],
        axis=-1)
    d1 = np.concatenate(
        [((f[1].value[..., i] - f[1].value[..., j]) & m)[..., None] for f in fields]
        + [(bound.payload[1].value[..., i, :] - bound.payload[1].value[..., j, :]) & m],
        axis=-1)
    bb = apair(np.broadcast_to(ba[0].value[..., None], d0.shape).copy(),
               np.broadcast_to(ba[1].value[..., None], d1.shape).copy())
    t = mul_shared(bb, apair(d0, d1), ctx)
    off = 0
    for f in fields:
        for side in (0, 1):
            tv = t[side].value[..., off]
            f[side].value[..., i] = (f[side].value[..., i] - tv) & m
            f[side].value[..., j] = (f[side].value[..., j] + tv) & m
        off += 1
    for side in (0, 1):
        tv = t[side].value[..., off:]
        pv = bound.payload[side].value
        pv[..., i, :] = (pv[..., i, :] - tv) & m
        pv[..., j, :] = (pv[..., j, :] + tv) & m
