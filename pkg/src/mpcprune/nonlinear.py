"""Secret-shared SoftMax, GELU and LayerNorm.

Non-linearities are evaluated on shares via the comparison / selection
primitives plus Beaver multiplications; every branch of a piecewise
function is evaluated and combined obliviously so the taken branch never
leaks.  Per-token degree dispatch (high vs low polynomial) is driven by a
public bit vector - the revealed reduction mask - so rows of different
degree are simply processed in separate batches.
"""

from __future__ import annotations

import math

import numpy as np

from .reference import (GELU_LOW_BREAK, GELU_LOW_COEFFS, P3_COEFFS, P6_COEFFS,
                        PolyConfig)
from .ring import FixedPointParams, vencode
from .linear import SharedMatrix
from .sharing import (APair, ProtocolContext, add_local, add_public, apair,
                      b2a, cmp_shared, mul_shared, scale_local, select_shared,
                      sub_local, trunc_shared)

# comparison width used inside the non-linear blocks: activations are
# bounded well below 2^(CMP_INT_BITS-1) in magnitude
CMP_INT_BITS = 12


def _cmp_width(p: FixedPointParams) -> int:
    return min(p.ell, p.f + CMP_INT_BITS)


def _const(value: float, shape, p: FixedPointParams) -> APair:
    """A public fixed-point constant as a trivial share pair (P0 holds it)."""
    enc = np.broadcast_to(vencode(value, p), shape).copy()
    return apair(enc, np.zeros(shape, np.uint64))


def _broadcast(pair: APair, shape) -> APair:
    return apair(np.broadcast_to(pair[0].value, shape).copy(),
                 np.broadcast_to(pair[1].value, shape).copy())


def approx_exp(x: APair, n: int, t_clip: float, ctx: ProtocolContext) -> APair:
    """Clipped iterated-squaring exponential on shares.

    Computes (1 + x/2^n)^(2^n) by n squarings, then zeroes the result
    where x <= t_clip.  Inputs are max-normalised, hence non-positive.
    """
    p = ctx.params
    shape = x[0].value.shape
    t_enc = vencode(t_clip, p)
    clip = b2a(cmp_shared(x, t_enc, 0, ctx, width=_cmp_width(p)), ctx)
    # clamp to the clip boundary so the squaring chain stays in [-1, 1]
    xc = select_shared(clip, x, _const(t_clip, shape, p), ctx)
    t = add_public(trunc_shared(xc, n, p), vencode(1.0, p), p)
    for _ in range(n):
        t = trunc_shared(mul_shared(t, t, ctx), p.f, p)
    return mul_shared(clip, t, ctx)


def reciprocal_shared(s: APair, k: float, ctx: ProtocolContext,
                      iters: int = 4) -> APair:
    """1/s at scale f for s in [1, k], via a 4-segment seed table picked by
    oblivious comparisons and Newton iterations y <- y(2 - s*y).

    Seeds are the harmonic means of the segment endpoints, which keeps the
    initial relative error below 0.55 for any segment ratio up to ~3.5.
    Out-of-range inputs are unchecked and produce garbage.
    """
    p = ctx.params
    shape = s[0].value.shape
    segs = 4
    bounds = [k ** (i / segs) for i in range(segs + 1)]
    seeds = [2.0 / (bounds[i] + bounds[i + 1]) for i in range(segs)]
    y = _const(seeds[0], shape, p)
    for i in range(1, segs):
        b = b2a(cmp_shared(s, vencode(bounds[i], p), 0, ctx, width=_cmp_width(p)), ctx)
        step = vencode(seeds[i] - seeds[i - 1], p)
        bump = scale_local(b, step, p)
        y = add_local(y, bump, p)
    two = vencode(2.0, p)
    for _ in range(iters):
        sy = trunc_shared(mul_shared(s, y, ctx), p.f, p)
        corr = sub_local(_const(2.0, shape, p), sy, p)
        y = trunc_shared(mul_shared(y, corr, ctx), p.f, p)
    return y


def rsqrt_shared(v: APair, vmax: float, ctx: ProtocolContext,
                 iters: int = 4, segs: int = 8) -> APair:
    """1/sqrt(v) for v in (0, vmax] via a geometric seed table over
    [vmax/2^12, vmax] and Newton y <- y(3 - v*y^2)/2.

    Inputs far below the table floor converge from below (the seed
    overshoots low) and come out small-but-positive, which is exactly what
    the eps-guarded LayerNorm needs; inputs above vmax are unchecked.
    """
    p = ctx.params
    shape = v[0].value.shape
    vmin = vmax / 4096.0
    ratio = (vmax / vmin) ** (1.0 / segs)
    bounds = [vmin * ratio ** i for i in range(segs + 1)]
    seeds = [(bounds[i] * bounds[i + 1]) ** -0.25 for i in range(segs)]
    y = _const(seeds[0], shape, p)
    for i in range(1, segs):
        b = b2a(cmp_shared(v, vencode(bounds[i], p), 0, ctx, width=_cmp_width(p)), ctx)
        bump = scale_local(b, vencode(seeds[i] - seeds[i - 1], p), p)
        y = add_local(y, bump, p)
    for _ in range(iters):
        y2 = trunc_shared(mul_shared(y, y, ctx), p.f, p)
        vy2 = trunc_shared(mul_shared(v, y2, ctx), p.f, p)
        corr = sub_local(_const(3.0, shape, p), vy2, p)
        y = trunc_shared(mul_shared(y, corr, ctx), p.f + 1, p)
    return y


def _max_traverse(mat: SharedMatrix, ctx: ProtocolContext) -> APair:
    """Sequential traversal max over each row: k-1 compare/select steps.

    Ties keep the earlier element (strict greater-than), deterministically.
    """
    p = ctx.params
    cur = mat.pair()
    cur = apair(cur[0].value[:, 0].copy(), cur[1].value[:, 0].copy())
    for j in range(1, mat.cols):
        xj = apair(mat.s0[:, j], mat.s1[:, j])
        d = sub_local(xj, cur, p)
        b = b2a(cmp_shared(d, np.uint64(0), 0, ctx, width=_cmp_width(p)), ctx)
        cur = select_shared(b, xj, cur, ctx)
    return cur


def softmax_shared(mat: SharedMatrix, high_degree, cfg: PolyConfig,
                   ctx: ProtocolContext) -> SharedMatrix:
    """Approximate softmax over each row of a shared R x k matrix.

    ``high_degree`` is a public per-row bool vector (or scalar) choosing
    the Taylor exponent: exp_high_n where True, exp_low_n where False.
    """
    p = ctx.params
    rows, k = mat.shape
    if k == 0:
        raise ValueError("softmax over empty rows")
    if rows == 0:
        return mat
    high = np.broadcast_to(np.asarray(high_degree, dtype=bool), (rows,))
    mx = _max_traverse(mat, ctx)
    norm = sub_local(mat.pair(), apair(mx[0].value[:, None], mx[1].value[:, None]), p)
    e0 = np.empty((rows, k), np.uint64)
    e1 = np.empty((rows, k), np.uint64)
    for flag, n_taylor in ((True, cfg.exp_high_n), (False, cfg.exp_low_n)):
        idx = np.nonzero(high == flag)[0]
        if idx.size == 0:
            continue
        sub = apair(norm[0].value[idx], norm[1].value[idx])
        ex = approx_exp(sub, n_taylor, cfg.exp_clip_t, ctx)
        e0[idx] = ex[0].value
        e1[idx] = ex[1].value
    m = np.uint64(p.mask)
    denom = apair(e0.sum(axis=1, dtype=np.uint64) & m, e1.sum(axis=1, dtype=np.uint64) & m)
    inv = reciprocal_shared(denom, float(k), ctx)
    invb = apair(np.broadcast_to(inv[0].value[:, None], (rows, k)).copy(),
                 np.broadcast_to(inv[1].value[:, None], (rows, k)).copy())
    out = trunc_shared(mul_shared(apair(e0, e1), invb, ctx), p.f, p)
    return SharedMatrix.from_pair(out)


def _powers(x: APair, ctx: ProtocolContext) -> dict[int, APair]:
    """x^2, x^3, x^4, x^6 at scale f."""
    p = ctx.params
    x2 = trunc_shared(mul_shared(x, x, ctx), p.f, p)
    x3 = trunc_shared(mul_shared(x2, x, ctx), p.f, p)
    x4 = trunc_shared(mul_shared(x2, x2, ctx), p.f, p)
    x6 = trunc_shared(mul_shared(x2, x4, ctx), p.f, p)
    return {2: x2, 3: x3, 4: x4, 6: x6}


def _poly_combine(terms, p: FixedPointParams) -> APair:
    """Sum of coeff * power pairs, each product truncated once."""
    acc = None
    for coeff, pair in terms:
        scaled = trunc_shared(scale_local(pair, vencode(coeff, p), p), p.f, p)
        acc = scaled if acc is None else add_local(acc, scaled, p)
    return acc


def gelu_shared(x: APair, high_degree: bool, ctx: ProtocolContext,
                return_branch_bits: bool = False):
    """Piecewise polynomial GELU on shares.

    High degree: 0 / P3 / P6 / identity on (-inf,-5], (-5,-1.97],
    (-1.97,3], (3,inf).  Low degree: 0 / 0.5x+0.28367x^2 / identity with
    breakpoints at +-1.7626.  All branches are evaluated and combined with
    monotone selector bits so exactly one branch contributes.
    """
    p = ctx.params
    w = _cmp_width(p)
    if high_degree:
        lo, mid, hi = (-5.0, -1.97, 3.0)
        b1 = b2a(cmp_shared(x, vencode(lo, p), 0, ctx, width=w), ctx)
        b2 = b2a(cmp_shared(x, vencode(mid, p), 0, ctx, width=w), ctx)
        b3 = b2a(cmp_shared(x, vencode(hi, p), 0, ctx, width=w), ctx)
        pw = _powers(x, ctx)
        c0, c1, c2, c3 = P3_COEFFS
        p3v = add_public(_poly_combine([(c1, x), (c2, pw[2]), (c3, pw[3])], p),
                         vencode(c0, p), p)
        d0, d1, d2, d4, d6 = P6_COEFFS
        p6v = add_public(_poly_combine([(d1, x), (d2, pw[2]), (d4, pw[4]), (d6, pw[6])], p),
                         vencode(d0, p), p)
        # monotone bits: out = b1*P3 + b2*(P6-P3) + b3*(x-P6)
        t1 = mul_shared(b1, p3v, ctx)
        t2 = mul_shared(b2, sub_local(p6v, p3v, p), ctx)
        t3 = mul_shared(b3, sub_local(x, p6v, p), ctx)
        out = add_local(t1, add_local(t2, t3, p), p)
        bits = (b1, b2, b3)
    else:
        brk = GELU_LOW_BREAK
        b1 = b2a(cmp_shared(x, vencode(-brk, p), 0, ctx, width=w), ctx)
        b2 = b2a(cmp_shared(x, vencode(brk, p), 0, ctx, width=w), ctx)
        a, b = GELU_LOW_COEFFS
        x2 = trunc_shared(mul_shared(x, x, ctx), p.f, p)
        p2v = _poly_combine([(a, x), (b, x2)], p)
        t1 = mul_shared(b1, p2v, ctx)
        t2 = mul_shared(b2, sub_local(x, p2v, p), ctx)
        out = add_local(t1, t2, p)
        bits = (b1, b2)
    if return_branch_bits:
        return out, bits
    return out


def layernorm_shared(x: SharedMatrix, gamma: SharedMatrix, beta: SharedMatrix,
                     ctx: ProtocolContext, vmax: float = 64.0) -> SharedMatrix:
    """Per-row gamma*(x-mu)/sqrt(var+eps) + beta with eps = 16*2^-f.

    The inverse square root uses the seeded Newton iteration; rows whose
    variance exceeds ``vmax`` are out of contract (unchecked).
    """
    p = ctx.params
    rows, d = x.shape
    if rows == 0:
        return x
    eps = 16.0 / p.scale
    m = np.uint64(p.mask)
    mean = scale_local(apair(x.s0.sum(axis=1, dtype=np.uint64) & m,
                             x.s1.sum(axis=1, dtype=np.uint64) & m),
                       vencode(1.0 / d, p), p)
    mean = trunc_shared(mean, p.f, p)
    cent = sub_local(x.pair(), apair(mean[0].value[:, None], mean[1].value[:, None]), p)
    sq = trunc_shared(mul_shared(cent, cent, ctx), p.f, p)
    var = scale_local(apair(sq[0].value.sum(axis=1, dtype=np.uint64) & m,
                            sq[1].value.sum(axis=1, dtype=np.uint64) & m),
                      vencode(1.0 / d, p), p)
    var = add_public(trunc_shared(var, p.f, p), vencode(eps, p), p)
    w = rsqrt_shared(var, vmax, ctx)
    wb = apair(np.broadcast_to(w[0].value[:, None], (rows, d)).copy(),
               np.broadcast_to(w[1].value[:, None], (rows, d)).copy())
    normed = trunc_shared(mul_shared(cent, wb, ctx), p.f, p)
    gb = _broadcast(gamma.pair(), (rows, d))
    bb = _broadcast(beta.pair(), (rows, d))
    scaled = trunc_shared(mul_shared(normed, gb, ctx), p.f, p)
    return SharedMatrix.from_pair(add_local(scaled, bb, p))
