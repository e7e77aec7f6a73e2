"""Plaintext fixed-point mirrors of the shared protocols.

These run the same ring arithmetic, truncation placement and polynomial
pieces as the two-party path, but on cleartext uint64 arrays with
deterministic truncation.  They serve as the reference the private
pipeline is checked against: the only expected divergence is the +-1 ulp
noise of probabilistic share truncation.
"""

from __future__ import annotations

import math

import numpy as np

from .reference import (GELU_LOW_BREAK, GELU_LOW_COEFFS, P3_COEFFS, P6_COEFFS,
                        PolyConfig)
from .ring import FixedPointParams, vencode, vmul, vreduce, vsigned, vtruncate


def _scale(x: np.ndarray, c: float, p: FixedPointParams) -> np.ndarray:
    return vtruncate(vmul(x, vencode(c, p), p), p.f, p)


def _gt(x: np.ndarray, thr: float, p: FixedPointParams) -> np.ndarray:
    return vsigned(x, p) > vsigned(np.uint64(vencode(thr, p)), p)


def fx_matmul(x: np.ndarray, w: np.ndarray, p: FixedPointParams,
              trunc: bool = True) -> np.ndarray:
    out = vreduce((x @ w), p)
    return vtruncate(out, p.f, p) if trunc else out


def fx_attention_scores(q: np.ndarray, k: np.ndarray, head_dim: int,
                        p: FixedPointParams) -> np.ndarray:
    scores = fx_matmul(q, k.T, p)
    return _scale(scores, 1.0 / math.sqrt(head_dim), p)


def fx_approx_exp(x: np.ndarray, n: int, t_clip: float,
                  p: FixedPointParams) -> np.ndarray:
    clip = _gt(x, t_clip, p).astype(np.uint64)
    t_enc = np.uint64(vencode(t_clip, p))
    xc = vreduce(t_enc + vmul(clip, vreduce(x - t_enc, p), p), p)
    t = vreduce(vtruncate(xc, n, p) + np.uint64(vencode(1.0, p)), p)
    for _ in range(n):
        t = vtruncate(vmul(t, t, p), p.f, p)
    return vmul(clip, t, p)


def fx_reciprocal(s: np.ndarray, k: float, p: FixedPointParams,
                  iters: int = 4) -> np.ndarray:
    segs = 4
    bounds = [k ** (i / segs) for i in range(segs + 1)]
    seeds = [2.0 / (bounds[i] + bounds[i + 1]) for i in range(segs)]
    y = np.full(s.shape, vencode(seeds[0], p), np.uint64)
    for i in range(1, segs):
        b = _gt(s, bounds[i], p).astype(np.uint64)
        y = vreduce(y + vmul(b, np.uint64(vencode(seeds[i] - seeds[i - 1], p)), p), p)
    two = np.uint64(vencode(2.0, p))
    for _ in range(iters):
        sy = vtruncate(vmul(s, y, p), p.f, p)
        y = vtruncate(vmul(y, vreduce(two - sy, p), p), p.f, p)
    return y


def fx_rsqrt(v: np.ndarray, vmax: float, p: FixedPointParams,
             iters: int = 4, segs: int = 8) -> np.ndarray:
    vmin = vmax / 4096.0
    ratio = (vmax / vmin) ** (1.0 / segs)
    bounds = [vmin * ratio ** i for i in range(segs + 1)]
    seeds = [(bounds[i] * bounds[i + 1]) ** -0.25 for i in range(segs)]
    y = np.full(v.shape, vencode(seeds[0], p), np.uint64)
    for i in range(1, segs):
        b = _gt(v, bounds[i], p).astype(np.uint64)
        y = vreduce(y + vmul(b, np.uint64(vencode(seeds[i] - seeds[i - 1], p)), p), p)
    three = np.uint64(vencode(3.0, p))
    for _ in range(iters):
        y2 = vtruncate(vmul(y, y, p), p.f, p)
        vy2 = vtruncate(vmul(v, y2, p), p.f, p)
        y = vtruncate(vmul(y, vreduce(three - vy2, p), p), p.f + 1, p)
    return y


def fx_softmax(mat: np.ndarray, high_degree, cfg: PolyConfig,
               p: FixedPointParams) -> np.ndarray:
    rows, k = mat.shape
    if rows == 0:
        return mat
    high = np.broadcast_to(np.asarray(high_degree, dtype=bool), (rows,))
    # sequential traversal max, strict greater-than, same tie-break as shares
    cur = mat[:, 0].copy()
    for j in range(1, k):
        b = vsigned(mat[:, j], p) > vsigned(cur, p)
        cur = np.where(b, mat[:, j], cur)
    norm = vreduce(mat - cur[:, None], p)
    e = np.empty((rows, k), np.uint64)
    for flag, n_taylor in ((True, cfg.exp_high_n), (False, cfg.exp_low_n)):
        idx = np.nonzero(high == flag)[0]
        if idx.size:
            e[idx] = fx_approx_exp(norm[idx], n_taylor, cfg.exp_clip_t, p)
    denom = vreduce(e.sum(axis=1, dtype=np.uint64), p)
    inv = fx_reciprocal(denom, float(k), p)
    return vtruncate(vmul(e, inv[:, None], p), p.f, p)


def _fx_poly(terms, shape, p: FixedPointParams) -> np.ndarray:
    acc = np.zeros(shape, np.uint64)
    for coeff, arr in terms:
        acc = vreduce(acc + _scale(arr, coeff, p), p)
    return acc


def fx_gelu(x: np.ndarray, high_degree: bool, p: FixedPointParams) -> np.ndarray:
    if high_degree:
        lo, mid, hi = (-5.0, -1.97, 3.0)
        b1 = _gt(x, lo, p).astype(np.uint64)
        b2 = _gt(x, mid, p).astype(np.uint64)
        b3 = _gt(x, hi, p).astype(np.uint64)
        x2 = vtruncate(vmul(x, x, p), p.f, p)
        x3 = vtruncate(vmul(x2, x, p), p.f, p)
        x4 = vtruncate(vmul(x2, x2, p), p.f, p)
        x6 = vtruncate(vmul(x2, x4, p), p.f, p)
        c0, c1, c2, c3 = P3_COEFFS
        p3v = vreduce(_fx_poly([(c1, x), (c2, x2), (c3, x3)], x.shape, p)
                      + np.uint64(vencode(c0, p)), p)
        d0, d1, d2, d4, d6 = P6_COEFFS
        p6v = vreduce(_fx_poly([(d1, x), (d2, x2), (d4, x4), (d6, x6)], x.shape, p)
                      + np.uint64(vencode(d0, p)), p)
        t1 = vmul(b1, p3v, p)
        t2 = vmul(b2, vreduce(p6v - p3v, p), p)
        t3 = vmul(b3, vreduce(x - p6v, p), p)
        return vreduce(t1 + t2 + t3, p)
    brk = GELU_LOW_BREAK
    b1 = _gt(x, -brk, p).astype(np.uint64)
    b2 = _gt(x, brk, p).astype(np.uint64)
    a, b = GELU_LOW_COEFFS
    x2 = vtruncate(vmul(x, x, p), p.f, p)
    p2v = _fx_poly([(a, x), (b, x2)], x.shape, p)
    return vreduce(vmul(b1, p2v, p) + vmul(b2, vreduce(x - p2v, p), p), p)


def fx_layernorm(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray,
                 p: FixedPointParams, vmax: float = 64.0) -> np.ndarray:
    rows, d = x.shape
    if rows == 0:
        return x
    eps = np.uint64(vencode(16.0 / p.scale, p))
    mean = vtruncate(_scale_sum(x, 1.0 / d, p), p.f, p)
    cent = vreduce(x - mean[:, None], p)
    sq = vtruncate(vmul(cent, cent, p), p.f, p)
    var = vreduce(vtruncate(_scale_sum(sq, 1.0 / d, p), p.f, p) + eps, p)
    w = fx_rsqrt(var, vmax, p)
    normed = vtruncate(vmul(cent, w[:, None], p), p.f, p)
    scaled = vtruncate(vmul(normed, np.broadcast_to(gamma, (rows, d)), p), p.f, p)
    return vreduce(scaled + np.broadcast_to(beta, (rows, d)), p)


def _scale_sum(x: np.ndarray, c: float, p: FixedPointParams) -> np.ndarray:
    """Row sum then public scale, still at double scale (caller truncates)."""
    s = vreduce(x.sum(axis=1, dtype=np.uint64), p)
    return vmul(s, np.uint64(vencode(c, p)), p)
