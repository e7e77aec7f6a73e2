"""Secret-shared matrices and the linear layers built on them.

A SharedMatrix is one party-pair of row-major uint64 arrays at the run's
fixed-point scale.  Matrix products use one matrix Beaver triple per call
(one round, two masked matrix opens), then a single truncation back to
scale f, so accumulation happens at double scale.
"""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from .ring import FixedPointParams, vencode
from .sharing import (APair, ArithShare, ProtocolContext, apair, add_local,
                      scale_local, trunc_shared)


class ShapeMismatchError(ValueError):
    pass


@dataclass
class SharedMatrix:
    """Congruent shares of an n x m fixed-point matrix."""

    s0: np.ndarray
    s1: np.ndarray

    def __post_init__(self):
        if self.s0.shape != self.s1.shape:
            raise ShapeMismatchError("party shapes differ")

    @property
    def shape(self):
        return self.s0.shape

    @property
    def rows(self) -> int:
        return self.s0.shape[0]

    @property
    def cols(self) -> int:
        return self.s0.shape[1]

    def pair(self) -> APair:
        return apair(self.s0, self.s1)

    @staticmethod
    def from_pair(pair: APair) -> "SharedMatrix":
        return SharedMatrix(pair[0].value, pair[1].value)

    def row(self, i: int) -> APair:
        return apair(self.s0[i], self.s1[i])


def share_matrix(x: np.ndarray, rng: np.random.Generator, p: FixedPointParams) -> SharedMatrix:
    m = np.uint64(p.mask)
    x = np.asarray(x, dtype=np.uint64) & m
    s0 = rng.integers(0, 1 << 64, size=x.shape, dtype=np.uint64) & m
    return SharedMatrix(s0, (x - s0) & m)


def reconstruct_matrix(x: SharedMatrix, p: FixedPointParams) -> np.ndarray:
    return (x.s0 + x.s1) & np.uint64(p.mask)


def matmul_shared(x: SharedMatrix, w: SharedMatrix, ctx: ProtocolContext,
                  trunc: bool = True) -> SharedMatrix:
    """X @ W with a matrix Beaver triple, truncated back to scale f."""
    p = ctx.params
    if x.cols != w.rows:
        raise ShapeMismatchError(f"inner dims {x.cols} != {w.rows}")
    if x.rows == 0:
        return SharedMatrix(np.zeros((0, w.cols), np.uint64), np.zeros((0, w.cols), np.uint64))
    t = ctx.tape.matrix_beaver(x.rows, x.cols, w.cols)
    t.consume()
    m = np.uint64(p.mask)
    d0 = (x.s0 - t.a0) & m
    e0 = (w.s0 - t.b0) & m
    d1 = (x.s1 - t.a1) & m
    e1 = (w.s1 - t.b1) & m
    pay0 = np.concatenate([d0.reshape(-1), e0.reshape(-1)]).astype("<u8").tobytes()
    pay1 = np.concatenate([d1.reshape(-1), e1.reshape(-1)]).astype("<u8").tobytes()
    r0, _ = ctx.channel.exchange(ctx.label, pay0, pay1)
    peer = np.frombuffer(r0, dtype="<u8").astype(np.uint64)
    nd = d0.size
    d = (d0 + peer[:nd].reshape(d0.shape)) & m
    e = (e0 + peer[nd:].reshape(e0.shape)) & m
    ctx.transcript.log("masked", ctx.label, d.tobytes() + e.tobytes())
    z0 = (t.c0 + d @ t.b0 + t.a0 @ e + d @ e) & m
    z1 = (t.c1 + d @ t.b1 + t.a1 @ e) & m
    out = apair(z0, z1)
    if trunc:
        out = trunc_shared(out, p.f, p)
    return SharedMatrix.from_pair(out)


def attention_scores(q: SharedMatrix, k: SharedMatrix, head_dim: int,
                     ctx: ProtocolContext) -> SharedMatrix:
    """Q @ K^T scaled by the public constant 1/sqrt(d); stops before SoftMax."""
    if q.cols != head_dim or k.cols != head_dim:
        raise ShapeMismatchError("Q/K column count does not match head dim")
    p = ctx.params
    kt = SharedMatrix(np.ascontiguousarray(k.s0.T), np.ascontiguousarray(k.s1.T))
    scores = matmul_shared(q, kt, ctx)
    inv_sqrt_d = vencode(1.0 / math.sqrt(head_dim), p)
    scaled = scale_local(scores.pair(), inv_sqrt_d, p)
    return SharedMatrix.from_pair(trunc_shared(scaled, p.f, p))


def add_bias(x: SharedMatrix, b: SharedMatrix, p: FixedPointParams) -> SharedMatrix:
    """Row-broadcast bias add; zero communication."""
    if b.shape[-1] != x.cols:
        raise ShapeMismatchError("bias length does not match columns")
    m = np.uint64(p.mask)
    return SharedMatrix((x.s0 + b.s0) & m, (x.s1 + b.s1) & m)


def residual_add(x: SharedMatrix, y: SharedMatrix, p: FixedPointParams) -> SharedMatrix:
    if x.shape != y.shape:
        raise ShapeMismatchError("residual shapes differ")
    m = np.uint64(p.mask)
    return SharedMatrix((x.s0 + y.s0) & m, (x.s1 + y.s1) & m)
