"""Two-party additive secret sharing and its dealer-assisted protocols.

All protocol functions are written pair-style: the orchestrator holds both
parties' share objects and moves every cross-party byte through the
channel, so the ledger and transcript see exactly what a two-process
deployment would.  Within a function, each party's outgoing message is
computed only from that party's own state plus previously received bytes.

Bit vectors are uint8 arrays with the bit index on the last axis (LSB
first); they are packed with numpy before hitting the wire.
"""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from .channel import Channel, Transcript
from .dealer import DealerTape
from .ring import FixedPointParams


@dataclass
class ArithShare:
    party: int
    value: np.ndarray  # uint64, reduced mod 2^ell


@dataclass
class BoolShare:
    party: int
    bit: np.ndarray  # uint8 in {0,1}


APair = tuple[ArithShare, ArithShare]
BPair = tuple[BoolShare, BoolShare]


class ShareMismatchError(ValueError):
    pass


@dataclass
class ProtocolContext:
    """Everything one protocol run threads through: numeric parameters,
    dealer tape, channel, transcript, and the current phase label."""

    params: FixedPointParams
    tape: DealerTape
    channel: Channel
    transcript: Transcript
    adder: str = "prefix"  # "prefix" (log-depth) or "ripple"
    label: str = "misc"

    @contextmanager
    def phase(self, label: str):
        prev = self.label
        self.label = label
        try:
            yield self
        finally:
            self.label = prev


def _mask(p: FixedPointParams) -> np.uint64:
    return np.uint64(p.mask)


def apair(v0: np.ndarray, v1: np.ndarray) -> APair:
    return ArithShare(0, v0), ArithShare(1, v1)


def bpair(b0: np.ndarray, b1: np.ndarray) -> BPair:
    return BoolShare(0, b0), BoolShare(1, b1)


# ---------------------------------------------------------------------------
# sharing / opening

def share(x, rng: np.random.Generator, p: FixedPointParams) -> APair:
    """s0 uniform, s1 = x - s0 mod 2^ell."""
    x = np.asarray(x, dtype=np.uint64) & _mask(p)
    s0 = rng.integers(0, 1 << 64, size=x.shape, dtype=np.uint64) & _mask(p)
    return apair(s0, (x - s0) & _mask(p))


def reconstruct(pair: APair, p: FixedPointParams) -> np.ndarray:
    """Test-side reconstruction without touching the channel."""
    return (pair[0].value + pair[1].value) & _mask(p)


def _check_pair(pair):
    if pair[0].party != 0 or pair[1].party != 1:
        raise ShareMismatchError("shares do not belong to matching parties")


def open_shared(pair: APair, ctx: ProtocolContext, kind: str) -> np.ndarray:
    """Reconstruct toward both parties; every open lands in the transcript."""
    _check_pair(pair)
    s0, s1 = pair
    if s0.value.shape != s1.value.shape:
        raise ShareMismatchError("share shapes differ")
    b0 = np.ascontiguousarray(s0.value).astype("<u8").tobytes()
    b1 = np.ascontiguousarray(s1.value).astype("<u8").tobytes()
    r0, r1 = ctx.channel.exchange(ctx.label, b0, b1)
    peer_for_0 = np.frombuffer(r0, dtype="<u8").reshape(s0.value.shape)
    val = (s0.value + peer_for_0.astype(np.uint64)) & _mask(ctx.params)
    ctx.transcript.log(kind, ctx.label, val.tobytes(), value=val.copy())
    return val


def open_bits(pair: BPair, ctx: ProtocolContext, kind: str) -> np.ndarray:
    """Open XOR-shared bits to both parties."""
    b0, b1 = pair
    p0 = np.packbits(b0.bit.reshape(-1)).tobytes()
    p1 = np.packbits(b1.bit.reshape(-1)).tobytes()
    r0, _ = ctx.channel.exchange(ctx.label, p0, p1)
    n = b0.bit.size
    peer = np.unpackbits(np.frombuffer(r0, dtype=np.uint8), count=n).reshape(b0.bit.shape)
    val = b0.bit ^ peer
    ctx.transcript.log(kind, ctx.label, val.tobytes(), value=val.copy())
    return val


# ---------------------------------------------------------------------------
# linear (communication-free) operations

def add_local(x: APair, y: APair, p: FixedPointParams) -> APair:
    return apair((x[0].value + y[0].value) & _mask(p), (x[1].value + y[1].value) & _mask(p))


def sub_local(x: APair, y: APair, p: FixedPointParams) -> APair:
    return apair((x[0].value - y[0].value) & _mask(p), (x[1].value - y[1].value) & _mask(p))


def add_public(x: APair, k, p: FixedPointParams) -> APair:
    """Exactly one party (P0) adds the public constant."""
    k = np.asarray(k, dtype=np.uint64)
    return apair((x[0].value + k) & _mask(p), x[1].value.copy())


def scale_local(x: APair, k, p: FixedPointParams) -> APair:
    """Both parties multiply their share by the public ring element k."""
    k = np.asarray(k, dtype=np.uint64)
    return apair((x[0].value * k) & _mask(p), (x[1].value * k) & _mask(p))


def neg_local(x: APair, p: FixedPointParams) -> APair:
    return apair((-x[0].value) & _mask(p), (-x[1].value) & _mask(p))


def xor_local(x: BPair, y: BPair) -> BPair:
    return bpair(x[0].bit ^ y[0].bit, x[1].bit ^ y[1].bit)


def not_local(x: BPair) -> BPair:
    """P0 flips its share."""
    return bpair(x[0].bit ^ 1, x[1].bit.copy())


# ---------------------------------------------------------------------------
# interactive primitives

def mul_shared(x: APair, y: APair, ctx: ProtocolContext) -> APair:
    """Beaver multiplication: one round, two uniform masked opens."""
    p = ctx.params
    if x[0].value.shape != y[0].value.shape:
        raise ShareMismatchError("mul_shared operand shapes differ")
    t = ctx.tape.beaver(x[0].value.shape)
    t.consume()
    m = _mask(p)
    d0 = (x[0].value - t.a0) & m
    e0 = (y[0].value - t.b0) & m
    d1 = (x[1].value - t.a1) & m
    e1 = (y[1].value - t.b1) & m
    pay0 = np.concatenate([d0.reshape(-1), e0.reshape(-1)]).astype("<u8").tobytes()
    pay1 = np.concatenate([d1.reshape(-1), e1.reshape(-1)]).astype("<u8").tobytes()
    r0, _ = ctx.channel.exchange(ctx.label, pay0, pay1)
    peer = np.frombuffer(r0, dtype="<u8").astype(np.uint64)
    n = d0.size
    d = (d0 + peer[:n].reshape(d0.shape)) & m
    e = (e0 + peer[n:].reshape(e0.shape)) & m
    ctx.transcript.log("masked", ctx.label, d.tobytes() + e.tobytes())
    z0 = (t.c0 + d * t.b0 + e * t.a0 + d * e) & m
    z1 = (t.c1 + d * t.b1 + e * t.a1) & m
    return apair(z0, z1)


def trunc_shared(x: APair, bits: int, p: FixedPointParams) -> APair:
    """Local probabilistic truncation; result is trunc(x) within 1 ulp
    except with probability about |x| / 2^(ell-1)."""
    m = _mask(p)
    z0 = x[0].value >> np.uint64(bits)
    neg1 = (-x[1].value) & m
    z1 = (-(neg1 >> np.uint64(bits))) & m
    return apair(z0, z1)


def and_shared(x: BPair, y: BPair, ctx: ProtocolContext) -> BPair:
    """Bitwise AND of XOR-shared bit arrays via a dealer AND triple."""
    if x[0].bit.shape != y[0].bit.shape:
        raise ShareMismatchError("and_shared operand shapes differ")
    t = ctx.tape.and_triple(x[0].bit.shape)
    t.consume()
    d0 = x[0].bit ^ t.a0
    e0 = y[0].bit ^ t.b0
    d1 = x[1].bit ^ t.a1
    e1 = y[1].bit ^ t.b1
    n = d0.size
    pay0 = np.packbits(np.concatenate([d0.reshape(-1), e0.reshape(-1)])).tobytes()
    pay1 = np.packbits(np.concatenate([d1.reshape(-1), e1.reshape(-1)])).tobytes()
    r0, _ = ctx.channel.exchange(ctx.label, pay0, pay1)
    peer = np.unpackbits(np.frombuffer(r0, dtype=np.uint8), count=2 * n)
    d = d0 ^ peer[:n].reshape(d0.shape)
    e = e0 ^ peer[n:].reshape(e0.shape)
    ctx.transcript.log("masked", ctx.label, d.tobytes() + e.tobytes())
    z0 = t.c0 ^ (d & t.b0) ^ (e & t.a0) ^ (d & e)
    z1 = t.c1 ^ (d & t.b1) ^ (e & t.a1)
    return bpair(z0, z1)


# ---------------------------------------------------------------------------
# bit-decomposition machinery

def _public_bits(c: np.ndarray, width: int) -> np.ndarray:
    shifts = np.arange(width, dtype=np.uint64)
    return ((c[..., None] >> shifts) & np.uint64(1)).astype(np.uint8)


def _prefix_generate(g: BPair, p: BPair, ctx: ProtocolContext) -> BPair:
    """Kogge-Stone inclusive scan of (generate, propagate) pairs along the
    last axis; returns the prefix-generate (carry out of bits 0..i)."""
    width = g[0].bit.shape[-1]
    G, P = g, p
    d = 1
    while d < width:
        # shift toward higher indices, padding with the identity (g=0, p=1)
        def shift(pair, fill):
            out0 = np.empty_like(pair[0].bit)
            out1 = np.empty_like(pair[1].bit)
            out0[..., d:] = pair[0].bit[..., :-d]
            out1[..., d:] = pair[1].bit[..., :-d]
            out0[..., :d] = fill
            out1[..., :d] = 0
            return bpair(out0, out1)

        Gs = shift(G, 0)
        Ps = shift(P, 1)  # identity propagate: P0 carries the public 1
        lhs = bpair(
            np.concatenate([P[0].bit, P[0].bit], axis=-1),
            np.concatenate([P[1].bit, P[1].bit], axis=-1),
        )
        rhs = bpair(
            np.concatenate([Gs[0].bit, Ps[0].bit], axis=-1),
            np.concatenate([Gs[1].bit, Ps[1].bit], axis=-1),
        )
        both = and_shared(lhs, rhs, ctx)
        pg0, pp0 = both[0].bit[..., :width], both[0].bit[..., width:]
        pg1, pp1 = both[1].bit[..., :width], both[1].bit[..., width:]
        G = bpair(G[0].bit ^ pg0, G[1].bit ^ pg1)
        P = bpair(pp0, pp1)
        d <<= 1
    return G


def _ripple_generate(g: BPair, p: BPair, ctx: ProtocolContext) -> BPair:
    """O(width)-round carry chain; same output as the prefix scan."""
    width = g[0].bit.shape[-1]
    out0 = np.empty_like(g[0].bit)
    out1 = np.empty_like(g[1].bit)
    carry = bpair(g[0].bit[..., 0].copy(), g[1].bit[..., 0].copy())
    out0[..., 0] = carry[0].bit
    out1[..., 0] = carry[1].bit
    for i in range(1, width):
        pi = bpair(p[0].bit[..., i], p[1].bit[..., i])
        t = and_shared(pi, carry, ctx)
        carry = bpair(g[0].bit[..., i] ^ t[0].bit, g[1].bit[..., i] ^ t[1].bit)
        out0[..., i] = carry[0].bit
        out1[..., i] = carry[1].bit
    return bpair(out0, out1)


def _carry_scan(g: BPair, p: BPair, ctx: ProtocolContext) -> BPair:
    if ctx.adder == "ripple":
        return _ripple_generate(g, p, ctx)
    return _prefix_generate(g, p, ctx)


def _add_public_bits(c: np.ndarray, rbits: BPair, ctx: ProtocolContext) -> BPair:
    """XOR-shared bits of (c + r) mod 2^width from public c and shared bits of r."""
    width = rbits[0].bit.shape[-1]
    cb = _public_bits(c, width)
    p0 = rbits[0].bit ^ cb
    p1 = rbits[1].bit
    g0 = rbits[0].bit & cb  # AND with a public bit is share-local
    g1 = rbits[1].bit & cb
    pg = _carry_scan(bpair(g0, g1), bpair(p0, p1), ctx)
    # carry into position i is the prefix generate of positions 0..i-1
    cin0 = np.zeros_like(p0)
    cin1 = np.zeros_like(p1)
    cin0[..., 1:] = pg[0].bit[..., :-1]
    cin1[..., 1:] = pg[1].bit[..., :-1]
    return bpair(p0 ^ cin0, p1 ^ cin1)


def shared_bits(x: APair, width: int, ctx: ProtocolContext) -> BPair:
    """Bit-decompose shared x mod 2^width into XOR-shared bits."""
    p = ctx.params
    wmask = np.uint64((1 << width) - 1)
    eda = ctx.tape.edabit(x[0].value.shape, width)
    eda.consume()
    c0 = (x[0].value - eda.r0) & wmask
    c1 = (x[1].value - eda.r1) & wmask
    pay0 = c0.astype("<u8").tobytes()
    pay1 = c1.astype("<u8").tobytes()
    r0m, _ = ctx.channel.exchange(ctx.label, pay0, pay1)
    peer = np.frombuffer(r0m, dtype="<u8").reshape(c0.shape).astype(np.uint64)
    c = (c0 + peer) & wmask
    ctx.transcript.log("masked", ctx.label, c.tobytes())
    return _add_public_bits(c, bpair(eda.bits0, eda.bits1), ctx)


def _unsigned_gt_bits(a: BPair, b: BPair, ctx: ProtocolContext) -> BPair:
    """Strict unsigned a > b on XOR-shared bit vectors: the carry out of
    a + NOT(b), i.e. [a + (2^w - 1 - b) >= 2^w] = [a > b]."""
    nb = not_local(b)
    g = and_shared(a, nb, ctx)
    p2 = bpair(a[0].bit ^ nb[0].bit, a[1].bit ^ nb[1].bit)
    pg = _carry_scan(g, p2, ctx)
    return bpair(pg[0].bit[..., -1].copy(), pg[1].bit[..., -1].copy())


def cmp_shared(x: APair, threshold, holder: int, ctx: ProtocolContext,
               width: int | None = None) -> BPair:
    """Boolean shares of [x > threshold], signed strict comparison.

    ``threshold`` is the private input of party ``holder`` (scalar or array
    broadcast to x's shape).  ``width`` narrows the comparison to values
    known to fit in width bits signed; default is the full ring.
    """
    p = ctx.params
    w = p.ell if width is None else width
    if not (2 <= w <= p.ell):
        raise ValueError(f"comparison width {w} out of range")
    wmask = np.uint64((1 << w) - 1)
    half = np.uint64(1 << (w - 1))
    x0 = x[0].value & wmask
    x1 = x[1].value & wmask
    if holder == 0:
        x0 = (x0 + half) & wmask  # bias by 2^(w-1): signed order -> unsigned order
    else:
        x1 = (x1 + half) & wmask
    th = (np.asarray(threshold, dtype=np.uint64) + half) & wmask
    th = np.broadcast_to(th, x0.shape)
    xbits = shared_bits(apair(x0, x1), w, ctx)
    tb = _public_bits(th, w)
    tbits = bpair(tb, np.zeros_like(tb)) if holder == 0 else bpair(np.zeros_like(tb), tb)
    return _unsigned_gt_bits(xbits, tbits, ctx)


def msb_shared(x: APair, bit_pos: int, ctx: ProtocolContext) -> BPair:
    """Boolean shares of bit ``bit_pos`` of the secret."""
    w = bit_pos + 1
    wmask = np.uint64((1 << w) - 1)
    xw = apair(x[0].value & wmask, x[1].value & wmask)
    bits = shared_bits(xw, w, ctx)
    return bpair(bits[0].bit[..., bit_pos].copy(), bits[1].bit[..., bit_pos].copy())


def b2a(b: BPair, ctx: ProtocolContext) -> APair:
    """Arithmetic shares of an XOR-shared bit: b0 + b1 - 2*b0*b1."""
    p = ctx.params
    m = _mask(p)
    v0 = b[0].bit.astype(np.uint64)
    v1 = b[1].bit.astype(np.uint64)
    cross = mul_shared(apair(v0, np.zeros_like(v0)), apair(np.zeros_like(v1), v1), ctx)
    z0 = (v0 - np.uint64(2) * cross[0].value) & m
    z1 = (v1 - np.uint64(2) * cross[1].value) & m
    return apair(z0, z1)


def select_shared(b: APair, x: APair, y: APair, ctx: ProtocolContext) -> APair:
    """x if b=1 else y, with b arithmetically shared: y + b*(x - y)."""
    p = ctx.params
    diff = sub_local(x, y, p)
    t = mul_shared(b, diff, ctx)
    return add_local(y, t, p)
