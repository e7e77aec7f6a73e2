"""Trusted-dealer correlated randomness.

The dealer runs strictly before the online phase and derives everything
from one seed, so a protocol run is reproducible bit for bit.  It hands
out Beaver triples (scalar, elementwise and matrix shaped), boolean AND
triples, and edaBit-style random values with consistent XOR-shared bit
decompositions.  Dealer randomness is independent of every secret.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ring import FixedPointParams


class TapeExhaustedError(RuntimeError):
    pass


class TripleReuseError(RuntimeError):
    pass


@dataclass
class BeaverTriple:
    """Shares of (a, b, c) with c = a*b mod 2^ell; single use."""

    a0: np.ndarray
    a1: np.ndarray
    b0: np.ndarray
    b1: np.ndarray
    c0: np.ndarray
    c1: np.ndarray
    _used: bool = field(default=False, repr=False)

    def consume(self):
        if self._used:
            raise TripleReuseError("Beaver triple consumed twice")
        self._used = True


@dataclass
class AndTriple:
    """XOR shares of bits (a, b, c) with c = a & b; single use."""

    a0: np.ndarray
    a1: np.ndarray
    b0: np.ndarray
    b1: np.ndarray
    c0: np.ndarray
    c1: np.ndarray
    _used: bool = field(default=False, repr=False)

    def consume(self):
        if self._used:
            raise TripleReuseError("AND triple consumed twice")
        self._used = True


@dataclass
class EdaBit:
    """Arithmetic shares of r mod 2^width plus XOR shares of r's bits."""

    r0: np.ndarray
    r1: np.ndarray
    bits0: np.ndarray  # (..., width) uint8
    bits1: np.ndarray
    width: int
    _used: bool = field(default=False, repr=False)

    def consume(self):
        if self._used:
            raise TripleReuseError("edaBit consumed twice")
        self._used = True


class DealerTape:
    """Seeded stream of correlated randomness for both parties.

    ``limit`` caps the number of random ring elements drawn; protocols
    surface the cap as tape exhaustion.
    """

    def __init__(self, seed: int, params: FixedPointParams, limit: int | None = None):
        self.params = params
        self.rng = np.random.Generator(np.random.PCG64(seed))
        self.limit = limit
        self.drawn = 0

    def _count(self, n: int):
        self.drawn += int(n)
        if self.limit is not None and self.drawn > self.limit:
            raise TapeExhaustedError(f"dealer tape exhausted after {self.limit} elements")

    def rand_ring(self, shape) -> np.ndarray:
        size = int(np.prod(shape)) if shape else 1
        self._count(size)
        out = self.rng.integers(0, 1 << 64, size=shape, dtype=np.uint64)
        return out & np.uint64(self.params.mask)

    def rand_bits(self, shape) -> np.ndarray:
        size = int(np.prod(shape)) if shape else 1
        self._count(size)
        return self.rng.integers(0, 2, size=shape, dtype=np.uint8)

    def beaver(self, shape) -> BeaverTriple:
        m = np.uint64(self.params.mask)
        a = self.rand_ring(shape)
        b = self.rand_ring(shape)
        c = (a * b) & m
        a0 = self.rand_ring(shape)
        b0 = self.rand_ring(shape)
        c0 = self.rand_ring(shape)
        return BeaverTriple(a0, (a - a0) & m, b0, (b - b0) & m, c0, (c - c0) & m)

    def matrix_beaver(self, n: int, k: int, mcols: int) -> BeaverTriple:
        """One triple per matmul shape: C = A @ B mod 2^ell."""
        m = np.uint64(self.params.mask)
        a = self.rand_ring((n, k))
        b = self.rand_ring((k, mcols))
        c = (a @ b) & m
        a0 = self.rand_ring((n, k))
        b0 = self.rand_ring((k, mcols))
        c0 = self.rand_ring((n, mcols))
        return BeaverTriple(a0, (a - a0) & m, b0, (b - b0) & m, c0, (c - c0) & m)

    def and_triple(self, shape) -> AndTriple:
        a = self.rand_bits(shape)
        b = self.rand_bits(shape)
        c = a & b
        a0 = self.rand_bits(shape)
        b0 = self.rand_bits(shape)
        c0 = self.rand_bits(shape)
        return AndTriple(a0, a ^ a0, b0, b ^ b0, c0, c ^ c0)

    def edabit(self, shape, width: int) -> EdaBit:
        """Random r < 2^width with its bit decomposition, both shared."""
        if not (1 <= width <= self.params.ell):
            raise ValueError(f"edabit width {width} out of range")
        bits = self.rand_bits(tuple(shape) + (width,))
        weights = (np.uint64(1) << np.arange(width, dtype=np.uint64))
        r = (bits.astype(np.uint64) * weights).sum(axis=-1, dtype=np.uint64)
        wmask = np.uint64((1 << width) - 1)
        r &= wmask
        r0 = self.rand_ring(shape) & wmask
        bits0 = self.rand_bits(bits.shape)
        return EdaBit(r0, (r - r0) & wmask, bits0, bits ^ bits0, width)
