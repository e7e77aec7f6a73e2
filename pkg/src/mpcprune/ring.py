"""Fixed-point encoding and exact arithmetic over Z_{2^ell}.

Values live in the unsigned ring Z_{2^ell}; elements >= 2^(ell-1) are read
as negatives (two's complement).  A fixed-point rational r is carried as
round(r * 2^f) mod 2^ell.  Everything here is pure value arithmetic; the
vectorised helpers operate on uint64 numpy arrays and are shared by the
plaintext oracle and the secret-shared protocols.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class RingOverflowError(ValueError):
    """Raised when a rational does not fit the fixed-point range."""


@dataclass(frozen=True)
class FixedPointParams:
    """Ring bit width ell and fractional bit count f, global per run."""

    ell: int = 64
    f: int = 20

    def __post_init__(self):
        if not (2 <= self.f < self.ell <= 64):
            raise ValueError(f"need 2 <= f < ell <= 64, got ell={self.ell}, f={self.f}")

    @property
    def modulus(self) -> int:
        return 1 << self.ell

    @property
    def mask(self) -> int:
        return (1 << self.ell) - 1

    @property
    def scale(self) -> int:
        return 1 << self.f

    @property
    def half(self) -> int:
        """Smallest element read as negative."""
        return 1 << (self.ell - 1)


# ---------------------------------------------------------------------------
# scalar ops (python ints, always reduced mod 2^ell)

def to_signed(x: int, p: FixedPointParams) -> int:
    x &= p.mask
    return x - p.modulus if x >= p.half else x


def encode(real: float, p: FixedPointParams) -> int:
    """round(real * 2^f) mod 2^ell, rounding half away from zero."""
    if abs(real) >= 1 << (p.ell - p.f - 1):
        raise RingOverflowError(f"{real} out of range for ell={p.ell}, f={p.f}")
    scaled = real * p.scale
    q = int(abs(scaled) + 0.5)
    if scaled < 0:
        q = -q
    return q & p.mask


def decode(x: int, p: FixedPointParams) -> float:
    return to_signed(x, p) / p.scale


def ring_add(a: int, b: int, p: FixedPointParams) -> int:
    return (a + b) & p.mask


def ring_sub(a: int, b: int, p: FixedPointParams) -> int:
    return (a - b) & p.mask


def ring_mul(a: int, b: int, p: FixedPointParams) -> int:
    return (a * b) & p.mask


def truncate(x: int, bits: int, p: FixedPointParams) -> int:
    """Arithmetic right shift of the signed interpretation."""
    return (to_signed(x, p) >> bits) & p.mask


# ---------------------------------------------------------------------------
# vectorised ops on uint64 arrays

def _m(p: FixedPointParams) -> np.uint64:
    return np.uint64(p.mask)


def vreduce(x: np.ndarray, p: FixedPointParams) -> np.ndarray:
    return np.bitwise_and(x.astype(np.uint64, copy=False), _m(p))


def vadd(a: np.ndarray, b: np.ndarray, p: FixedPointParams) -> np.ndarray:
    return (a + b) & _m(p)


def vsub(a: np.ndarray, b: np.ndarray, p: FixedPointParams) -> np.ndarray:
    return (a - b) & _m(p)


def vmul(a: np.ndarray, b: np.ndarray, p: FixedPointParams) -> np.ndarray:
    return (a * b) & _m(p)


def vmatmul(a: np.ndarray, b: np.ndarray, p: FixedPointParams) -> np.ndarray:
    return (a @ b) & _m(p)


def vsigned(x: np.ndarray, p: FixedPointParams) -> np.ndarray:
    xi = x.astype(np.int64)
    if p.ell == 64:
        return xi
    return np.where(x >= np.uint64(p.half), xi - np.int64(p.modulus), xi)


def vtruncate(x: np.ndarray, bits: int, p: FixedPointParams) -> np.ndarray:
    return (vsigned(x, p) >> np.int64(bits)).astype(np.uint64) & _m(p)


def vencode(real, p: FixedPointParams) -> np.ndarray:
    real = np.asarray(real, dtype=np.float64)
    if np.any(np.abs(real) >= float(1 << (p.ell - p.f - 1))):
        raise RingOverflowError("value out of fixed-point range")
    scaled = real * p.scale
    q = np.sign(scaled) * np.floor(np.abs(scaled) + 0.5)
    return q.astype(np.int64).astype(np.uint64) & _m(p)


def vdecode(x: np.ndarray, p: FixedPointParams) -> np.ndarray:
    return vsigned(x, p).astype(np.float64) / p.scale
