"""Weight classes of w-bit words and base-3 signature arithmetic.

A word is mapped to a trit according to where its Hamming weight falls:
below the central band (0), inside it (1) or above it (2). The trits of the
last ``k`` words form a signature, kept as an integer in ``[0, 3**k)``.

The integer helpers at the bottom are compiled with numba and used by the
streaming loop; the plain functions are the reference versions.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import comb

import numba
import numba.extending
import numba.types

SUPPORTED_WIDTHS = (16, 32, 64)
MAX_K = 19

# ceil(2**32 / 3); exact floor division by 3 for 0 <= s < 2**31
DIV3_MAGIC = 1431655766


def _check_width(w: int) -> None:
    if w % 2 or w < 16 or w > 64:
        raise ValueError(f"word width must be even and in [16, 64], got {w}")


def hamming_weight(x: int) -> int:
    """Number of set bits of a non-negative integer."""
    return bin(x).count("1")


def _band_mass(w: int, ell: int) -> Fraction:
    half = w // 2
    return Fraction(sum(comb(w, i) for i in range(half - ell, half + ell + 1)), 2**w)


def select_ell(w: int) -> int:
    """Half-width of the central band whose binomial mass is closest to 1/2.

    Ties go to the smaller half-width.
    """
    _check_width(w)
    best, best_err = 0, None
    for ell in range(w // 2 + 1):
        err = abs(_band_mass(w, ell) - Fraction(1, 2))
        if best_err is None or err < best_err:
            best, best_err = ell, err
    return best


@dataclass(frozen=True)
class WordParams:
    """Word width and central band half-width."""

    w: int
    ell: int

    def __post_init__(self):
        _check_width(self.w)
        if not 0 <= self.ell <= self.w // 2:
            raise ValueError(f"ell must be in [0, {self.w // 2}], got {self.ell}")

    @classmethod
    def for_width(cls, w: int, ell: int | None = None) -> "WordParams":
        return cls(w, select_ell(w) if ell is None else ell)

    @property
    def low(self) -> int:
        """Smallest weight of the central band."""
        return self.w // 2 - self.ell

    @property
    def high(self) -> int:
        """Largest weight of the central band."""
        return self.w // 2 + self.ell


def classify(x: int, params: WordParams) -> int:
    weight = hamming_weight(x)
    if weight < params.low:
        return 0
    if weight > params.high:
        return 2
    return 1


def central_probability(params: WordParams) -> float:
    """Probability that a uniform random word falls in the central band."""
    return float(_band_mass(params.w, params.ell))


def fixed_point_div3(s: int) -> int:
    """``s // 3`` by multiplication with ``ceil(2**32 / 3)``; valid for ``s < 3**19``."""
    return (DIV3_MAGIC * s) >> 32


@dataclass(frozen=True)
class Signature:
    """The trits of the ``k`` most recent words.

    The newest trit is the most significant base-3 digit of ``value``, so
    reading ``value`` from the least significant digit up lists the trits
    oldest first.
    """

    value: int
    k: int

    def __post_init__(self):
        if not 1 <= self.k <= MAX_K:
            raise ValueError(f"k must be in [1, {MAX_K}], got {self.k}")
        if not 0 <= self.value < 3**self.k:
            raise ValueError(f"signature value {self.value} out of range for k={self.k}")

    @classmethod
    def from_trits(cls, trits, k: int | None = None) -> "Signature":
        """Build a signature from trits listed oldest first."""
        trits = list(trits)
        k = len(trits) if k is None else k
        value = 0
        for i, t in enumerate(trits):
            value += t * 3**i
        return cls(value, k)

    def trits(self) -> list[int]:
        """Trits oldest first."""
        return signature_trits(self.value, self.k)

    def __str__(self):
        return format_signature(self.value, self.k)


def signature_update(s: Signature, t: int) -> Signature:
    """Drop the oldest trit of ``s`` and append ``t`` as the newest."""
    return Signature(s.value // 3 + t * 3 ** (s.k - 1), s.k)


def signature_trits(value: int, k: int) -> list[int]:
    """Base-3 digits of ``value`` from least to most significant (oldest word first)."""
    out = []
    for _ in range(k):
        value, d = divmod(value, 3)
        out.append(d)
    return out


def format_signature(value: int, k: int) -> str:
    """Signature as ``k`` trit characters, oldest word first."""
    return "".join(str(d) for d in signature_trits(value, k))


def parse_signature(text: str) -> int:
    """Inverse of :func:`format_signature`."""
    return Signature.from_trits(int(c) for c in text).value


# --- compiled helpers for the streaming loop ---------------------------------

@numba.extending.intrinsic
def _ctpop(tyctx, x):
    if isinstance(x, numba.types.Integer):
        def impl(cgctx, builder, sig, args):
            return builder.ctpop(args[0])
        return x(x), impl


@numba.njit(inline="always")
def popcount64(x):
    return numba.int64(_ctpop(numba.uint64(x)))


@numba.njit(inline="always")
def classify_weight(weight, low, high):
    if weight < low:
        return 0
    if weight > high:
        return 2
    return 1


@numba.njit(inline="always")
def next_signature(s, trit, top):
    """Fixed-point version of ``s // 3 + trit * top`` with ``top = 3**(k-1)``."""
    return ((s * DIV3_MAGIC) >> 32) + trit * top
