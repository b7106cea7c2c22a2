"""Generators under test and word sources.

All built-in generators produce 64-bit outputs. A :class:`WordSource` turns
them (or a raw little-endian byte stream) into chunks of ``w``-bit words,
optionally splitting outputs into pieces, and :class:`TransitionalSource`
xors a stream with itself shifted forward by one bit.

Recurrences (shift and rotation constants as published with each family):

=================  ==========================================================
xorshift128        Marsaglia's 32-bit xor128: t = x ^ (x << 11); x, y, z = y, z, w;
                   w ^= (w >> 19) ^ t ^ (t >> 8). Two consecutive outputs make
                   one 64-bit word, the first in the low half.
xorshift128plus    s1 ^= s1 << 23; s[1] = s1 ^ s0 ^ (s1 >> 18) ^ (s0 >> 5)
xorshift1024       s1 ^= s1 << 31; s[p] = s1 ^ s0 ^ (s1 >> 11) ^ (s0 >> 30)
xoroshiro128       s1 ^= s0; s0' = rotl(s0, 24) ^ s1 ^ (s1 << 16); s1' = rotl(s1, 37)
xoroshiro1024      s15 ^= s0; s[q] = rotl(s0, 25) ^ s15 ^ (s15 << 27); s[p] = rotl(s15, 36)
=================  ==========================================================

The plain xorshift1024 engine returns the freshly computed word, the plain
xoroshiro engines return the first word of the state before the update,
and the ``plus`` variants return the sum of the two words read by the
update. The control generator is SplitMix64: a Weyl counter passed through
a 64-bit avalanche finalizer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

GOLDEN_GAMMA = 0x9E3779B97F4A7C15
MASK64 = (1 << 64) - 1

FAMILIES = (
    "xorshift128",
    "xorshift128plus",
    "xorshift1024",
    "xorshift1024plus",
    "xoroshiro128",
    "xoroshiro128plus",
    "xoroshiro1024",
    "xoroshiro1024plus",
    "control",
)

STATE_WORDS = {
    "xorshift128": 2, "xorshift128plus": 2,
    "xorshift1024": 16, "xorshift1024plus": 16,
    "xoroshiro128": 2, "xoroshiro128plus": 2,
    "xoroshiro1024": 16, "xoroshiro1024plus": 16,
    "control": 1,
}

SPLIT_MODES = ("whole", "low", "high", "interleave", "halves")


def splitmix64(x: int) -> tuple[int, int]:
    """One SplitMix64 step: returns ``(new_state, output)``."""
    x = (x + GOLDEN_GAMMA) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return x, z ^ (z >> 31)


@numba.njit(inline="always")
def _rotl(x, r):
    return (x << numba.uint64(r)) | (x >> numba.uint64(64 - r))


@numba.njit(inline="always")
def _xor128_step(x, y, z, w):
    t = x ^ ((x << numba.uint32(11)) & numba.uint32(0xFFFFFFFF))
    return y, z, w, w ^ (w >> numba.uint32(19)) ^ t ^ (t >> numba.uint32(8))


@numba.njit(cache=True)
def _xorshift128(s, out, plus):
    # four 32-bit words packed two per state slot
    lo32 = numba.uint64(0xFFFFFFFF)
    x = numba.uint32(s[0] & lo32)
    y = numba.uint32(s[0] >> numba.uint64(32))
    z = numba.uint32(s[1] & lo32)
    w = numba.uint32(s[1] >> numba.uint64(32))
    for i in range(out.shape[0]):
        x, y, z, w = _xor128_step(x, y, z, w)
        first = numba.uint64(w)
        x, y, z, w = _xor128_step(x, y, z, w)
        out[i] = first | (numba.uint64(w) << numba.uint64(32))
    s[0] = numba.uint64(x) | (numba.uint64(y) << numba.uint64(32))
    s[1] = numba.uint64(z) | (numba.uint64(w) << numba.uint64(32))


@numba.njit(cache=True)
def _xorshift128plus(s, out, plus):
    s0, s1 = s[0], s[1]
    for i in range(out.shape[0]):
        a = s0
        b = s1
        a ^= a << numba.uint64(23)
        nb = a ^ b ^ (a >> numba.uint64(18)) ^ (b >> numba.uint64(5))
        out[i] = s0 + s1
        s0, s1 = b, nb
    s[0], s[1] = s0, s1


@numba.njit(cache=True)
def _xorshift1024(s, out, plus):
    # s[16] holds the index p
    p = numba.int64(s[16])
    for i in range(out.shape[0]):
        s0 = s[p]
        p = (p + 1) & 15
        s1 = s[p]
        r = s0 + s1
        s1 ^= s1 << numba.uint64(31)
        s[p] = s1 ^ s0 ^ (s1 >> numba.uint64(11)) ^ (s0 >> numba.uint64(30))
        out[i] = r if plus else s[p]
    s[16] = numba.uint64(p)


@numba.njit(cache=True)
def _xoroshiro128(s, out, plus):
    s0, s1 = s[0], s[1]
    for i in range(out.shape[0]):
        out[i] = (s0 + s1) if plus else s0
        s1 ^= s0
        s0 = _rotl(s0, 24) ^ s1 ^ (s1 << numba.uint64(16))
        s1 = _rotl(s1, 37)
    s[0], s[1] = s0, s1


@numba.njit(cache=True)
def _xoroshiro1024(s, out, plus):
    p = numba.int64(s[16])
    for i in range(out.shape[0]):
        q = p
        p = (p + 1) & 15
        s0 = s[p]
        s15 = s[q]
        out[i] = (s0 + s15) if plus else s0
        s15 ^= s0
        s[q] = _rotl(s0, 25) ^ s15 ^ (s15 << numba.uint64(27))
        s[p] = _rotl(s15, 36)
    s[16] = numba.uint64(p)


@numba.njit(cache=True)
def _control(s, out, plus):
    x = s[0]
    for i in range(out.shape[0]):
        x += numba.uint64(GOLDEN_GAMMA)
        z = x
        z = (z ^ (z >> numba.uint64(30))) * numba.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> numba.uint64(27))) * numba.uint64(0x94D049BB133111EB)
        out[i] = z ^ (z >> numba.uint64(31))
    s[0] = x


_KERNELS = {
    "xorshift128": (_xorshift128, False),
    "xorshift128plus": (_xorshift128plus, True),
    "xorshift1024": (_xorshift1024, False),
    "xorshift1024plus": (_xorshift1024, True),
    "xoroshiro128": (_xoroshiro128, False),
    "xoroshiro128plus": (_xoroshiro128, True),
    "xoroshiro1024": (_xoroshiro1024, False),
    "xoroshiro1024plus": (_xoroshiro1024, True),
    "control": (_control, False),
}


@dataclass(frozen=True)
class GeneratorSpec:
    family: str
    seed: int = 0

    def __post_init__(self):
        if self.family not in _KERNELS:
            raise ValueError(f"unknown generator family {self.family!r}; choose from {', '.join(FAMILIES)}")

    @property
    def state_bits(self) -> int:
        return 64 * STATE_WORDS[self.family]


class Generator:
    """A seeded built-in generator producing 64-bit outputs in bulk."""

    def __init__(self, spec: GeneratorSpec, state: np.ndarray | None = None):
        self.spec = spec
        self._fill, self._plus = _KERNELS[spec.family]
        self.state = seed_state(spec) if state is None else np.asarray(state, dtype=np.uint64).copy()

    @classmethod
    def from_state(cls, family: str, words) -> "Generator":
        """Start from explicit state words (the index of 1024-bit engines starts at 0)."""
        words = list(words)
        if family.startswith(("xorshift1024", "xoroshiro1024")):
            words = words + [0]
        return cls(GeneratorSpec(family), np.array(words, dtype=np.uint64))

    def fill(self, out: np.ndarray) -> np.ndarray:
        self._fill(self.state, out, self._plus)
        return out

    def next_outputs(self, n: int) -> np.ndarray:
        return self.fill(np.empty(n, dtype=np.uint64))


def seed_state(spec: GeneratorSpec) -> np.ndarray:
    """Fill the state from a 64-bit seed with SplitMix64; never all zeros."""
    n = STATE_WORDS[spec.family]
    x = spec.seed & MASK64
    words = []
    for _ in range(n):
        x, z = splitmix64(x)
        words.append(z)
    if spec.family != "control" and not any(words):
        words[0] = 1
    if n == 16:
        words.append(0)
    return np.array(words, dtype=np.uint64)


def seed_generator(spec: GeneratorSpec) -> Generator:
    return Generator(spec)


# --- word sources ------------------------------------------------------------

class WordSource:
    """Chunks of ``w``-bit words (as uint64 arrays) from a generator or a byte stream.

    An empty chunk signals end of stream.
    """

    def __init__(self, w: int):
        self.w = w

    def read(self, n: int) -> np.ndarray:
        raise NotImplementedError

    def __iter__(self):
        while True:
            chunk = self.read(1 << 16)
            if not chunk.size:
                return
            yield from (int(x) for x in chunk)


def _split(outputs: np.ndarray, w: int, mode: str) -> np.ndarray:
    if mode == "whole":
        return outputs
    mask = np.uint64((1 << w) - 1)
    if mode == "low":
        return outputs & mask
    if mode == "high":
        return outputs >> np.uint64(64 - w)
    pieces = 64 // w
    shifts = np.arange(pieces, dtype=np.uint64) * np.uint64(w)
    if mode == "interleave":
        shifts = shifts[::-1]
    return ((outputs[:, None] >> shifts[None, :]) & mask).reshape(-1)


class GeneratorSource(WordSource):
    """Words from a built-in generator.

    ``split`` is one of ``whole`` (64-bit words), ``low`` / ``high`` (the low or
    high ``w`` bits of each output), ``halves`` (every output cut into
    ``64 // w`` words, least significant piece first) and ``interleave``
    (same, most significant piece first).
    """

    def __init__(self, gen: Generator, w: int = 64, split: str = "whole"):
        super().__init__(w)
        if split not in SPLIT_MODES:
            raise ValueError(f"unknown split mode {split!r}")
        if split == "whole" and w != 64:
            raise ValueError(f"split mode 'whole' needs w=64 for 64-bit generators, got w={w}")
        if split in ("halves", "interleave") and w == 64:
            raise ValueError(f"split mode {split!r} needs w < 64")
        self.gen = gen
        self.split = split
        self._per_output = 64 // w if split in ("halves", "interleave") else 1
        self._pending = np.empty(0, dtype=np.uint64)

    def read(self, n: int) -> np.ndarray:
        if self._per_output == 1:
            return _split(self.gen.next_outputs(n), self.w, self.split)
        out = self._pending
        if out.size < n:
            need = -(-(n - out.size) // self._per_output)
            out = np.concatenate([out, _split(self.gen.next_outputs(need), self.w, self.split)])
        self._pending = out[n:]
        return out[:n]


class RawSource(WordSource):
    """Little-endian ``w``-bit words from a binary stream, no header.

    A trailing partial word is discarded.
    """

    def __init__(self, stream, w: int = 64):
        super().__init__(w)
        self.stream = stream
        self._dtype = np.dtype(f"<u{w // 8}")
        self._carry = b""

    def read(self, n: int) -> np.ndarray:
        size = self._dtype.itemsize
        want = n * size - len(self._carry)
        data = self._carry
        while want > 0:
            piece = self.stream.read(want)
            if not piece:
                break
            data += piece
            want -= len(piece)
        whole = len(data) // size * size
        self._carry = data[whole:]
        return np.frombuffer(data[:whole], dtype=self._dtype).astype(np.uint64)


class ArraySource(WordSource):
    """Words from an in-memory sequence."""

    def __init__(self, words, w: int = 64):
        super().__init__(w)
        self.words = np.asarray(words, dtype=np.uint64)
        self._pos = 0

    def read(self, n: int) -> np.ndarray:
        out = self.words[self._pos:self._pos + n]
        self._pos += out.size
        return out


def transitional_filter(words: np.ndarray, w: int, previous: int | None = None) -> np.ndarray:
    """Xor a word stream with itself shifted forward by one bit.

    The stream is read least significant bit first, and every bit is xored
    with the bit before it: output word ``i`` is
    ``x[i] ^ ((x[i] << 1) | (x[i-1] >> (w-1)))``. Without ``previous`` (the
    word before the chunk) the first word has no predecessor and is dropped.
    """
    words = np.asarray(words, dtype=np.uint64)
    if previous is not None:
        prev = np.concatenate([np.array([previous], dtype=np.uint64), words[:-1]])
    else:
        prev = words[:-1]
        words = words[1:]
    mask = np.uint64((1 << w) - 1)
    shifted = ((words << np.uint64(1)) & mask) | (prev >> np.uint64(w - 1))
    return words ^ shifted


class TransitionalSource(WordSource):
    """The transitional stream of another source; one word shorter."""

    def __init__(self, inner: WordSource):
        super().__init__(inner.w)
        self.inner = inner
        self._prev = None

    def read(self, n: int) -> np.ndarray:
        while True:
            chunk = self.inner.read(n if self._prev is not None else n + 1)
            if not chunk.size:
                return chunk
            out = transitional_filter(chunk, self.w, self._prev)
            self._prev = int(chunk[-1])
            if out.size:
                return out
