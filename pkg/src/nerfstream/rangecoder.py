"""Adaptive binary range coder shared by the parameter and image codecs.

32-bit range, 16-bit probability states (probability of a 0 bin), byte-wise
renormalization with carry propagation. Integer arithmetic only, so streams
are identical on every platform.
"""

from __future__ import annotations

PROB_BITS = 16
PROB_INIT = 1 << (PROB_BITS - 1)
ADAPT_SHIFT = 5
_TOP = 1 << 24
_MASK32 = 0xFFFFFFFF


class DecodeError(ValueError):
    """Raised on truncated or inconsistent streams; ``offset`` is the byte position."""

    def __init__(self, message: str, offset: int | None = None):
        super().__init__(message if offset is None else f"{message} (byte offset {offset})")
        self.offset = offset


class Contexts:
    """A bank of adaptive probability states."""

    __slots__ = ("p",)

    def __init__(self, count: int):
        self.p = [PROB_INIT] * count

    def __len__(self):
        return len(self.p)


class RangeEncoder:
    def __init__(self):
        self.low = 0
        self.range = _MASK32
        self._cache = 0
        self._cache_size = 1
        self._out = bytearray()

    def _shift_low(self):
        if self.low < 0xFF000000 or self.low > _MASK32:
            carry = self.low >> 32
            temp = self._cache
            while True:
                self._out.append((temp + carry) & 0xFF)
                temp = 0xFF
                self._cache_size -= 1
                if self._cache_size == 0:
                    break
            self._cache = (self.low >> 24) & 0xFF
        self._cache_size += 1
        self.low = (self.low << 8) & _MASK32

    def encode(self, bit: int, ctx: Contexts, i: int) -> None:
        p = ctx.p[i]
        bound = (self.range >> PROB_BITS) * p
        if bit:
            self.low += bound
            self.range -= bound
            ctx.p[i] = p - (p >> ADAPT_SHIFT)
        else:
            self.range = bound
            ctx.p[i] = p + (((1 << PROB_BITS) - p) >> ADAPT_SHIFT)
        while self.range < _TOP:
            self.range <<= 8
            self._shift_low()

    def encode_bypass(self, bit: int) -> None:
        self.range >>= 1
        if bit:
            self.low += self.range
        while self.range < _TOP:
            self.range <<= 8
            self._shift_low()

    def finish(self) -> bytes:
        for _ in range(5):
            self._shift_low()
        return bytes(self._out)


class RangeDecoder:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0
        self.range = _MASK32
        self.code = 0
        for _ in range(5):
            self.code = (self.code << 8) | self._byte()
        self.code &= _MASK32

    def _byte(self) -> int:
        if self.pos >= len(self.data):
            raise DecodeError("stream truncated", self.pos)
        b = self.data[self.pos]
        self.pos += 1
        return b

    def decode(self, ctx: Contexts, i: int) -> int:
        p = ctx.p[i]
        bound = (self.range >> PROB_BITS) * p
        if self.code < bound:
            self.range = bound
            ctx.p[i] = p + (((1 << PROB_BITS) - p) >> ADAPT_SHIFT)
            bit = 0
        else:
            self.code -= bound
            self.range -= bound
            ctx.p[i] = p - (p >> ADAPT_SHIFT)
            bit = 1
        while self.range < _TOP:
            self.range <<= 8
            self.code = ((self.code << 8) | self._byte()) & _MASK32
        return bit

    def decode_bypass(self) -> int:
        self.range >>= 1
        bit = 0
        if self.code >= self.range:
            self.code -= self.range
            bit = 1
        while self.range < _TOP:
            self.range <<= 8
            self.code = ((self.code << 8) | self._byte()) & _MASK32
        return bit

    def check_consumed(self) -> None:
        """A well-formed stream is consumed exactly; leftovers mean corruption."""
        if self.pos != len(self.data):
            raise DecodeError(f"{len(self.data) - self.pos} unread bytes after last symbol", self.pos)


# --- Exp-Golomb (k=0) with adaptive bins ---------------------------------

EG_MAX_PREFIX = 32


class ExpGolombContexts:
    """Per-position contexts for unary prefix bins and per-(length, position) suffix bins."""

    def __init__(self, prefix_slots: int = 18):
        self.slots = prefix_slots
        self.prefix = Contexts(prefix_slots)
        self.suffix = Contexts(prefix_slots * prefix_slots)


def encode_eg0(enc: RangeEncoder, value: int, ctx: ExpGolombContexts) -> None:
    if value < 0:
        raise ValueError("Exp-Golomb value must be nonnegative")
    v = value + 1
    n = v.bit_length() - 1
    last = ctx.slots - 1
    for k in range(n):
        enc.encode(1, ctx.prefix, min(k, last))
    enc.encode(0, ctx.prefix, min(n, last))
    for k in range(n - 1, -1, -1):
        bit = (v >> k) & 1
        if n < ctx.slots:
            enc.encode(bit, ctx.suffix, n * ctx.slots + k)
        else:
            enc.encode_bypass(bit)


def decode_eg0(dec: RangeDecoder, ctx: ExpGolombContexts) -> int:
    n = 0
    last = ctx.slots - 1
    while dec.decode(ctx.prefix, min(n, last)):
        n += 1
        if n > EG_MAX_PREFIX:
            raise DecodeError("Exp-Golomb prefix too long", dec.pos)
    v = 1
    for k in range(n - 1, -1, -1):
        bit = dec.decode(ctx.suffix, n * ctx.slots + k) if n < ctx.slots else dec.decode_bypass()
        v = (v << 1) | bit
    return v - 1
