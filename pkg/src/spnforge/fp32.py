"""Strict IEEE-754 binary32 scalar arithmetic carried on Python floats.

Every value flowing through the interpreters and the machine simulator is a
binary32 value embedded exactly in a Python float (binary64 is a superset).
Each add/mul result is re-rounded to binary32. For two binary32 operands the
binary64 intermediate is wide enough that the double rounding is exact
(2*24 + 2 <= 53), so `add32`/`mul32` match native float32 hardware bit for
bit, with round-to-nearest-even and no FMA contraction.
"""

import math
import struct

_PACK = struct.Struct("<f").pack
_UNPACK = struct.Struct("<f").unpack

F32_MAX = (2.0 - 2.0**-23) * 2.0**127
# Round-to-nearest boundary between F32_MAX and overflow: 2^128 - 2^103.
_INF_BOUNDARY = 2.0**128 - 2.0**103


def f32(x: float) -> float:
    """Round a float to the nearest binary32 value (ties to even)."""
    try:
        return _UNPACK(_PACK(x))[0]
    except OverflowError:
        # struct refuses finite values beyond the binary32 range.
        if abs(x) >= _INF_BOUNDARY:
            return math.copysign(math.inf, x)
        return math.copysign(F32_MAX, x)


def add32(a: float, b: float) -> float:
    return f32(a + b)


def mul32(a: float, b: float) -> float:
    return f32(a * b)


def bits32(x: float) -> int:
    """Raw bit pattern of the binary32 encoding, for bit-exact comparisons."""
    try:
        return int.from_bytes(_PACK(x), "little")
    except OverflowError:
        return int.from_bytes(_PACK(f32(x)), "little")


def same_bits(a: float, b: float) -> bool:
    return bits32(a) == bits32(b)
