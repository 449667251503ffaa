"""The float32 helpers must match IEEE binary32 hardware bit for bit."""

import math
import struct

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from spnforge.fp32 import add32, bits32, f32, mul32, same_bits

finite_f32 = st.floats(width=32, allow_nan=False, allow_infinity=False)


def np_bits(x) -> int:
    return int(np.float32(x).view(np.uint32))


@given(finite_f32, finite_f32)
@settings(max_examples=300, deadline=None)
def test_add_matches_numpy(a, b):
    ours = add32(a, b)
    with np.errstate(all="ignore"):
        theirs = np.float32(a) + np.float32(b)
    assert bits32(ours) == np_bits(theirs)


@given(finite_f32, finite_f32)
@settings(max_examples=300, deadline=None)
def test_mul_matches_numpy(a, b):
    ours = mul32(a, b)
    with np.errstate(all="ignore"):
        theirs = np.float32(a) * np.float32(b)
    assert bits32(ours) == np_bits(theirs)


@given(st.floats(allow_nan=False))
@settings(max_examples=300, deadline=None)
def test_round_matches_numpy(x):
    with np.errstate(all="ignore"):
        assert bits32(f32(x)) == np_bits(x)


def test_overflow_rounds_like_hardware():
    # Just below the rounding boundary stays finite; at and above goes inf.
    below = 2.0**128 - 2.0**103 - 2.0**100
    at = 2.0**128 - 2.0**103
    assert math.isfinite(f32(below))
    assert math.isinf(f32(at))
    assert f32(-at) == -math.inf
    with np.errstate(all="ignore"):
        assert bits32(f32(below)) == np_bits(below)
        assert bits32(f32(at)) == np_bits(at)


def test_special_values():
    assert math.isnan(f32(float("nan")))
    assert f32(float("inf")) == math.inf
    assert struct.pack("<f", f32(-0.0)) == struct.pack("<f", -0.0)
    assert same_bits(0.0, 0.0) and not same_bits(0.0, -0.0)
