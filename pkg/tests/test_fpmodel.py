import math

import gmpy2
import numpy as np
import pytest
from gmpy2 import mpfr
from hypothesis import given, settings, strategies as st

from fpsum.fpmodel import (
    BINARY16,
    BINARY32,
    BINARY64,
    FpFormat,
    NearestEven,
    OpStream,
    RangeError,
    StochasticNearness,
    effective_u,
    fp_add,
    fp_mul,
    fp_sub,
    is_representable,
    oracle_bits,
    parse_format,
    round_array,
    round_value,
    unit_roundoff,
)

RNE = NearestEven()


def test_unit_roundoff():
    assert unit_roundoff(BINARY64) == gmpy2.mul_2exp(mpfr(1), -53)
    assert unit_roundoff(BINARY16) == gmpy2.mul_2exp(mpfr(1), -11)
    assert unit_roundoff(BINARY32) == gmpy2.mul_2exp(mpfr(1), -24)
    assert BINARY16.u == 2.0**-11


def test_parse_format():
    assert parse_format("binary16") is BINARY16
    f = parse_format("custom:p=12,emin=-14,emax=15")
    assert (f.precision_bits, f.emin, f.emax) == (12, -14, 15)
    with pytest.raises(ValueError):
        parse_format("binary8")
    with pytest.raises(ValueError):
        FpFormat(1, -3, 3)
    with pytest.raises(ValueError):
        FpFormat(5, 3, 3)


def test_round_exact_value():
    assert round_value(mpfr(1), BINARY16, RNE) == (1, 0)


def test_round_2049_nearest():
    v, d = round_value(mpfr(2049), BINARY16, RNE)
    assert v == 2048
    # delta * 2049 == -1 up to the oracle precision
    with gmpy2.context(precision=200):
        assert abs(d * 2049 + 1) < mpfr(2) ** -60


def test_round_2049_stochastic_unbiased():
    stream = OpStream(42)
    n = 100_000
    ups = 0
    deltas = []
    for i in range(n):
        v, d = round_value(mpfr(2049), BINARY16, StochasticNearness(42), draw=stream.uniform(i))
        assert v in (2048, 2050)
        ups += v == 2050
        deltas.append(float(d))
    assert abs(ups / n - 0.5) < 4 * 0.5 / math.sqrt(n)
    assert abs(np.mean(deltas)) < 4 * 2 * BINARY16.u / math.sqrt(n)


def test_stochastic_needs_draw():
    with pytest.raises(ValueError):
        round_value(mpfr(2049), BINARY16, StochasticNearness(1))


def test_range_errors():
    with pytest.raises(RangeError):
        round_value(mpfr(70000), BINARY16, RNE)
    with pytest.raises(RangeError):
        round_value(mpfr(2) ** -20, BINARY16, RNE)
    with pytest.raises(RangeError):
        fp_sub(mpfr(3) * mpfr(2) ** -15, mpfr(2) ** -14, BINARY16, RNE)


def test_fp_ops():
    assert fp_add(mpfr(1), mpfr(1), BINARY16, RNE) == 2
    assert fp_add(mpfr(2048), mpfr(1), BINARY16, RNE) == 2048
    assert fp_add(mpfr(0), mpfr(0), BINARY16, RNE) == 0
    assert fp_sub(mpfr(2050), mpfr(2048), BINARY16, RNE) == 2
    assert fp_sub(mpfr(1.5), mpfr(0), BINARY16, RNE) == 1.5
    assert fp_mul(mpfr(3), mpfr(0.5), BINARY16, RNE) == 1.5


def test_is_representable():
    assert is_representable(2048, BINARY16)
    assert not is_representable(2049, BINARY16)
    assert not is_representable(0.1, BINARY16)
    assert not is_representable(2.0**-20, BINARY16)
    assert is_representable(65504, BINARY16)
    assert not is_representable(65536, BINARY16)


def test_effective_u():
    assert effective_u(BINARY16, RNE) == BINARY16.u
    assert effective_u(BINARY16, StochasticNearness(3)) == 2 * BINARY16.u


def test_oracle_bits(monkeypatch):
    monkeypatch.delenv("FPSUM_ORACLE_BITS", raising=False)
    assert oracle_bits(BINARY16, 64) == 44 + 6 + 32
    monkeypatch.setenv("FPSUM_ORACLE_BITS", "300")
    assert oracle_bits(BINARY16, 64) == 300


def test_opstream_addressing():
    s = OpStream((1, 2))
    blk = s.block(5, 11)
    assert [s.uniform(i) for i in range(5, 16)] == blk.tolist()
    assert OpStream((1, 2)).uniform(999) == s.uniform(999)
    assert OpStream((1, 3)).uniform(0) != s.uniform(0)
    assert ((blk >= 0) & (blk < 1)).all()


f16 = st.floats(min_value=-60000, max_value=60000, width=16, allow_subnormal=False).filter(
    lambda v: v == 0 or abs(v) >= 2.0**-14
)


@settings(max_examples=400, deadline=None)
@given(f16, f16)
def test_add_matches_hardware_half(a, b):
    # float32 holds 2*11+2 bits, so float32-then-float16 rounding is innocuous
    with np.errstate(over="ignore"):
        ref = np.float16(np.float32(a) + np.float32(b))
    if not np.isfinite(ref) or (ref != 0 and abs(float(ref)) < 2.0**-14) or abs(a + b) > 65504:
        return
    if a + b != 0 and abs(a + b) < 2.0**-14:
        return
    assert fp_add(mpfr(a), mpfr(b), BINARY16, RNE) == float(ref)
    assert round_array(np.array([a + b]), BINARY16)[0] == float(ref)


@settings(max_examples=300, deadline=None)
@given(st.floats(min_value=2.0**-14, max_value=60000), st.floats(0, 1, exclude_max=True), st.booleans())
def test_round_array_matches_scalar(x, u, neg):
    x = -x if neg else x
    mode = StochasticNearness(0)
    v, d = round_value(mpfr(x), BINARY16, mode, draw=u)
    assert round_array(np.array([x]), BINARY16, np.array([u]))[0] == v
    assert abs(float(d)) <= 2 * BINARY16.u
    v, d = round_value(mpfr(x), BINARY16, RNE)
    assert round_array(np.array([x]), BINARY16)[0] == v
    assert abs(float(d)) <= BINARY16.u


def test_round_array_subnormal_flag():
    x = np.array([3 * 2.0**-24])
    with pytest.raises(RangeError):
        round_array(x, BINARY16)
    assert round_array(x, BINARY16, subnormal=True)[0] == 3 * 2.0**-24
    with pytest.raises(RangeError):
        round_array(np.array([70000.0]), BINARY16)
