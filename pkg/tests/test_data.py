import math
from fractions import Fraction

import numpy as np
import pytest

from fpsum.data import ExactPrefix, choose_shift, gen_fuzz, gen_normal, gen_uniform_shifted, to_format
from fpsum.fpmodel import BINARY16, is_representable


def test_uniform_shifted_range_and_repeatability():
    x = gen_uniform_shifted(1e4, 1000, 3)
    assert x.min() >= 1e4 and x.max() <= 1e4 + 1
    assert np.array_equal(x, gen_uniform_shifted(1e4, 1000, 3))
    assert not np.array_equal(x, gen_uniform_shifted(1e4, 1000, 4))
    with pytest.raises(ValueError):
        gen_uniform_shifted(-1, 10, 0)


def test_normal_mean():
    x = gen_normal(10**5, 11)
    # mean of N(0,1) draws within 4 standard errors
    assert abs(x.mean()) < 4 / math.sqrt(x.size)
    assert 0.98 < x.std() < 1.02


def test_half_precision_values_are_representable():
    for x in (gen_normal(200, 1, "binary16"), gen_uniform_shifted(0, 200, 1, "binary16", lattice=True)):
        assert all(is_representable(v, BINARY16) for v in x)
    q = 2.0**-14
    x = gen_normal(500, 2, "binary16", lattice=True)
    assert np.all(np.rint(x / q) * q == x)


@pytest.mark.parametrize("kind", ["normal", "uniform", "clustered", "wide", "ties"])
def test_fuzz_kinds(kind):
    x = gen_fuzz(np.random.default_rng(0), 64, BINARY16, kind)
    assert x.shape == (64,)
    assert all(is_representable(v, BINARY16) for v in x)
    with pytest.raises(ValueError):
        gen_fuzz(np.random.default_rng(0), 4, BINARY16, "nope")


def test_to_format_flushes_tiny_values():
    assert list(to_format([1e-9, 1.0], "binary16")) == [0.0, 1.0]


def test_choose_shift():
    assert choose_shift([0.0, 2.0]) == 1.0
    assert choose_shift([5.5] * 7) == 5.5
    assert choose_shift([1.0, 2.0 + 2.0**-51]) == 1.5 + 2.0**-52
    # midpoint 1 + 2^-11 is a tie in binary16 and rounds to even
    assert choose_shift([1.0, 1.0 + 2.0**-10], "binary16") == 1.0
    with pytest.raises(ValueError):
        choose_shift([])


def test_exact_prefix():
    x = [1e16, 1.0, -1e16, 0.5]
    ep = ExactPrefix(x)
    assert ep.total() == 1.5
    assert ep.prefix(2) == Fraction(10**16 + 1)
    assert list(ep.prefixes()) == [1e16, 1e16, 1.0, 1.5]
    assert list(ep.centered(0.5)) == [1e16 - 0.5, 1e16, -0.5, -0.5]
    assert list(ep.centered_terms(1.0)) == [1e16 - 1, 0.0, -1e16 - 1, -0.5]
    assert ep.rel_error(4, 1.0) == pytest.approx(1 / 3)
    assert math.isnan(ExactPrefix([1.0, -1.0]).rel_error(2, 0.0))
    assert ExactPrefix([]).total() == 0.0
