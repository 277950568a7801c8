import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fpsum.algorithms import compensated_sum, general_sum, shifted_sum
from fpsum.batch import batch_compensated, batch_general, batch_sequential, batch_shifted, check_carrier
from fpsum.data import choose_shift, gen_fuzz
from fpsum.expressions import general_recursive
from fpsum.fpmodel import BINARY16, NearestEven, StochasticNearness, parse_format
from fpsum.sumtree import make_tree, sequential_tree

MODES = st.sampled_from(["rne", "sr"])
KINDS = st.sampled_from(["sequential", "pairwise", "random"])


def _mode(name, seed):
    return NearestEven() if name == "rne" else StochasticNearness((seed, 7))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 40), st.integers(0, 10**6), KINDS, MODES)
def test_general_matches_scalar(n, seed, kind, mode):
    x = gen_fuzz(np.random.default_rng(seed), n, BINARY16)
    tree = make_tree(kind, n, seed)
    m = _mode(mode, seed)
    b = batch_general(tree, x, BINARY16, m)
    t = general_sum(tree, x, BINARY16, m)
    assert b.computed[0] == float(t.result)
    assert b.exact[0] == float(t.exact_result)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 40), st.integers(0, 10**6), KINDS, MODES)
def test_shifted_matches_scalar(n, seed, kind, mode):
    x = gen_fuzz(np.random.default_rng(seed), n, BINARY16)
    c = choose_shift(x, BINARY16, lattice=True)
    tree = make_tree(kind, n, seed)
    m = _mode(mode, seed)
    b = batch_shifted(tree, x, c, BINARY16, m)
    t = shifted_sum(tree, x, c, BINARY16, m)
    assert b.computed[0] == float(t.result)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 40), st.integers(0, 10**6), MODES)
def test_compensated_matches_scalar(n, seed, mode):
    x = gen_fuzz(np.random.default_rng(seed), n, BINARY16)
    m = _mode(mode, seed)
    b = batch_compensated(x, BINARY16, m, prefixes=True)
    t = compensated_sum(x, BINARY16, m)
    assert [float(t.computed[k]) for k in range(1, n + 1)] == list(b.computed[0])


def test_sequential_prefixes():
    x = [2048.0, 1.0, 1.0, 4.0]
    b = batch_sequential(x, BINARY16)
    assert list(b.computed[0]) == [2048, 2048, 2048, 2052]
    assert list(b.exact[0]) == [2048, 2049, 2050, 2054]


def test_child_errors_match_recursion():
    n, seed = 33, 5
    x = gen_fuzz(np.random.default_rng(seed), n, BINARY16)
    tree = make_tree("random", n, seed)
    b = batch_general(tree, x, BINARY16, record=True)
    f = general_recursive(general_sum(tree, x, BINARY16)).extras["f"]
    # f rebuilt from logged roundoffs agrees to their stored precision
    slack = 2.0**-60 * np.abs(x).sum()
    for k, fk in f.items():
        assert abs(b.child_errors[k][0] - float(fk)) <= slack


def test_trials_are_independent_streams():
    x = gen_fuzz(np.random.default_rng(0), 64, BINARY16, "uniform")
    b = batch_general(sequential_tree(64), x, BINARY16, StochasticNearness(3), trials=200)
    assert b.computed.shape == (200,)
    assert len(set(b.computed)) > 1
    assert np.all(b.exact == b.exact[0])
    again = batch_general(sequential_tree(64), x, BINARY16, StochasticNearness(3), trials=200)
    assert np.array_equal(b.computed, again.computed)


def test_carrier_checks():
    check_carrier(BINARY16, 10**6)
    with pytest.raises(ValueError):
        check_carrier(parse_format("binary32"), 10)
    with pytest.raises(ValueError):
        batch_general(sequential_tree(2), [1.0, 1.0 / 3], BINARY16)
    with pytest.raises(ValueError):
        batch_general(sequential_tree(3), [1.0, 1.0], BINARY16)
    with pytest.raises(ValueError):
        batch_shifted(sequential_tree(2), [1.0, 2.0], 0.1, BINARY16)
    with pytest.raises(ValueError):
        batch_general(sequential_tree(2), np.ones((3, 2)), BINARY16, trials=4)
