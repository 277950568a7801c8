"""Centering clustered data before summing, compared with plain recursive summation."""

import numpy as np

from fpsum.data import ExactPrefix, choose_shift, gen_normal, gen_uniform_shifted

n, trials = 1000, 100
for label, make in (("1e4 + U[0,1]", lambda s: gen_uniform_shifted(1e4, n, s)),
                    ("N(0,1)", lambda s: gen_normal(n, s))):
    wins = ties = 0
    for seed in range(trials):
        x = make(seed)
        exact = ExactPrefix(x)
        c = choose_shift(x)
        plain = exact.rel_error(n, float(np.cumsum(x)[-1]))
        shifted = exact.rel_error(n, float(np.cumsum(x - c)[-1]) + n * c)
        wins += shifted < plain
        ties += shifted == plain
    print(f"{label:>14}: shifted better in {wins}/{trials}, tied in {ties}")
