"""Three summation algorithms on one binary16 input, with their error bounds."""

from fpsum import bounds as B
from fpsum.algorithms import compensated_sum, general_sum, shifted_sum
from fpsum.data import choose_shift, gen_uniform_shifted
from fpsum.expressions import EXACT_IDS, evaluate_all
from fpsum.fpmodel import BINARY16
from fpsum.sumtree import pairwise_tree, sequential_tree

x = gen_uniform_shifted(0.0, 3000, seed=4, fmt="binary16", lattice=True)
n = x.size
c = choose_shift(x, BINARY16, lattice=True)

runs = {
    "sequential": general_sum(sequential_tree(n), x, BINARY16),
    "pairwise": general_sum(pairwise_tree(n), x, BINARY16),
    "shifted": shifted_sum(sequential_tree(n), x, c, BINARY16),
    "compensated": compensated_sum(x, BINARY16),
}
s = float(runs["sequential"].exact_result)
print(f"n = {n}, exact sum = {s!r}, u = {BINARY16.u:.3g}")
for name, tr in runs.items():
    print(f"{name:>12}: computed {float(tr.result):>10g}  relative error {abs(float(tr.e_n)) / abs(s):.3e}")

# the exact error expressions reproduce each measured error
for name in ("pairwise", "compensated"):
    worst = max(abs(float(r.residual)) for r in evaluate_all(runs[name]) if r.expression_id in EXACT_IDS)
    print(f"{name}: largest residual of the exact expressions {worst:.2e}")

tree = sequential_tree(n)
nodes = B.node_sums(x, tree)
print("bounds on |error| for sequential summation:")
for rep in (
    B.det_bound_general(x, tree, BINARY16),
    B.prob_bound_first_order(nodes, BINARY16, 0.01),
    B.prob_bound_model1(nodes, tree.height, n, BINARY16, 0.01, 0.01),
):
    print(f"  {rep.bound_id:<28} {rep.value:.4g}{'' if rep.valid else '  (not applicable)'}")
print(f"compensated, second order: {B.comp_second_order_det_bound(x, BINARY16).value:.4g}")
print(f"measured |error|: sequential {abs(float(runs['sequential'].e_n)):.4g}, "
      f"compensated {abs(float(runs['compensated'].e_n)):.4g}")
